import os
from kombu import Queue

# Celery Configuration
broker_url = os.getenv('REDIS_BROKER', 'redis://localhost:6379/0')
result_backend = os.getenv('REDIS_BACKEND', 'redis://localhost:6379/0')

# Task settings
task_serializer = 'json'
accept_content = ['json']
result_serializer = 'json'
timezone = 'UTC'
enable_utc = True

# One task at a time per worker process
worker_prefetch_multiplier = 1
task_acks_late = True
worker_max_tasks_per_child = 10
worker_pool = 'prefork'
worker_concurrency = int(os.getenv('MAX_WORKERS', 2))

task_compression = 'gzip'
result_compression = 'gzip'
task_ignore_result = False
result_expires = 24 * 3600
result_persistent = True
task_track_started = True

# Default limits suit patch generation and stylization
task_soft_time_limit = 600
task_time_limit = 900
task_annotations = {
    'tasks.train_model': {
        'soft_time_limit': int(os.getenv('TRAIN_SOFT_TIME_LIMIT', 12 * 3600)),
        'time_limit': int(os.getenv('TRAIN_TIME_LIMIT', 12 * 3600 + 600)),
    },
}

worker_disable_rate_limits = True

# Queue settings
task_routes = {
    'tasks.generate_patches': {'queue': 'patches'},
    'tasks.train_model': {'queue': 'training'},
    'tasks.stylize_image': {'queue': 'styling'},
}

task_default_queue = 'default'
task_queues = (
    Queue('default'),
    Queue('patches'),
    Queue('training'),
    Queue('styling'),
)

# Retry settings
task_default_retry_delay = 60
task_max_retries = 3
