#!/usr/bin/env python3
"""
Fetch a published checkpoint into the model store.
"""

import argparse
import logging
import sys
from pathlib import Path

import requests

# Add parent directory to path
sys.path.append(str(Path(__file__).parent.parent))

from config import settings
from inference.checkpoint import CheckpointError
from utils.checkpoint_store import ArtifactNameError, CheckpointStore

logging.basicConfig(
    level=logging.INFO,
    format='%(asctime)s - %(name)s - %(levelname)s - %(message)s'
)
logger = logging.getLogger(__name__)


def main():
    parser = argparse.ArgumentParser(description="Download a checkpoint into the model store")
    parser.add_argument("url")
    parser.add_argument("name", help="Name to store the checkpoint under")
    parser.add_argument("--sha256", help="Expected SHA-256 of the file")
    parser.add_argument("--model-dir", default=settings.model_cache_dir)
    args = parser.parse_args()

    store = CheckpointStore(args.model_dir)
    try:
        path = store.download_checkpoint(args.url, args.name, expected_sha256=args.sha256)
    except (requests.RequestException, OSError, CheckpointError, ArtifactNameError) as e:
        logger.error(f"❌ Could not fetch {args.url}: {e}")
        sys.exit(2)

    info = store.describe(args.name)
    logger.info(f"✅ {args.name} ready at {path} ({info['parameters']} parameters, "
                f"style={info['metadata'].get('style')})")


if __name__ == "__main__":
    main()
