"""Image operators, PNG I/O, seeding helpers and the checkpoint store.

Import submodules directly (``from utils.image_ops import ...``); this package
does not import torch.
"""
