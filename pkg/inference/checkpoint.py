"""Binary checkpoint format.

Layout::

    b"SPCK"                      magic, 4 bytes
    uint32 LE                    format version
    uint32 LE                    header length in bytes
    header                       UTF-8 JSON: config, metadata, tensor directory
    tensor data                  float32 LE, in directory order

Each directory entry records ``name``, ``shape``, ``offset`` (relative to the
start of the tensor data) and ``nbytes``.
"""

import json
import logging
import struct
from collections import OrderedDict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Union

import numpy as np
import torch
from pydantic import ValidationError

from inference.unet import ModelState, UNetConfig, UNetShapeError, model_from_params

logger = logging.getLogger(__name__)

MAGIC = b"SPCK"
FORMAT_VERSION = 1
_PREAMBLE = struct.Struct("<4sII")
_DTYPE = np.dtype("<f4")


class CheckpointError(RuntimeError):
    """Unreadable or inconsistent checkpoint file."""


class BadMagicError(CheckpointError):
    pass


class UnsupportedVersionError(CheckpointError):
    pass


class TruncatedCheckpointError(CheckpointError):
    pass


class TensorDirectoryError(CheckpointError):
    pass


@dataclass
class Checkpoint:
    config: UNetConfig
    params: "OrderedDict[str, np.ndarray]"
    metadata: Dict[str, Any] = field(default_factory=dict)
    version: int = FORMAT_VERSION

    def parameter_count(self) -> int:
        return int(sum(p.size for p in self.params.values()))


def checkpoint_from_model(model: ModelState, metadata: Dict[str, Any] = None) -> Checkpoint:
    params = OrderedDict(
        (name, p.detach().to("cpu", torch.float32).numpy().copy())
        for name, p in model.params.items()
    )
    return Checkpoint(config=model.config, params=params, metadata=dict(metadata or {}))


def model_from_checkpoint(checkpoint: Checkpoint) -> ModelState:
    try:
        return model_from_params(checkpoint.config, checkpoint.params)
    except UNetShapeError as e:
        raise TensorDirectoryError(f"Checkpoint tensors do not fit the architecture: {e}") from e


def encode_checkpoint(checkpoint: Checkpoint) -> bytes:
    directory = []
    chunks = []
    offset = 0
    for name, array in checkpoint.params.items():
        data = np.ascontiguousarray(array, dtype=_DTYPE).tobytes()
        directory.append({"name": name, "shape": list(array.shape), "offset": offset, "nbytes": len(data)})
        chunks.append(data)
        offset += len(data)
    header = json.dumps({
        "config": checkpoint.config.dict(),
        "metadata": checkpoint.metadata,
        "tensors": directory,
    }, sort_keys=True).encode("utf-8")
    return _PREAMBLE.pack(MAGIC, checkpoint.version, len(header)) + header + b"".join(chunks)


def decode_checkpoint(blob: bytes) -> Checkpoint:
    if len(blob) < _PREAMBLE.size:
        raise TruncatedCheckpointError(f"File is {len(blob)} bytes, shorter than the {_PREAMBLE.size}-byte preamble")
    magic, version, header_len = _PREAMBLE.unpack_from(blob)
    if magic != MAGIC:
        raise BadMagicError(f"Bad magic {magic!r}, expected {MAGIC!r}")
    if version != FORMAT_VERSION:
        raise UnsupportedVersionError(f"Unsupported checkpoint version {version} (supported: {FORMAT_VERSION})")

    start = _PREAMBLE.size
    if len(blob) < start + header_len:
        raise TruncatedCheckpointError(f"Header claims {header_len} bytes but only {len(blob) - start} remain")
    try:
        header = json.loads(blob[start:start + header_len].decode("utf-8"))
        config = UNetConfig.parse_obj(header["config"])
        metadata = header.get("metadata", {})
        directory = [
            (str(entry["name"]), tuple(int(d) for d in entry["shape"]),
             int(entry["offset"]), int(entry["nbytes"]))
            for entry in header["tensors"]
        ]
    except (UnicodeDecodeError, json.JSONDecodeError, KeyError, TypeError, ValueError, ValidationError) as e:
        raise TensorDirectoryError(f"Malformed checkpoint header: {e}") from e

    data = memoryview(blob)[start + header_len:]
    total = sum(nbytes for _, _, _, nbytes in directory)
    if total != len(data):
        raise TruncatedCheckpointError(
            f"Tensor directory describes {total} bytes but {len(data)} bytes follow the header"
        )

    params = OrderedDict()
    expected_offset = 0
    for name, shape, offset, nbytes in directory:
        if offset != expected_offset or nbytes != int(np.prod(shape, dtype=np.int64)) * _DTYPE.itemsize:
            raise TensorDirectoryError(f"Directory entry for {name!r} is inconsistent: shape={shape} "
                                       f"offset={offset} nbytes={nbytes}")
        if name in params:
            raise TensorDirectoryError(f"Duplicate tensor {name!r}")
        params[name] = np.frombuffer(data[offset:offset + nbytes], dtype=_DTYPE).reshape(shape).astype(np.float32)
        expected_offset += nbytes

    checkpoint = Checkpoint(config=config, params=params, metadata=metadata, version=version)
    # Names and shapes must match the architecture the config describes.
    model_from_checkpoint(checkpoint)
    return checkpoint


def save_checkpoint(model: ModelState, metadata: Dict[str, Any], path: Union[str, Path]) -> Checkpoint:
    checkpoint = checkpoint_from_model(model, metadata)
    write_checkpoint(checkpoint, path)
    return checkpoint


def write_checkpoint(checkpoint: Checkpoint, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(encode_checkpoint(checkpoint))
    logger.info(f"Checkpoint written to {path} ({checkpoint.parameter_count()} parameters)")
    return path


def load_checkpoint(path: Union[str, Path]) -> Checkpoint:
    path = Path(path)
    try:
        blob = path.read_bytes()
    except OSError as e:
        raise CheckpointError(f"Cannot read checkpoint {path}: {e}") from e
    return decode_checkpoint(blob)
