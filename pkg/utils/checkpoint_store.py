import hashlib
import logging
import re
from pathlib import Path
from typing import Any, Dict, List, Optional

import requests

from inference.checkpoint import CheckpointError, load_checkpoint

logger = logging.getLogger(__name__)

CHECKPOINT_SUFFIX = ".spck"
_NAME = re.compile(r"^[A-Za-z0-9][A-Za-z0-9_.-]{0,63}$")


class ArtifactNameError(ValueError):
    pass


def check_name(name: str) -> str:
    """Model / patch set names become file names; keep them to a safe alphabet."""
    if not _NAME.match(name or "") or ".." in name:
        raise ArtifactNameError(f"Invalid name {name!r}: use letters, digits, '_', '-' or '.'")
    return name


class CheckpointStore:
    """Named checkpoints in a flat directory (``<name>.spck``)."""

    def __init__(self, model_dir: str = "./models"):
        self.model_dir = Path(model_dir)
        self.model_dir.mkdir(parents=True, exist_ok=True)

    def model_path(self, name: str) -> Path:
        return self.model_dir / f"{check_name(name)}{CHECKPOINT_SUFFIX}"

    def get_model_path(self, name: str) -> Optional[Path]:
        """Path of an existing checkpoint, or None."""
        try:
            filepath = self.model_path(name)
        except ArtifactNameError:
            return None
        return filepath if filepath.exists() else None

    def describe(self, name: str) -> Dict[str, Any]:
        filepath = self.model_path(name)
        checkpoint = load_checkpoint(filepath)
        return {
            "name": name,
            "size_mb": round(filepath.stat().st_size / (1024 * 1024), 3),
            "format_version": checkpoint.version,
            "config": checkpoint.config.dict(),
            "parameters": checkpoint.parameter_count(),
            "metadata": checkpoint.metadata,
        }

    def list_models(self) -> List[Dict[str, Any]]:
        """Describe every readable checkpoint; unreadable files are reported, not raised."""
        models = []
        for filepath in sorted(self.model_dir.glob(f"*{CHECKPOINT_SUFFIX}")):
            name = filepath.name[:-len(CHECKPOINT_SUFFIX)]
            try:
                models.append(self.describe(name))
            except (CheckpointError, ArtifactNameError) as e:
                logger.warning(f"Skipping unreadable checkpoint {filepath}: {e}")
                models.append({"name": name, "error": str(e)})
        return models

    @staticmethod
    def verify_checksum(filepath: Path, expected_sha256: str) -> bool:
        sha256_hash = hashlib.sha256()
        with open(filepath, "rb") as f:
            for chunk in iter(lambda: f.read(1 << 16), b""):
                sha256_hash.update(chunk)
        return sha256_hash.hexdigest() == expected_sha256.lower()

    def download_checkpoint(self, url: str, name: str, expected_sha256: Optional[str] = None) -> Path:
        """Fetch a published checkpoint into the store and validate it.

        Partial or invalid downloads are removed before the error propagates.
        """
        filepath = self.model_path(name)
        partial = filepath.with_suffix(filepath.suffix + ".part")
        logger.info(f"Downloading {name} from {url}")
        try:
            with requests.get(url, stream=True, timeout=60) as response:
                response.raise_for_status()
                with open(partial, "wb") as file:
                    for chunk in response.iter_content(chunk_size=1 << 16):
                        if chunk:
                            file.write(chunk)

            if expected_sha256 and not self.verify_checksum(partial, expected_sha256):
                raise CheckpointError(f"Checksum mismatch for {url}")
            load_checkpoint(partial)
            partial.replace(filepath)
        except (requests.RequestException, OSError, CheckpointError):
            partial.unlink(missing_ok=True)
            raise

        logger.info(f"Checkpoint {name} stored at {filepath} ({filepath.stat().st_size / (1024 * 1024):.1f}MB)")
        return filepath


def patch_set_dir(name: str, root: str = "./patches") -> Path:
    return Path(root) / check_name(name)
