import numpy as np
import pytest

from inference.unet import UNetConfig, build_unet
from patchgen.patch_set import generate_patch_set
from patchgen.styles import preset


@pytest.fixture
def tiny_config():
    return UNetConfig(depth=1, base_channels=4)


@pytest.fixture
def tiny_model(tiny_config):
    return build_unet(tiny_config, seed=0)


@pytest.fixture
def tiny_spec():
    return preset("wet_brush").with_overrides(
        count=4, size=(16, 16), strokes_per_patch=5, stroke_length=8.0, stroke_thickness=4.0,
    )


@pytest.fixture
def tiny_patchset(tiny_spec):
    return generate_patch_set(tiny_spec, seed=3)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def isolated_settings(tmp_path, monkeypatch):
    """Point every storage directory of the shared settings at tmp_path."""
    from config import settings

    for field in ("patch_root", "model_cache_dir", "output_dir", "temp_dir"):
        directory = tmp_path / field
        directory.mkdir()
        monkeypatch.setattr(settings, field, str(directory))
    return settings
