import hashlib

import pytest
import requests

from inference.checkpoint import CheckpointError, checkpoint_from_model, encode_checkpoint, save_checkpoint
from utils.checkpoint_store import ArtifactNameError, CheckpointStore, check_name, patch_set_dir


class FakeResponse:
    def __init__(self, body: bytes, status: int = 200):
        self.body = body
        self.status = status

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        return False

    def raise_for_status(self):
        if self.status >= 400:
            raise requests.HTTPError(f"{self.status} error")

    def iter_content(self, chunk_size):
        for start in range(0, len(self.body), chunk_size):
            yield self.body[start:start + chunk_size]


@pytest.fixture
def store(tmp_path):
    return CheckpointStore(str(tmp_path / "models"))


@pytest.mark.parametrize("name", ["wet_brush", "run-2", "v1.0", "A"])
def test_valid_names(name):
    assert check_name(name) == name


@pytest.mark.parametrize("name", ["", "../etc", "a/b", "-lead", "x" * 65, "a..b", "sp ace"])
def test_invalid_names(name):
    with pytest.raises(ArtifactNameError):
        check_name(name)


def test_patch_set_dir(tmp_path):
    assert patch_set_dir("wet", str(tmp_path)) == tmp_path / "wet"
    with pytest.raises(ArtifactNameError):
        patch_set_dir("../wet", str(tmp_path))


def test_describe_and_list(store, tiny_model):
    save_checkpoint(tiny_model, {"style": "wet_brush", "final_loss": 0.1}, store.model_path("tiny"))
    store.model_path("broken").write_bytes(b"SPCK")

    assert store.get_model_path("tiny") == store.model_path("tiny")
    assert store.get_model_path("absent") is None
    assert store.get_model_path("../tiny") is None

    described = store.describe("tiny")
    assert described["parameters"] == 1959
    assert described["config"]["depth"] == 1
    assert described["metadata"]["style"] == "wet_brush"

    listed = {entry["name"]: entry for entry in store.list_models()}
    assert set(listed) == {"broken", "tiny"}
    assert "error" in listed["broken"]
    assert listed["tiny"]["format_version"] == 1


def test_download_validates_and_stores(store, tiny_model, monkeypatch):
    blob = encode_checkpoint(checkpoint_from_model(tiny_model, {"style": "remote"}))
    monkeypatch.setattr("utils.checkpoint_store.requests.get", lambda url, **kw: FakeResponse(blob))

    path = store.download_checkpoint("https://example.invalid/tiny.spck", "remote",
                                     expected_sha256=hashlib.sha256(blob).hexdigest())
    assert path.read_bytes() == blob
    assert store.describe("remote")["metadata"]["style"] == "remote"
    assert not list(store.model_dir.glob("*.part"))


def test_download_rejects_bad_checksum(store, tiny_model, monkeypatch):
    blob = encode_checkpoint(checkpoint_from_model(tiny_model))
    monkeypatch.setattr("utils.checkpoint_store.requests.get", lambda url, **kw: FakeResponse(blob))
    with pytest.raises(CheckpointError, match="Checksum"):
        store.download_checkpoint("https://example.invalid/x", "x", expected_sha256="0" * 64)
    assert store.get_model_path("x") is None
    assert not list(store.model_dir.glob("*.part"))


def test_download_rejects_non_checkpoint(store, monkeypatch):
    monkeypatch.setattr("utils.checkpoint_store.requests.get", lambda url, **kw: FakeResponse(b"<html>"))
    with pytest.raises(CheckpointError):
        store.download_checkpoint("https://example.invalid/x", "x")
    assert store.get_model_path("x") is None


def test_download_http_error(store, monkeypatch):
    monkeypatch.setattr("utils.checkpoint_store.requests.get", lambda url, **kw: FakeResponse(b"", 404))
    with pytest.raises(requests.HTTPError):
        store.download_checkpoint("https://example.invalid/x", "x")
    assert not list(store.model_dir.iterdir())
