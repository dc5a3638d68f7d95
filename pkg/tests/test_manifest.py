import hashlib
import json

import pytest

from accentvc.errors import InputError
from accentvc.manifest import (build_manifest, file_hash, manifest_hash,
                               read_manifest, record_artifact, write_manifest)


@pytest.fixture
def manifest():
    return build_manifest("train-vc", {"train": {"system": "P1"}},
                          seeds=[3, 1], inputs={"corpus": "ab12"})


def test_seeds_sorted(manifest):
    assert manifest["seeds"] == [1, 3]


def test_hash_covers_only_deterministic_fields(manifest):
    h = manifest["manifest_hash"]
    manifest["artifacts"]["model.avc"] = "ffff"
    manifest["created"] = "2024-01-01T00:00:00"
    assert manifest_hash(manifest) == h


def test_hash_sensitive_to_inputs(manifest):
    h = manifest["manifest_hash"]
    manifest["inputs"]["corpus"] = "cd34"
    assert manifest_hash(manifest) != h


def test_hash_ignores_key_order():
    a = build_manifest("eval", {"x": 1, "y": 2}, [1], {"m": "aa", "n": "bb"})
    b = build_manifest("eval", {"y": 2, "x": 1}, [1], {"n": "bb", "m": "aa"})
    assert a["manifest_hash"] == b["manifest_hash"]


def test_file_hash_matches_sha256(tmp_path):
    p = tmp_path / "blob.bin"
    p.write_bytes(b"\x00\x01payload")
    assert file_hash(p) == hashlib.sha256(b"\x00\x01payload").hexdigest()


def test_record_artifact_keys(tmp_path, manifest):
    sub = tmp_path / "run" / "models"
    sub.mkdir(parents=True)
    p = sub / "vc.avc"
    p.write_bytes(b"model bytes")
    record_artifact(manifest, p)
    assert manifest["artifacts"]["vc.avc"] == file_hash(p)
    record_artifact(manifest, p, root=tmp_path)
    assert manifest["artifacts"]["run/models/vc.avc"] == file_hash(p)


def test_write_read_round_trip(tmp_path, manifest):
    path = tmp_path / "manifest.json"
    write_manifest(path, manifest)
    back = read_manifest(path)
    assert back["manifest_hash"] == manifest["manifest_hash"]
    assert back["command"] == "train-vc"
    assert "created" in back
    # the timestamp never contaminates the hashed region
    assert manifest_hash(back) == back["manifest_hash"]


def test_read_rejects_edited_manifest(tmp_path, manifest):
    path = tmp_path / "manifest.json"
    write_manifest(path, manifest)
    data = json.loads(path.read_text())
    data["seeds"] = [99]
    path.write_text(json.dumps(data))
    with pytest.raises(InputError, match="edited"):
        read_manifest(path)


def test_read_rejects_missing_fields(tmp_path):
    path = tmp_path / "manifest.json"
    path.write_text(json.dumps({"version": "x"}))
    with pytest.raises(InputError, match="missing"):
        read_manifest(path)
