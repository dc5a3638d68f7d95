"""Run manifests: the reproducibility record every command writes.

A manifest pins the effective config, the seeds, and the content hashes of
every input artifact, then names the output files it produced together with
their hashes.  The manifest hash covers only the deterministic part
(version, config, seeds, inputs), so artifacts may embed it before they are
written; creation timestamps live outside the hashed region and never enter
any artifact.
"""

from __future__ import annotations

import hashlib
import json
import os
import time

from .containers import canonical_json
from .errors import InputError

TOOL_VERSION = "accentvc 1.0"
HASHED_FIELDS = ("version", "command", "config", "seeds", "inputs")


def sha256_hex(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def file_hash(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def manifest_hash(manifest: dict) -> str:
    body = {k: manifest.get(k) for k in HASHED_FIELDS}
    return sha256_hex(canonical_json(body).encode("utf-8"))


def build_manifest(command: str, config_dict: dict, seeds, inputs: dict) -> dict:
    """``inputs`` maps role names (world, corpus, ...) to content hashes."""
    m = {"version": TOOL_VERSION, "command": command, "config": config_dict,
         "seeds": sorted(int(s) for s in seeds), "inputs": dict(inputs)}
    m["manifest_hash"] = manifest_hash(m)
    m["artifacts"] = {}
    return m


def record_artifact(manifest: dict, path, root=None) -> None:
    """Hash a produced file into the manifest, keyed by its relative name."""
    key = os.path.basename(os.fspath(path)) if root is None else \
        os.path.relpath(os.fspath(path), os.fspath(root))
    manifest["artifacts"][key] = file_hash(path)


def write_manifest(path, manifest: dict) -> None:
    out = dict(manifest)
    out["created"] = time.strftime("%Y-%m-%dT%H:%M:%S", time.gmtime())
    with open(path, "w", encoding="utf-8") as f:
        json.dump(out, f, indent=2, sort_keys=True)
        f.write("\n")


def read_manifest(path) -> dict:
    with open(path, "r", encoding="utf-8") as f:
        m = json.load(f)
    for key in HASHED_FIELDS + ("manifest_hash",):
        if key not in m:
            raise InputError(f"manifest {path} is missing field {key!r}")
    if manifest_hash(m) != m["manifest_hash"]:
        raise InputError(f"manifest {path} failed its hash check; the file "
                         f"was edited after writing")
    return m
