"""Binary container for every on-disk artifact: worlds, corpora, checkpoints.

Layout (all integers little-endian, arrays little-endian C-order):

    8 bytes   magic "AVCBIN01"
    u32, n    kind string (utf-8)
    u32, n    canonical JSON metadata (sorted keys, compact separators)
    u64       array count
    per array:
      u32, n  name (utf-8)
      u8      dtype code (0 = float64, 1 = int64)
      u8      ndim
      u64*    dims
      raw     values

Writes are a pure function of (kind, metadata, arrays), so re-running a
deterministic producer yields a byte-identical file.  Nothing here stores
timestamps or absolute paths.
"""

from __future__ import annotations

import json
import os
import struct
import tempfile

import numpy as np

from .errors import InputError, StateError

MAGIC = b"AVCBIN01"
_DTYPES = {0: np.dtype("<f8"), 1: np.dtype("<i8")}
_CODES = {np.dtype("float64"): 0, np.dtype("int64"): 1}


def canonical_json(obj) -> str:
    """Deterministic JSON text: sorted keys, no whitespace, ascii-escaped."""
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=True)


def container_bytes(kind: str, metadata: dict, arrays: dict) -> bytes:
    """Build the serialized container in memory (pure, so hashable)."""
    chunks = [MAGIC]

    def put_str(s: str):
        raw = s.encode("utf-8")
        chunks.append(struct.pack("<I", len(raw)))
        chunks.append(raw)

    put_str(kind)
    put_str(canonical_json(metadata))
    chunks.append(struct.pack("<Q", len(arrays)))
    for name, arr in arrays.items():
        arr = np.asarray(arr)
        if arr.dtype not in _CODES:
            arr = arr.astype(np.float64) if arr.dtype.kind == "f" else arr.astype(np.int64)
        put_str(name)
        chunks.append(struct.pack("<BB", _CODES[arr.dtype], arr.ndim))
        chunks.append(struct.pack(f"<{arr.ndim}Q", *arr.shape))
        chunks.append(arr.astype(arr.dtype.newbyteorder("<"), copy=False).tobytes())
    return b"".join(chunks)


def write_container(path, kind: str, metadata: dict, arrays: dict) -> None:
    """Serialize to ``path`` atomically (write to a temp file, then rename)."""
    blob = container_bytes(kind, metadata, arrays)
    path = os.fspath(path)
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=os.path.dirname(path) or ".", prefix=".avc-tmp-")
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(blob)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


class _Reader:
    def __init__(self, buf: bytes, path: str):
        self.buf = buf
        self.pos = 0
        self.path = path

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.buf):
            raise InputError(
                f"{self.path}: truncated container (needed {n} bytes at offset {self.pos})"
            )
        out = self.buf[self.pos:self.pos + n]
        self.pos += n
        return out

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]

    def u64(self) -> int:
        return struct.unpack("<Q", self.take(8))[0]

    def string(self) -> str:
        return self.take(self.u32()).decode("utf-8")


def read_container(path, expect_kind: str | None = None):
    """Return (kind, metadata, arrays) from a container file."""
    path = os.fspath(path)
    with open(path, "rb") as f:
        buf = f.read()
    r = _Reader(buf, path)
    if r.take(len(MAGIC)) != MAGIC:
        raise InputError(f"{path}: bad magic, not a container file")
    kind = r.string()
    if expect_kind is not None and kind != expect_kind:
        raise InputError(f"{path}: expected a {expect_kind!r} container, found {kind!r}")
    metadata = json.loads(r.string())
    arrays = {}
    for _ in range(r.u64()):
        name = r.string()
        code, ndim = struct.unpack("<BB", r.take(2))
        if code not in _DTYPES:
            raise InputError(f"{path}: unknown dtype code {code} at offset {r.pos}")
        shape = struct.unpack(f"<{ndim}Q", r.take(8 * ndim))
        dt = _DTYPES[code]
        n = int(np.prod(shape, dtype=np.int64)) if ndim else 1
        arr = np.frombuffer(r.take(n * dt.itemsize), dtype=dt).reshape(shape)
        arrays[name] = arr.astype(arr.dtype.newbyteorder("="))
    if r.pos != len(buf):
        raise InputError(f"{path}: {len(buf) - r.pos} trailing bytes after arrays")
    return kind, metadata, arrays


def save_checkpoint(path, store, metadata: dict | None = None) -> None:
    """Write parameters plus Adam moments and step counter; fully resumable."""
    meta = dict(metadata or {})
    meta["step_count"] = store.step_count
    meta["param_names"] = store.names()
    arrays = {}
    for p in store.params():
        arrays[f"param.{p.name}"] = p.value
    for p in store.params():
        arrays[f"adam.m.{p.name}"] = p.m
        arrays[f"adam.v.{p.name}"] = p.v
    write_container(path, "checkpoint", meta, arrays)


def load_checkpoint(path, store):
    """Restore values, moments, and step counter into a matching store."""
    _, meta, arrays = read_container(path, expect_kind="checkpoint")
    if meta.get("param_names") != store.names():
        raise StateError(
            f"{path}: checkpoint parameters {meta.get('param_names')} do not match "
            f"the model being restored ({store.names()})"
        )
    for p in store.params():
        for prefix, buf in (("param.", p.value), ("adam.m.", p.m), ("adam.v.", p.v)):
            src = arrays[prefix + p.name]
            if src.shape != buf.shape:
                raise StateError(
                    f"{path}: {prefix}{p.name} has shape {src.shape}, expected {buf.shape}"
                )
            buf[...] = src
    store.step_count = int(meta["step_count"])
    return meta
