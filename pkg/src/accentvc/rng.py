"""Deterministic random streams.

All randomness in the package flows through named substreams of a single
master seed, built on numpy's counter-based Philox generator.  A substream
is addressed by a path of labels, e.g. ``substream(seed, "corpus", "utt", 17)``,
so independent parts of a pipeline (per-utterance sampling, per-epoch
shuffling, dropout) can draw in parallel without any order dependence:
the same (seed, path) always yields the same stream.

String labels are mapped to integers with CRC-32, which is stable across
processes and platforms (unlike ``hash()``).
"""

from __future__ import annotations

import zlib

import numpy as np


def _label_to_int(label) -> int:
    if isinstance(label, (int, np.integer)):
        return int(label)
    if isinstance(label, str):
        return zlib.crc32(label.encode("utf-8"))
    raise TypeError(f"substream labels must be int or str, got {type(label)!r}")


def substream(seed: int, *path) -> np.random.Generator:
    """Return a Philox generator for the substream addressed by ``path``."""
    key = np.random.SeedSequence(int(seed), spawn_key=tuple(_label_to_int(p) for p in path))
    return np.random.Generator(np.random.Philox(key))
