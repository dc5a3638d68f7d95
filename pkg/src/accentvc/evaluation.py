"""Evaluation probes and scores.

All probes are linear softmax classifiers trained on REAL frames only; a
converted record slipping into a probe's training set is a hard error, since
a probe fitted to model output would score the model against itself.  The
probes judge converted audio frame by frame; per-utterance decisions are
majority votes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .corpus import sample_eval_corpus
from .errors import InputError
from .model import VCModel, encode
from .optim import ParamStore, adam_step, global_grad_norm
from .recognizer import extract_bn, select_extractor
from .rng import substream
from .world import (ACCENTS, MAX_DURATION, MAX_TOKENS, MIN_DURATION,
                    MIN_TOKENS, World, render_frames, tone_realize)


@dataclass(frozen=True)
class ProbeConfig:
    max_epochs: int = 300
    lr: float = 0.05
    tol: float = 1e-6
    seed: int = 0


@dataclass(eq=False)
class Probe:
    W: np.ndarray
    b: np.ndarray
    classes: np.ndarray        # class ids, row order of the posterior
    converged: bool
    epochs: int
    grad_norm: float


def assert_real_provenance(utterances) -> None:
    """Probes may only ever be fitted to real renditions."""
    bad = sorted({getattr(u, "provenance", "real") for u in utterances}
                 - {"real"})
    if bad:
        raise InputError(f"probe training data must be real renditions; got "
                         f"provenance {bad}")


def train_probe(features, labels, config: ProbeConfig = ProbeConfig()) -> Probe:
    """Full-batch softmax regression; stops when the gradient norm drops
    below ``tol`` or at ``max_epochs``."""
    x = np.asarray(features, dtype=np.float64)
    y = np.asarray(labels)
    if x.ndim != 2 or x.shape[0] == 0:
        raise InputError(f"features must be a nonempty matrix, got {x.shape}")
    if y.shape != (x.shape[0],):
        raise InputError("labels must be one per feature row")
    classes = np.unique(y)
    if classes.size < 2:
        raise InputError("probe training needs at least two classes")
    idx = np.searchsorted(classes, y)

    rng = substream(config.seed, "probe-init")
    store = ParamStore()
    store.add("W", rng.standard_normal((x.shape[1], classes.size)) * 0.01)
    store.add("b", np.zeros(classes.size))
    gnorm, epoch = float("inf"), 0
    for epoch in range(1, config.max_epochs + 1):
        p = ad.softmax_rows(ad.linear(ad.tensor(x), store.l("W"), store.l("b")))
        ad.backward(ad.nll_rows(p, idx))
        gnorm = global_grad_norm(store)
        if gnorm < config.tol:
            store.zero_grads()
            break
        adam_step(store, config.lr)
    return Probe(W=store["W"].value.copy(), b=store["b"].value.copy(),
                 classes=classes, converged=gnorm < config.tol, epochs=epoch,
                 grad_norm=gnorm)


def probe_posteriors(probe: Probe, features) -> np.ndarray:
    x = np.asarray(features, dtype=np.float64)
    z = x @ probe.W + probe.b
    e = np.exp(z - z.max(axis=1, keepdims=True))
    return e / e.sum(axis=1, keepdims=True)


def probe_predict(probe: Probe, features) -> np.ndarray:
    """Class ids (not row indices) of the argmax posterior."""
    return probe.classes[np.argmax(probe_posteriors(probe, features), axis=1)]


def majority(values) -> int:
    """Most frequent value; ties break toward the smallest."""
    vals, counts = np.unique(np.asarray(values), return_counts=True)
    return int(vals[np.argmax(counts)])


def _frame_table(utterances, label_fn):
    xs = [u.frames for u in utterances]
    ys = [np.full(u.frames.shape[0], label_fn(u)) for u in utterances]
    return np.concatenate(xs, axis=0), np.concatenate(ys)


def majority_accuracy(probe: Probe, utterances, label_fn) -> float:
    """Fraction of utterances whose frame-majority vote hits the label."""
    hits = [majority(probe_predict(probe, u.frames)) == label_fn(u)
            for u in utterances]
    return float(np.mean(hits))


# ---------------------------------------------------------------------------
# the three judges


def speaker_probe(utterances, config: ProbeConfig = ProbeConfig()) -> Probe:
    assert_real_provenance(utterances)
    return train_probe(*_frame_table(utterances, lambda u: u.speaker), config)


def accent_probe(utterances, config: ProbeConfig = ProbeConfig()) -> Probe:
    assert_real_provenance(utterances)
    return train_probe(
        *_frame_table(utterances, lambda u: ACCENTS.index(u.accent)), config)


def content_probe(utterances, config: ProbeConfig = ProbeConfig()) -> Probe:
    assert_real_provenance(utterances)
    xs = [u.frames for u in utterances]
    ys = [u.frame_tokens for u in utterances]
    return train_probe(np.concatenate(xs, axis=0), np.concatenate(ys), config)


def _cell_means(records, scores):
    cells = {}
    for r, s in zip(records, scores):
        cells.setdefault((r.target_speaker, r.target_accent), []).append(s)
    return {k: float(np.mean(v)) for k, v in sorted(cells.items())}


def speaker_similarity_eval(probe: Probe, real_utts, records) -> dict:
    """Frame-majority speaker decisions: real sanity accuracy plus the
    fraction of converted utterances judged as their intended target, per
    (target speaker, target accent) cell."""
    real = majority_accuracy(probe, real_utts, lambda u: u.speaker)
    hits = [float(majority(probe_predict(probe, r.frames)) == r.target_speaker)
            for r in records]
    cells = _cell_means(records, hits)
    return {"real": real, "cells": cells,
            "overall": float(np.mean(hits)) if hits else float("nan")}


def accentedness_eval(probe: Probe, real_utts, records) -> dict:
    """Fraction of converted utterances whose frame-majority accent decision
    matches the conversion's target accent, per cell and per accent."""
    real = majority_accuracy(probe, real_utts,
                             lambda u: ACCENTS.index(u.accent))
    hits = [float(majority(probe_predict(probe, r.frames))
                  == ACCENTS.index(r.target_accent)) for r in records]
    cells = _cell_means(records, hits)
    by_accent = {}
    for accent in ACCENTS:
        sel = [h for r, h in zip(records, hits) if r.target_accent == accent]
        by_accent[accent] = float(np.mean(sel)) if sel else float("nan")
    return {"real": real, "cells": cells, "by_accent": by_accent}


def _span_accuracy(probe: Probe, frames, durations, tokens) -> float:
    """Majority vote inside each token's frame span, scored per token."""
    pred = probe_predict(probe, frames)
    hits, at = [], 0
    for tok, d in zip(tokens, durations):
        hits.append(float(majority(pred[at:at + d]) == tok))
        at += d
    return float(np.mean(hits))


def content_preservation(probe: Probe, real_utts, records) -> dict:
    """Token recovery rate from frames, per token span."""
    real = float(np.mean([
        _span_accuracy(probe, u.frames, u.durations, u.tokens)
        for u in real_utts]))
    conv = [_span_accuracy(probe, r.frames, r.durations, r.tokens)
            for r in records]
    cells = _cell_means(records, conv)
    return {"real": real, "cells": cells,
            "overall": float(np.mean(conv)) if conv else float("nan")}


# ---------------------------------------------------------------------------
# encoder geometry


def invariance_ratio(vectors, groups) -> float:
    """Mean pairwise distance within a group over mean distance across
    groups.  Zero when all members coincide; near 1 when grouping is
    meaningless (isotropic cloud)."""
    x = np.asarray(vectors, dtype=np.float64)
    g = np.asarray(groups)
    if np.unique(g).size < 2:
        raise InputError("invariance ratio needs at least two content groups")
    d = np.sqrt(np.maximum(
        ((x[:, None, :] - x[None, :, :]) ** 2).sum(-1), 0.0))
    same = (g[:, None] == g[None, :]) & ~np.eye(len(g), dtype=bool)
    diff = g[:, None] != g[None, :]
    if not same.any():
        raise InputError("every content group has a single member")
    across = d[diff].mean()
    if across == 0.0:
        return 0.0
    return float(d[same].mean() / across)


def pca_2d(vectors):
    """Top-2 principal axes; each component's first nonzero loading is made
    positive so plots are reproducible."""
    x = np.asarray(vectors, dtype=np.float64)
    centered = x - x.mean(axis=0)
    _, _, vt = np.linalg.svd(centered, full_matrices=False)
    comps = vt[:2]
    for i in range(comps.shape[0]):
        nz = np.nonzero(np.abs(comps[i]) > 1e-12)[0]
        if nz.size and comps[i, nz[0]] < 0:
            comps[i] = -comps[i]
    return centered @ comps.T, comps


def mean_encoding(model: VCModel, recognizers: dict, utt) -> np.ndarray:
    rec = select_extractor(utt.accent, recognizers, model.system)
    enc = encode(model, extract_bn(rec, utt), utt.accent, accent_gate=True)
    return enc.h.mean(axis=0)


def encoder_invariance(model: VCModel, recognizers: dict, groups) -> dict:
    """groups: lists of parallel renditions (same content, different
    speakers).  Returns the within/across distance ratio plus a 2-D PCA of
    the time-averaged encodings."""
    if len(groups) < 2:
        raise InputError("need at least two content groups")
    vectors, gid = [], []
    for i, group in enumerate(groups):
        for utt in group:
            vectors.append(mean_encoding(model, recognizers, utt))
            gid.append(i)
    vectors = np.stack(vectors)
    points, comps = pca_2d(vectors)
    return {"ratio": invariance_ratio(vectors, gid), "points": points,
            "groups": np.array(gid), "components": comps}


def parallel_groups(world: World, speakers, accent: str, n_groups: int,
                    seed: int):
    """Same token/tone/duration sequence rendered by several speakers; the
    natural input for the invariance ratio."""
    groups = []
    for j in range(n_groups):
        rng = substream(seed, "parallel", j)
        n = int(rng.integers(MIN_TOKENS, MAX_TOKENS + 1))
        tokens = rng.integers(0, world.spec.n_tokens, size=n)
        durations = rng.integers(MIN_DURATION, MAX_DURATION + 1, size=n)
        tones = np.array([tone_realize(world, int(t), accent, rng)
                          for t in tokens], dtype=np.int64)
        group = []
        for s in speakers:
            noise = substream(seed, "parallel", j, "noise", s)
            frames, ft, fo = render_frames(world, tokens, tones, durations,
                                           s, accent, noise)
            group.append(_Rendition(s, accent, tokens.astype(np.int64),
                                    tones, durations.astype(np.int64),
                                    frames, ft, fo))
        groups.append(group)
    return groups


def probe_corpus(world: World, speakers, n_per_cell: int, seed: int):
    """Fresh real utterances with speaker and accent crossed independently.

    Training corpora couple each speaker to one native accent, so a probe
    fitted on them cannot tell the two factors apart; judging conversions
    needs judges that saw every (speaker, accent) cell.  Content is keyed
    per (speaker, index) only, so each speaker contributes parallel M and T
    renditions of the same material.
    """
    if n_per_cell < 1:
        raise InputError("probe corpus needs at least one utterance per cell")
    cells = [(s, accent) for s in speakers for accent in ACCENTS]
    return sample_eval_corpus(world, cells, n_per_cell, seed)


@dataclass(eq=False)
class _Rendition:
    """Lightweight utterance stand-in for probe and invariance inputs."""
    speaker: int
    accent: str
    tokens: np.ndarray
    tones: np.ndarray
    durations: np.ndarray
    frames: np.ndarray
    frame_tokens: np.ndarray
    frame_tones: np.ndarray
    provenance: str = "real"

    @property
    def n_frames(self) -> int:
        return self.frames.shape[0]
