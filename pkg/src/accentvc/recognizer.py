"""Frame-level content recognizers that provide bottleneck features.

A small feedforward classifier maps an observation frame to a token
posterior through a narrow linear bottleneck: D -> hidden (tanh) -> d_bn
(linear) -> softmax over tokens.  The speaker-independent model trains on
accent-M utterances from many speakers; the accent-adapted model continues
optimization from it on the Tianjin-accented target speaker's data.  The
bottleneck activations, not the posteriors, are the conversion features.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .containers import load_checkpoint, save_checkpoint
from .errors import ConfigError, InputError, StateError
from .optim import ParamStore, adam_step
from .rng import substream


@dataclass(frozen=True)
class RecognizerConfig:
    d_hidden: int = 64
    d_bn: int = 8
    epochs: int = 30
    # one pass is deliberate: it moves accent-T features part way toward
    # their canonical clusters, leaving the rest for the conversion model
    # to absorb; longer schedules push the P1 system out of the regime the
    # reference calibration pinned down
    finetune_epochs: int = 1
    batch_frames: int = 1024
    lr: float = 1e-3


@dataclass
class BNSequence:
    features: np.ndarray      # (frames, d_bn)
    extractor_accent: str     # accent tag of the model that produced it

    @property
    def n_frames(self) -> int:
        return self.features.shape[0]


@dataclass(eq=False)
class RecognizerModel:
    store: ParamStore
    d_obs: int
    n_tokens: int
    config: RecognizerConfig
    accent_tag: str = "M"
    epochs_trained: int = 0
    heldout_accuracy: float = float("nan")
    meta: dict = field(default_factory=dict)

    @property
    def trained(self) -> bool:
        return self.epochs_trained > 0


def _init_model(d_obs: int, n_tokens: int, config: RecognizerConfig, seed: int):
    rng = substream(seed, "rec-init")
    store = ParamStore()
    h, bn = config.d_hidden, config.d_bn
    store.add("rec.W1", rng.standard_normal((d_obs, h)) / np.sqrt(d_obs))
    store.add("rec.b1", np.zeros(h))
    store.add("rec.Wbn", rng.standard_normal((h, bn)) / np.sqrt(h))
    store.add("rec.bbn", np.zeros(bn))
    store.add("rec.Wout", rng.standard_normal((bn, n_tokens)) / np.sqrt(bn))
    store.add("rec.bout", np.zeros(n_tokens))
    return RecognizerModel(store=store, d_obs=d_obs, n_tokens=n_tokens, config=config)


def _bn_forward(store: ParamStore, x):
    h = ad.tanh(ad.linear(x, store.l("rec.W1"), store.l("rec.b1")))
    return ad.linear(h, store.l("rec.Wbn"), store.l("rec.bbn"))


def _posterior_forward(store: ParamStore, x):
    bn = _bn_forward(store, x)
    return ad.softmax_rows(ad.linear(bn, store.l("rec.Wout"), store.l("rec.bout")))


def _frames_and_labels(utts):
    frames = np.concatenate([u.frames for u in utts])
    labels = np.concatenate([u.frame_tokens for u in utts])
    return frames, labels


def _fit(model: RecognizerModel, utts, epochs: int, seed: int, stream_tag: str) -> None:
    frames, labels = _frames_and_labels(utts)
    n = frames.shape[0]
    bs = model.config.batch_frames
    for epoch in range(epochs):
        order = substream(seed, stream_tag, epoch).permutation(n)
        for lo in range(0, n, bs):
            idx = order[lo:lo + bs]
            p = _posterior_forward(model.store, ad.tensor(frames[idx]))
            loss = ad.nll_rows(p, labels[idx])
            ad.backward(loss)
            adam_step(model.store, lr=model.config.lr)
        model.epochs_trained += 1


def train_si_recognizer(utts, config: RecognizerConfig, seed: int) -> RecognizerModel:
    """Train the speaker-independent model on accent-M data from >= 2 speakers."""
    if not utts:
        raise InputError("no utterances to train the recognizer on")
    bad = {u.accent for u in utts} - {"M"}
    if bad:
        raise InputError(
            f"speaker-independent training data must be accent M only, found {sorted(bad)}")
    if len({u.speaker for u in utts}) < 2:
        raise InputError("speaker-independent training needs at least 2 speakers")
    d_obs = utts[0].frames.shape[1]
    n_tokens = int(max(u.frame_tokens.max() for u in utts)) + 1
    model = _init_model(d_obs, n_tokens, config, seed)
    _fit(model, utts, config.epochs, seed, "rec-shuffle-si")
    model.accent_tag = "M"
    return model


def finetune_accent_recognizer(base: RecognizerModel, utts,
                               seed: int, epochs: int | None = None) -> RecognizerModel:
    """Continue optimization from the base model on accent-T data."""
    if not base.trained:
        raise StateError("cannot fine-tune an untrained base recognizer")
    bad = {u.accent for u in utts} - {"T"}
    if bad:
        raise InputError(f"fine-tuning data must be accent T only, found {sorted(bad)}")
    model = RecognizerModel(store=ParamStore(), d_obs=base.d_obs,
                            n_tokens=base.n_tokens, config=base.config,
                            accent_tag="T", epochs_trained=base.epochs_trained)
    for p in base.store.params():
        fresh = model.store.add(p.name, p.value)
        fresh.m[...] = p.m
        fresh.v[...] = p.v
    model.store.step_count = base.store.step_count
    n_epochs = base.config.finetune_epochs if epochs is None else epochs
    _fit(model, utts, n_epochs, seed, "rec-shuffle-ft")
    return model


def frame_accuracy(model: RecognizerModel, utts) -> float:
    frames, labels = _frames_and_labels(utts)
    with ad.no_grad():
        p = _posterior_forward(model.store, ad.tensor(frames))
    return float(np.mean(p.data.argmax(axis=1) == labels))


def extract_bn(model: RecognizerModel, utt) -> BNSequence:
    """Per-frame bottleneck activations; pure and tape-free."""
    if not model.trained:
        raise StateError("cannot extract features from an untrained recognizer")
    if utt.frames.shape[1] != model.d_obs:
        raise InputError(
            f"utterance frame dim {utt.frames.shape[1]} does not match model input "
            f"dim {model.d_obs}")
    with ad.no_grad():
        bn = _bn_forward(model.store, ad.tensor(utt.frames))
    return BNSequence(features=bn.data, extractor_accent=model.accent_tag)


def select_extractor(accent: str, registry: dict, system: str) -> RecognizerModel:
    """BL always uses the SI model; P1/P2 use the accent-adapted model for T."""
    if system not in ("BL", "P1", "P2"):
        raise ConfigError(f"unknown system {system!r}; expected BL, P1 or P2")
    if "SI" not in registry:
        raise ConfigError("recognizer registry is missing the SI model")
    if system == "BL" or accent == "M":
        return registry["SI"]
    if "T" not in registry:
        raise ConfigError(
            f"system {system} needs the accent-adapted recognizer for accent T")
    return registry["T"]


def save_recognizer(path, model: RecognizerModel, extra_meta: dict | None = None) -> None:
    meta = {"model_kind": "recognizer", "d_obs": model.d_obs,
            "n_tokens": model.n_tokens, "accent_tag": model.accent_tag,
            "epochs_trained": model.epochs_trained,
            "heldout_accuracy": model.heldout_accuracy,
            "config": {"d_hidden": model.config.d_hidden, "d_bn": model.config.d_bn,
                       "epochs": model.config.epochs,
                       "finetune_epochs": model.config.finetune_epochs,
                       "batch_frames": model.config.batch_frames, "lr": model.config.lr}}
    meta.update(extra_meta or {})
    save_checkpoint(path, model.store, meta)


def load_recognizer(path) -> RecognizerModel:
    from .containers import read_container
    _, meta, _ = read_container(path, expect_kind="checkpoint")
    if meta.get("model_kind") != "recognizer":
        raise InputError(f"{path} is not a recognizer checkpoint")
    config = RecognizerConfig(**meta["config"])
    model = _init_model(meta["d_obs"], meta["n_tokens"], config, seed=0)
    load_checkpoint(path, model.store)
    model.accent_tag = meta["accent_tag"]
    model.epochs_trained = int(meta["epochs_trained"])
    model.heldout_accuracy = float(meta["heldout_accuracy"])
    model.meta = meta
    return model
