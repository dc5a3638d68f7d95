"""Training loop for the three conversion systems.

BL trains on speaker-independent bottleneck features only.  P1 routes each
utterance through the extractor matching its accent.  P2 is P1 plus an
adversarial speaker classifier on the encoder output, trained in alternating
five-epoch phase blocks (generator first) with mutual freezing: the
classifier's parameters and optimizer moments do not move in a generator
phase and vice versa.

The adversarial gradient is restricted to the encoder parameters by default
("encoder" scope); "generator" scope lets it reach everything outside the
classifier.  Either way the classifier itself is frozen while the generator
trains.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from . import autodiff as ad
from .errors import ConfigError, InputError
from .losses import loss_adv, loss_D, loss_recons
from .model import (VCModel, VCModelSpec, classifier_param_names, classify_packed,
                    decode_packed, encoder_param_names, encode_packed,
                    generator_param_names, init_vc_model)
from .optim import adam_step, lr_schedule
from .recognizer import extract_bn, select_extractor
from .rng import substream
from .world import ACCENTS

SYSTEMS = ("BL", "P1", "P2")
PHASE_G, PHASE_D = "G", "D"


@dataclass(frozen=True)
class TrainConfig:
    system: str = "P2"
    epochs: int = 90
    batch_size: int = 32
    base_lr: float = 1e-3
    decay_rate: float = 0.7
    decay_interval: int = 15
    beta: float = 0.3
    gate_epoch: int = 10
    alternate_every: int = 5
    adv_scope: str = "encoder"
    skip_d_phases: bool = False
    seed: int = 0

    def validate(self) -> None:
        if self.system not in SYSTEMS:
            raise ConfigError(f"unknown system {self.system!r}; expected one of {SYSTEMS}")
        if self.epochs < 0 or self.batch_size <= 0:
            raise ConfigError("epochs must be >= 0 and batch_size positive")
        if self.adv_scope not in ("encoder", "generator"):
            raise ConfigError(f"adv_scope must be 'encoder' or 'generator', "
                              f"got {self.adv_scope!r}")
        if not 0 <= self.gate_epoch:
            raise ConfigError("gate_epoch must be non-negative")
        if self.alternate_every <= 0:
            raise ConfigError("alternate_every must be positive")


def phase_for_epoch(epoch: int, config: TrainConfig) -> str:
    """BL and P1 are generator-only; P2 alternates fixed-length blocks.
    ``skip_d_phases`` collapses P2 back to generator-only (with beta 0 this
    makes a P2 run bit-identical to P1)."""
    if config.system != "P2" or config.skip_d_phases:
        return PHASE_G
    return PHASE_G if (epoch // config.alternate_every) % 2 == 0 else PHASE_D


def freeze_mask(store, phase: str) -> set:
    """Names frozen during the given phase (values and moments untouched)."""
    if phase == PHASE_G:
        return classifier_param_names(store)
    if phase == PHASE_D:
        return generator_param_names(store)
    raise ConfigError(f"unknown phase {phase!r}")


@dataclass
class PackedBatch:
    bn: np.ndarray            # (T*B, d_bn)
    target: np.ndarray        # (T*B, d_obs)
    accent_rows: np.ndarray   # (T*B,) accent index per row
    speaker_rows: np.ndarray  # (T*B,) target-speaker index per row
    mask: np.ndarray          # (T*B, 1) 1.0 on valid rows
    block: int
    n_valid: int


def pack_batch(pairs, speaker_index, d_obs: int) -> PackedBatch:
    """pairs: list of (BNSequence, Utterance).  Pads to the longest length."""
    B = len(pairs)
    T = max(u.n_frames for _, u in pairs)
    d_bn = pairs[0][0].features.shape[1]
    bn = np.zeros((T * B, d_bn))
    target = np.zeros((T * B, d_obs))
    accent = np.zeros(T * B, dtype=np.int64)
    speaker = np.zeros(T * B, dtype=np.int64)
    mask = np.zeros((T * B, 1))
    for b, (seq, utt) in enumerate(pairs):
        n = utt.n_frames
        bn.reshape(T, B, -1)[:n, b] = seq.features
        target.reshape(T, B, -1)[:n, b] = utt.frames
        accent.reshape(T, B)[:n, b] = ACCENTS.index(utt.accent)
        speaker.reshape(T, B)[:n, b] = speaker_index[utt.speaker]
        mask.reshape(T, B, 1)[:n, b] = 1.0
    return PackedBatch(bn=bn, target=target, accent_rows=accent,
                       speaker_rows=speaker, mask=mask, block=B,
                       n_valid=sum(u.n_frames for _, u in pairs))


def make_batches(pairs, batch_size: int):
    """Group sequences of similar length so padding stays thin."""
    order = sorted(range(len(pairs)), key=lambda i: pairs[i][1].n_frames)
    return [[pairs[i] for i in order[k:k + batch_size]]
            for k in range(0, len(order), batch_size)]


def extract_training_bn(utterances, recognizers: dict, system: str):
    """Route every utterance through the extractor its accent calls for."""
    pairs = []
    for utt in utterances:
        rec = select_extractor(utt.accent, recognizers, system)
        pairs.append((extract_bn(rec, utt), utt))
    return pairs


def _check_registry(recognizers: dict, system: str) -> None:
    if "SI" not in recognizers:
        raise ConfigError("recognizer registry must provide the "
                          "speaker-independent model under key 'SI'")
    if system in ("P1", "P2") and "T" not in recognizers:
        raise ConfigError(f"system {system} requires the accent-adapted "
                          "recognizer under key 'T'")


def train_system(train_utts, heldout_utts, recognizers: dict,
                 config: TrainConfig, spec: VCModelSpec | None = None,
                 model: VCModel | None = None):
    """Train one conversion system; returns (model, per-epoch log rows).

    Passing a previously trained ``model`` resumes at its epoch counter; all
    per-epoch randomness is keyed by absolute epoch, so a split run is
    bit-identical to an uninterrupted one.
    """
    config.validate()
    _check_registry(recognizers, config.system)
    if not train_utts:
        raise InputError("no training utterances")

    target_speakers = sorted({u.speaker for u in train_utts})
    if spec is None:
        spec = VCModelSpec()
    if spec.n_targets != len(target_speakers):
        spec = replace(spec, n_targets=len(target_speakers))
    if model is None:
        model = init_vc_model(spec, target_speakers, config.seed,
                              system=config.system)
    elif model.system != config.system:
        raise ConfigError(f"checkpoint was trained as {model.system}, "
                          f"config asks for {config.system}")
    speaker_index = {s: i for i, s in enumerate(model.target_speakers)}

    pairs = extract_training_bn(train_utts, recognizers, config.system)
    if pairs[0][0].features.shape[1] != spec.d_bn:
        raise ConfigError(f"bottleneck width {pairs[0][0].features.shape[1]} "
                          f"does not match model d_bn {spec.d_bn}")
    batches = make_batches(pairs, config.batch_size)

    store = model.store
    gen_names = generator_param_names(store)
    adv_names = (encoder_param_names(store) if config.adv_scope == "encoder"
                 else gen_names)
    beta = config.beta if config.system == "P2" else 0.0

    log = []
    for epoch in range(model.epochs_trained, config.epochs):
        phase = phase_for_epoch(epoch, config)
        lr = lr_schedule(epoch, config.base_lr, config.decay_rate,
                         config.decay_interval)
        gate = epoch >= config.gate_epoch
        frozen = freeze_mask(store, phase)
        order = substream(config.seed, "vc-train", "order", epoch).permutation(
            len(batches))
        sums = {"recons": 0.0, "adv": 0.0, "ce": 0.0}
        for i, bidx in enumerate(order):
            batch = batches[bidx]
            pb = pack_batch(batch, speaker_index, spec.d_obs)
            if phase == PHASE_G:
                h = encode_packed(model, pb.bn, pb.accent_rows, gate,
                                  pb.block, pb.mask)
                drop_rng = substream(config.seed, "vc-train", "dropout",
                                     epoch, i)
                pre, post = decode_packed(model, h, pb.speaker_rows, pb.target,
                                          pb.block, pb.mask, drop_rng)
                rl = loss_recons(pre, post, pb.target, pb.mask)
                ad.backward(rl, 1.0, param_filter=gen_names)
                sums["recons"] += rl.item()
                if beta > 0.0:
                    al = loss_adv(classify_packed(model, h), pb.mask)
                    ad.backward(al, beta, param_filter=adv_names)
                    sums["adv"] += al.item()
            else:
                with ad.no_grad():
                    h = encode_packed(model, pb.bn, pb.accent_rows, gate,
                                      pb.block, pb.mask)
                p = classify_packed(model, ad.tensor(h.data))
                dl = loss_D(p, pb.speaker_rows, pb.mask)
                ad.backward(dl, 1.0, param_filter=classifier_param_names(store))
                sums["ce"] += dl.item()
            adam_step(store, lr, update=lambda n: n not in frozen)
        n = len(batches)
        log.append({
            "epoch": epoch, "phase": phase, "lr": lr,
            "recons": sums["recons"] / n if phase == PHASE_G else float("nan"),
            "adv": (sums["adv"] / n if phase == PHASE_G and beta > 0.0
                    else float("nan")),
            "ce": sums["ce"] / n if phase == PHASE_D else float("nan"),
        })
        model.epochs_trained = epoch + 1

    model.meta["heldout_recons"] = (
        evaluate_recons(model, heldout_utts, recognizers, config.batch_size)
        if heldout_utts else float("nan"))
    model.meta["adv_scope"] = config.adv_scope
    model.meta["beta"] = beta
    return model, log


def evaluate_recons(model: VCModel, utts, recognizers: dict,
                    batch_size: int = 32) -> float:
    """Teacher-forced reconstruction loss (no dropout), gate active."""
    if not utts:
        raise InputError("no utterances to evaluate")
    speaker_index = {s: i for i, s in enumerate(model.target_speakers)}
    pairs = extract_training_bn(utts, recognizers, model.system)
    total, frames = 0.0, 0
    with ad.no_grad():
        for batch in make_batches(pairs, batch_size):
            pb = pack_batch(batch, speaker_index, model.spec.d_obs)
            h = encode_packed(model, pb.bn, pb.accent_rows, True, pb.block,
                              pb.mask)
            pre, post = decode_packed(model, h, pb.speaker_rows, pb.target,
                                      pb.block, pb.mask)
            total += loss_recons(pre, post, pb.target, pb.mask).item() * pb.n_valid
            frames += pb.n_valid
    return total / frames
