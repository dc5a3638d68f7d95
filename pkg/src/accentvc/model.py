"""The conversion network: accent-conditioned encoder over bottleneck
features, an auxiliary per-frame speaker classifier on the encoder output,
and an autoregressive decoder conditioned on a target-speaker embedding.

Training-time passes run on a packed time-major batch layout (rows
[t*block:(t+1)*block] hold step t) so the whole batch is a handful of tape
nodes.  Conversion runs free: each step consumes the model's own previous
post-postnet frame.  The postnet convolutions are causal (taps t-2, t-1, t)
precisely so that the free-running loop never needs a future frame.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from . import autodiff as ad
from .containers import load_checkpoint, read_container, save_checkpoint
from .errors import DomainError, InputError, StateError
from .optim import ParamStore
from .recognizer import BNSequence
from .rng import substream
from .world import ACCENTS


@dataclass(frozen=True)
class VCModelSpec:
    d_bn: int = 8                 # must match the recognizer's bottleneck
    d_obs: int = 16
    n_accents: int = 2
    d_accent_emb: int = 4
    n_targets: int = 3
    d_speaker_emb: int = 4
    conv_channels: int = 32
    enc_hidden: int = 32          # per direction; h is 2x this
    cls_hidden: int = 32
    prenet_dim: int = 32
    dec_hidden: int = 64
    postnet_channels: int = 32
    prenet_dropout: float = 0.5

    @property
    def d_h(self) -> int:
        return 2 * self.enc_hidden


@dataclass
class EncoderOutput:
    h: np.ndarray           # (T, d_h)
    accent_gate: bool


@dataclass(eq=False)
class VCModel:
    spec: VCModelSpec
    store: ParamStore
    target_speakers: list    # world speaker ids, index = embedding/classifier row
    system: str = "P2"
    epochs_trained: int = 0
    meta: dict = field(default_factory=dict)

    @property
    def trained(self) -> bool:
        return self.epochs_trained > 0

    def speaker_index(self, speaker: int) -> int:
        try:
            return self.target_speakers.index(speaker)
        except ValueError:
            raise DomainError(
                f"speaker {speaker} is not a conversion target; "
                f"valid targets: {self.target_speakers}") from None


CLASSIFIER_PREFIX = "cls."
ENCODER_PREFIX = "enc."


def classifier_param_names(store: ParamStore) -> set:
    return {n for n in store.names() if n.startswith(CLASSIFIER_PREFIX)}


def encoder_param_names(store: ParamStore) -> set:
    return {n for n in store.names() if n.startswith(ENCODER_PREFIX)}


def generator_param_names(store: ParamStore) -> set:
    return {n for n in store.names() if not n.startswith(CLASSIFIER_PREFIX)}


def init_vc_model(spec: VCModelSpec, target_speakers, seed: int,
                  system: str = "P2") -> VCModel:
    """Parameter construction order is fixed; it defines checkpoint layout."""
    rng = substream(seed, "vc-init")
    s = ParamStore()

    def w(name, shape, fan_in):
        s.add(name, rng.standard_normal(shape) / np.sqrt(fan_in))

    def b(name, dim):
        s.add(name, np.zeros(dim))

    d_in = spec.d_bn + spec.d_accent_emb
    s.add("emb.accent", 0.1 * rng.standard_normal((spec.n_accents, spec.d_accent_emb)))
    s.add("emb.speaker", 0.1 * rng.standard_normal((spec.n_targets, spec.d_speaker_emb)))

    w("enc.conv.W", (3, d_in, spec.conv_channels), 3 * d_in)
    b("enc.conv.b", spec.conv_channels)
    w("enc.fwd.Wx", (spec.conv_channels, spec.enc_hidden), spec.conv_channels)
    w("enc.fwd.Wh", (spec.enc_hidden, spec.enc_hidden), spec.enc_hidden)
    b("enc.fwd.b", spec.enc_hidden)
    w("enc.rev.Wx", (spec.conv_channels, spec.enc_hidden), spec.conv_channels)
    w("enc.rev.Wh", (spec.enc_hidden, spec.enc_hidden), spec.enc_hidden)
    b("enc.rev.b", spec.enc_hidden)

    w("cls.W1", (spec.d_h, spec.cls_hidden), spec.d_h)
    b("cls.b1", spec.cls_hidden)
    w("cls.W2", (spec.cls_hidden, spec.n_targets), spec.cls_hidden)
    b("cls.b2", spec.n_targets)

    d_dec_in = spec.prenet_dim + spec.d_h + spec.d_speaker_emb
    w("dec.prenet.W", (spec.d_obs, spec.prenet_dim), spec.d_obs)
    b("dec.prenet.b", spec.prenet_dim)
    w("dec.rnn.Wx", (d_dec_in, spec.dec_hidden), d_dec_in)
    w("dec.rnn.Wh", (spec.dec_hidden, spec.dec_hidden), spec.dec_hidden)
    b("dec.rnn.b", spec.dec_hidden)
    w("dec.out.W", (spec.dec_hidden, spec.d_obs), spec.dec_hidden)
    b("dec.out.b", spec.d_obs)

    w("post.conv1.W", (3, spec.d_obs, spec.postnet_channels), 3 * spec.d_obs)
    b("post.conv1.b", spec.postnet_channels)
    w("post.conv2.W", (3, spec.postnet_channels, spec.d_obs), 3 * spec.postnet_channels)
    b("post.conv2.b", spec.d_obs)

    return VCModel(spec=spec, store=s, target_speakers=list(target_speakers),
                   system=system)


# ---------------------------------------------------------------------------
# packed (time-major batched) passes used in training


def encode_packed(model: VCModel, bn, accent_rows, gate: bool, block: int,
                  mask=None):
    """bn: (T*block, d_bn) array; accent_rows: (T*block,) accent indices.

    With the gate off the accent slot is a zero block, so the output is
    bitwise independent of accent ids and no gradient reaches the table.
    """
    s = model.store
    x = ad.tensor(bn)
    if gate:
        emb = ad.embedding_lookup(s.l("emb.accent"), accent_rows)
        if mask is not None:
            # padded rows must stay all-zero: the centered conv taps row t+1,
            # and a live embedding there would leak into the last valid step
            emb = ad.mul(emb, np.asarray(mask))
    else:
        emb = ad.tensor(np.zeros((bn.shape[0], model.spec.d_accent_emb)))
    xin = ad.concat_cols([x, emb])
    c = ad.relu(ad.conv1d_time(xin, s.l("enc.conv.W"), s.l("enc.conv.b"), block=block))
    f = ad.rnn_scan(c, s.l("enc.fwd.Wx"), s.l("enc.fwd.Wh"), s.l("enc.fwd.b"),
                    block=block, mask=mask)
    r = ad.rnn_scan(c, s.l("enc.rev.Wx"), s.l("enc.rev.Wh"), s.l("enc.rev.b"),
                    block=block, mask=mask, reverse=True)
    return ad.concat_cols([f, r])


def classify_packed(model: VCModel, h):
    s = model.store
    z = ad.tanh(ad.linear(h, s.l("cls.W1"), s.l("cls.b1")))
    return ad.softmax_rows(ad.linear(z, s.l("cls.W2"), s.l("cls.b2")))


def decode_packed(model: VCModel, h, speaker_rows, teacher, block: int,
                  mask=None, dropout_rng=None):
    """Teacher-forced decode: step t eats teacher frame t-1 (zeros at t=0)."""
    s = model.store
    prev = ad.shift_rows_down(ad.tensor(teacher), block)
    pn = ad.relu(ad.linear(prev, s.l("dec.prenet.W"), s.l("dec.prenet.b")))
    if dropout_rng is not None:
        pn = ad.dropout(pn, model.spec.prenet_dropout, dropout_rng)
    spk = ad.embedding_lookup(s.l("emb.speaker"), speaker_rows)
    dec_in = ad.concat_cols([pn, h, spk])
    r = ad.rnn_scan(dec_in, s.l("dec.rnn.Wx"), s.l("dec.rnn.Wh"), s.l("dec.rnn.b"),
                    block=block, mask=mask)
    pre = ad.linear(r, s.l("dec.out.W"), s.l("dec.out.b"))
    c1 = ad.tanh(ad.conv1d_time(pre, s.l("post.conv1.W"), s.l("post.conv1.b"),
                                block=block, causal=True))
    resid = ad.conv1d_time(c1, s.l("post.conv2.W"), s.l("post.conv2.b"),
                           block=block, causal=True)
    post = pre + resid
    return pre, post


# ---------------------------------------------------------------------------
# public per-utterance operations


def _bn_array(bn) -> np.ndarray:
    feats = bn.features if isinstance(bn, BNSequence) else np.asarray(bn)
    if feats.ndim != 2 or feats.shape[0] == 0:
        raise InputError(f"bottleneck sequence must be a nonempty matrix, got "
                         f"shape {feats.shape}")
    return feats


def encode(model: VCModel, bn, accent: str, accent_gate: bool = True) -> EncoderOutput:
    feats = _bn_array(bn)
    if accent not in ACCENTS:
        raise DomainError(f"unknown accent {accent!r}; expected one of {ACCENTS}")
    rows = np.full(feats.shape[0], ACCENTS.index(accent), dtype=np.int64)
    with ad.no_grad():
        h = encode_packed(model, feats, rows, gate=accent_gate, block=1)
    return EncoderOutput(h=h.data, accent_gate=accent_gate)


def classify_speaker(model: VCModel, enc: EncoderOutput) -> np.ndarray:
    if enc.h.shape[0] == 0:
        raise InputError("cannot classify an empty encoding")
    with ad.no_grad():
        p = classify_packed(model, ad.tensor(enc.h))
    return p.data


def decode(model: VCModel, enc: EncoderOutput, speaker: int, teacher: np.ndarray,
           dropout_rng=None):
    """Teacher-forced synthesis of one utterance; returns (pre, post) arrays."""
    teacher = np.asarray(teacher, dtype=np.float64)
    if teacher.shape[0] != enc.h.shape[0]:
        raise InputError(
            f"teacher length {teacher.shape[0]} does not match encoding length "
            f"{enc.h.shape[0]}")
    idx = model.speaker_index(speaker)
    rows = np.full(enc.h.shape[0], idx, dtype=np.int64)
    with ad.no_grad():
        pre, post = decode_packed(model, ad.tensor(enc.h), rows, teacher, block=1,
                                  dropout_rng=dropout_rng)
    return pre.data, post.data


def convert(model: VCModel, bn, target_speaker: int, target_accent: str) -> np.ndarray:
    """Free-running conversion: accent gate active, dropout off, step t feeds
    on the model's own post-postnet frame t-1."""
    if not model.trained:
        raise StateError("model has not been trained; refusing to convert")
    feats = _bn_array(bn)
    idx = model.speaker_index(target_speaker)
    enc = encode(model, feats, target_accent, accent_gate=True)
    h = enc.h
    v = {name: model.store[name].value for name in model.store.names()}
    spk = v["emb.speaker"][idx]
    T = h.shape[0]
    d = model.spec.d_obs
    prev = np.zeros(d)
    h_dec = np.zeros(model.spec.dec_hidden)
    pre_hist = [np.zeros(d), np.zeros(d)]    # pre[t-2], pre[t-1]
    c1_hist = [np.zeros(model.spec.postnet_channels)] * 2
    out = np.empty((T, d))
    for t in range(T):
        pn = np.maximum(prev @ v["dec.prenet.W"] + v["dec.prenet.b"], 0.0)
        xin = np.concatenate([pn, h[t], spk])
        h_dec = np.tanh(xin @ v["dec.rnn.Wx"] + h_dec @ v["dec.rnn.Wh"] + v["dec.rnn.b"])
        pre = h_dec @ v["dec.out.W"] + v["dec.out.b"]
        c1 = np.tanh(pre_hist[0] @ v["post.conv1.W"][0]
                     + pre_hist[1] @ v["post.conv1.W"][1]
                     + pre @ v["post.conv1.W"][2] + v["post.conv1.b"])
        resid = (c1_hist[0] @ v["post.conv2.W"][0]
                 + c1_hist[1] @ v["post.conv2.W"][1]
                 + c1 @ v["post.conv2.W"][2] + v["post.conv2.b"])
        post = pre + resid
        out[t] = post
        pre_hist = [pre_hist[1], pre]
        c1_hist = [c1_hist[1], c1]
        prev = post
    return out


# ---------------------------------------------------------------------------
# persistence


def save_vc_model(path, model: VCModel, extra_meta: dict | None = None) -> None:
    meta = {"model_kind": "vc", "system": model.system,
            "spec": asdict(model.spec), "target_speakers": model.target_speakers,
            "epochs_trained": model.epochs_trained, "accents": list(ACCENTS)}
    meta.update(extra_meta or {})
    save_checkpoint(path, model.store, meta)


def load_vc_model(path) -> VCModel:
    _, meta, _ = read_container(path, expect_kind="checkpoint")
    if meta.get("model_kind") != "vc":
        raise InputError(f"{path} is not a conversion-model checkpoint")
    spec = VCModelSpec(**meta["spec"])
    model = init_vc_model(spec, meta["target_speakers"], seed=0,
                          system=meta["system"])
    load_checkpoint(path, model.store)
    model.epochs_trained = int(meta["epochs_trained"])
    model.meta = meta
    return model
