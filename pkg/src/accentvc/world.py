"""A synthetic generative world with recoverable content/tone/speaker/accent factors.

Each frame is a linear projection of the concatenation of a content token
vector (shifted by a per-accent offset), a tone vector, and a speaker
vector, plus isotropic noise.  Accent M is the identity accent; accent T
adds a fixed offset in content space and stochastically remaps canonical
tone 1 to tone 3, standing in for a tone-preference accent.  Because every
factor is known, downstream claims about what a representation encodes can
be tested against ground truth instead of listening tests.
"""

from __future__ import annotations

import hashlib
from dataclasses import asdict, dataclass, field

import numpy as np

from .containers import container_bytes, read_container, write_container
from .errors import ConfigError, DomainError
from .rng import substream

ACCENTS = ("M", "T")
N_TONES = 4
REMAP_FROM, REMAP_TO = 1, 3  # accent T prefers tone 3 where tone 1 is canonical

# utterance geometry (frames are abstract observation vectors, not audio)
MIN_TOKENS, MAX_TOKENS = 5, 12
MIN_DURATION, MAX_DURATION = 2, 4


@dataclass(frozen=True)
class WorldSpec:
    n_tokens: int = 20
    d_content: int = 8
    d_tone: int = 4
    d_speaker: int = 4
    d_obs: int = 16
    n_speakers: int = 12
    n_targets: int = 3
    sigma: float = 0.05
    tone_remap_prob: float = 0.8
    # relative factor strengths; defaults calibrated on the reference runs
    accent_offset_scale: float = 1.2
    tone_scale: float = 1.0
    speaker_scale: float = 1.0

    @property
    def d_factors(self) -> int:
        return self.d_content + self.d_tone + self.d_speaker


@dataclass
class World:
    spec: WorldSpec
    seed: int
    codebook: np.ndarray        # (K, d_content), unit rows
    tone_of: np.ndarray         # (K,) canonical tone class in 1..4
    tone_vecs: np.ndarray       # (4, d_tone)
    speakers: np.ndarray        # (n_speakers, d_speaker)
    accent_offset: dict = field(default_factory=dict)  # accent -> (d_content,)
    w_obs: np.ndarray = None    # (d_obs, d_factors), orthonormal columns

    def content_hash(self) -> str:
        meta, arrays = _world_payload(self)
        return hashlib.sha256(container_bytes("world", meta, arrays)).hexdigest()


def _separated_unit_rows(rng, n, dim, min_dist, scale=1.0):
    # redraw the whole set until all pairwise distances clear the floor;
    # deterministic given the generator state
    for _ in range(1000):
        rows = rng.standard_normal((n, dim))
        rows /= np.linalg.norm(rows, axis=1, keepdims=True)
        diff = rows[:, None, :] - rows[None, :, :]
        dist = np.linalg.norm(diff, axis=2) + np.eye(n) * 1e9
        if dist.min() > min_dist:
            return rows * scale
    raise ConfigError(
        f"could not place {n} vectors in {dim} dims with min distance {min_dist}")


def build_world(seed: int, spec: WorldSpec | None = None) -> World:
    """Deterministically instantiate a world from named substreams of ``seed``."""
    spec = spec or WorldSpec()
    if spec.n_tokens < 8:
        raise ConfigError(f"need at least 8 tokens, got {spec.n_tokens}")
    if spec.d_obs < spec.d_factors:
        raise ConfigError(
            f"observation dim {spec.d_obs} smaller than factor dim {spec.d_factors}")
    if not 0.0 <= spec.tone_remap_prob <= 1.0:
        raise ConfigError(f"tone remap probability {spec.tone_remap_prob} not in [0, 1]")

    codebook = _separated_unit_rows(substream(seed, "world", "codebook"),
                                    spec.n_tokens, spec.d_content, min_dist=0.5)
    tone_of = (np.arange(spec.n_tokens, dtype=np.int64) % N_TONES) + 1
    tone_vecs = _separated_unit_rows(substream(seed, "world", "tones"),
                                     N_TONES, spec.d_tone, min_dist=0.7,
                                     scale=spec.tone_scale)
    speakers = _separated_unit_rows(substream(seed, "world", "speakers"),
                                    spec.n_speakers, spec.d_speaker, min_dist=0.4,
                                    scale=spec.speaker_scale)
    o_t = substream(seed, "world", "accent").standard_normal(spec.d_content)
    o_t = o_t / np.linalg.norm(o_t) * spec.accent_offset_scale
    offsets = {"M": np.zeros(spec.d_content), "T": o_t}

    raw = substream(seed, "world", "proj").standard_normal((spec.d_obs, spec.d_factors))
    q, r = np.linalg.qr(raw)
    w_obs = q * np.sign(np.diag(r))  # fix column signs so QR is unique

    return World(spec=spec, seed=seed, codebook=codebook, tone_of=tone_of,
                 tone_vecs=tone_vecs, speakers=speakers, accent_offset=offsets,
                 w_obs=w_obs)


def _check_ids(world: World, speaker: int, accent: str) -> None:
    if accent not in ACCENTS:
        raise DomainError(f"unknown accent {accent!r}; expected one of {ACCENTS}")
    if not 0 <= speaker < world.spec.n_speakers:
        raise DomainError(
            f"unknown speaker {speaker}; world has {world.spec.n_speakers} speakers")


def tone_realize(world: World, token: int, accent: str, rng) -> int:
    """Canonical tone for accent M; accent T remaps tone 1 to 3 w.p. p_T.

    Exactly one uniform draw is consumed per call whatever the branch, so
    streams stay aligned between accents: the same substream renders the
    same content under M and T, differing only in offset and remap.
    """
    if not 0 <= token < world.spec.n_tokens:
        raise DomainError(f"token {token} outside vocabulary of {world.spec.n_tokens}")
    u = rng.random()
    canonical = int(world.tone_of[token])
    if accent == "T" and canonical == REMAP_FROM and u < world.spec.tone_remap_prob:
        return REMAP_TO
    return canonical


def factor_vector(world: World, token: int, tone: int, speaker: int,
                  accent: str) -> np.ndarray:
    """The noiseless concat(content + accent offset, tone, speaker) vector."""
    return np.concatenate([
        world.codebook[token] + world.accent_offset[accent],
        world.tone_vecs[tone - 1],
        world.speakers[speaker],
    ])


def render_frames(world: World, tokens, tones, durations, speaker: int,
                  accent: str, noise_rng=None):
    """Project factor vectors to observation space, one frame per duration slot.

    Returns (frames, frame_tokens, frame_tones).  With ``noise_rng`` None the
    output is the exact noiseless rendering.
    """
    _check_ids(world, speaker, accent)
    tokens = np.asarray(tokens, dtype=np.int64)
    tones = np.asarray(tones, dtype=np.int64)
    durations = np.asarray(durations, dtype=np.int64)
    total = int(durations.sum())
    frames = np.empty((total, world.spec.d_obs))
    frame_tokens = np.empty(total, dtype=np.int64)
    frame_tones = np.empty(total, dtype=np.int64)
    row = 0
    for k, tone, d in zip(tokens, tones, durations):
        base = world.w_obs @ factor_vector(world, int(k), int(tone), speaker, accent)
        frames[row:row + d] = base
        frame_tokens[row:row + d] = k
        frame_tones[row:row + d] = tone
        row += d
    if noise_rng is not None:
        frames = frames + world.spec.sigma * noise_rng.standard_normal(frames.shape)
    return frames, frame_tokens, frame_tones


@dataclass(eq=False)
class Utterance:
    speaker: int
    accent: str
    tokens: np.ndarray      # (L,)
    tones: np.ndarray       # (L,) realized tones
    durations: np.ndarray   # (L,) frames per token
    frames: np.ndarray      # (T, d_obs)
    frame_tokens: np.ndarray  # (T,)
    frame_tones: np.ndarray   # (T,)

    @property
    def n_frames(self) -> int:
        return self.frames.shape[0]


def sample_utterance(world: World, speaker: int, accent: str, rng) -> Utterance:
    """Draw length, tokens, durations, realized tones, then noisy frames."""
    _check_ids(world, speaker, accent)
    n = int(rng.integers(MIN_TOKENS, MAX_TOKENS + 1))
    tokens = rng.integers(0, world.spec.n_tokens, size=n)
    durations = rng.integers(MIN_DURATION, MAX_DURATION + 1, size=n)
    tones = np.array([tone_realize(world, int(k), accent, rng) for k in tokens],
                     dtype=np.int64)
    frames, frame_tokens, frame_tones = render_frames(
        world, tokens, tones, durations, speaker, accent, noise_rng=rng)
    return Utterance(speaker=speaker, accent=accent, tokens=tokens, tones=tones,
                     durations=durations, frames=frames, frame_tokens=frame_tokens,
                     frame_tones=frame_tones)


# ---------------------------------------------------------------------------
# persistence


def _world_payload(world: World):
    meta = {"spec": asdict(world.spec), "seed": world.seed, "version": 1}
    arrays = {
        "codebook": world.codebook,
        "tone_of": world.tone_of,
        "tone_vecs": world.tone_vecs,
        "speakers": world.speakers,
        "offset_T": world.accent_offset["T"],
        "w_obs": world.w_obs,
    }
    return meta, arrays


def save_world(path, world: World) -> None:
    meta, arrays = _world_payload(world)
    write_container(path, "world", meta, arrays)


def load_world(path) -> World:
    _, meta, arrays = read_container(path, expect_kind="world")
    spec = WorldSpec(**meta["spec"])
    offsets = {"M": np.zeros(spec.d_content), "T": arrays["offset_T"]}
    return World(spec=spec, seed=int(meta["seed"]), codebook=arrays["codebook"],
                 tone_of=arrays["tone_of"], tone_vecs=arrays["tone_vecs"],
                 speakers=arrays["speakers"], accent_offset=offsets,
                 w_obs=arrays["w_obs"])
