"""Corpus plans, deterministic corpus generation, and on-disk corpus files.

A plan lists (speaker, accent, count, role) entries under native-accent
coupling: every speaker records in exactly one accent.  Three target
speakers carry roles matching the conversion setup (two native accent M,
one native accent T); source speakers provide recognizer training data and
conversion inputs but never enter conversion-model training.  Every
utterance is drawn from its own substream keyed by (seed, speaker, accent,
index), so generation order cannot change the result.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from .containers import read_container, write_container
from .errors import InputError, PlanError
from .rng import substream
from .world import ACCENTS, Utterance, World, sample_utterance

TARGET, SOURCE = "target", "source"


@dataclass(frozen=True)
class PlanEntry:
    speaker: int
    accent: str
    count: int
    role: str


@dataclass
class CorpusPlan:
    entries: list = field(default_factory=list)
    train_fraction: float = 0.9

    def targets(self) -> list:
        return [e for e in self.entries if e.role == TARGET]

    def sources(self) -> list:
        return [e for e in self.entries if e.role == SOURCE]

    def to_dict(self) -> dict:
        return {"train_fraction": self.train_fraction,
                "entries": [asdict(e) for e in self.entries]}

    @staticmethod
    def from_dict(d: dict) -> "CorpusPlan":
        return CorpusPlan(entries=[PlanEntry(**e) for e in d["entries"]],
                          train_fraction=d["train_fraction"])


def default_plan(n_target_utts: int = 300, n_source_utts: int = 30,
                 n_sources: int = 9, train_fraction: float = 0.9) -> CorpusPlan:
    entries = [
        PlanEntry(0, "M", n_target_utts, TARGET),
        PlanEntry(1, "M", n_target_utts, TARGET),
        PlanEntry(2, "T", n_target_utts, TARGET),
    ]
    for i in range(n_sources):
        entries.append(PlanEntry(3 + i, "M", n_source_utts, SOURCE))
    return CorpusPlan(entries=entries, train_fraction=train_fraction)


def validate_plan(plan: CorpusPlan, world: World) -> None:
    seen_accents: dict[int, str] = {}
    for e in plan.entries:
        if e.accent not in ACCENTS:
            raise PlanError(f"entry for speaker {e.speaker} has unknown accent {e.accent!r}")
        if not 0 <= e.speaker < world.spec.n_speakers:
            raise PlanError(f"speaker {e.speaker} outside world's {world.spec.n_speakers}")
        if e.count <= 0:
            raise PlanError(f"speaker {e.speaker} has non-positive count {e.count}")
        if e.role not in (TARGET, SOURCE):
            raise PlanError(f"speaker {e.speaker} has unknown role {e.role!r}")
        prior = seen_accents.get(e.speaker)
        if prior is not None and prior != e.accent:
            raise PlanError(
                f"speaker {e.speaker} appears with accents {prior} and {e.accent}; "
                f"each speaker records in exactly one accent")
        seen_accents[e.speaker] = e.accent
    targets = plan.targets()
    if len(targets) != 3:
        raise PlanError(f"need exactly 3 target speakers, got {len(targets)}")
    accents = [e.accent for e in targets]
    if sorted(accents) != ["M", "M", "T"]:
        raise PlanError(f"target accents must be two M and one T, got {accents}")
    if not 0.0 < plan.train_fraction <= 1.0:
        raise PlanError(f"train fraction {plan.train_fraction} not in (0, 1]")


@dataclass
class Corpus:
    seed: int
    world_hash: str
    plan: CorpusPlan
    train: list = field(default_factory=list)
    heldout: list = field(default_factory=list)

    def all_utterances(self) -> list:
        return self.train + self.heldout


def generate_corpus(world: World, plan: CorpusPlan, seed: int) -> Corpus:
    """Sample the plan; the last round(count * (1 - train_fraction)) utterances
    of each speaker form the held-out split."""
    validate_plan(plan, world)
    corpus = Corpus(seed=seed, world_hash=world.content_hash(), plan=plan)
    for e in plan.entries:
        n_held = int(round(e.count * (1.0 - plan.train_fraction)))
        for j in range(e.count):
            # accent deliberately left out of the key: the same (speaker, j)
            # stream renders the same content under either accent
            rng = substream(seed, "corpus", e.speaker, j)
            utt = sample_utterance(world, e.speaker, e.accent, rng)
            (corpus.heldout if j >= e.count - n_held else corpus.train).append(utt)
    return corpus


def sample_eval_corpus(world: World, cells, n_per_cell: int, seed: int) -> list:
    """Direct world samples for probe training: a list of (speaker, accent)
    cells rendered n_per_cell times each.

    Unlike training corpora this deliberately crosses speakers with both
    accents, breaking the native coupling so probes cannot substitute
    speaker identity for accent (or vice versa).  Samples are real world
    output, never converted frames.
    """
    out = []
    for speaker, accent in cells:
        for j in range(n_per_cell):
            # accent-free key: (speaker, j) under M and T yields parallel
            # renditions, so an accent probe cannot lean on content statistics
            rng = substream(seed, "eval-corpus", speaker, j)
            out.append(sample_utterance(world, speaker, accent, rng))
    return out


# ---------------------------------------------------------------------------
# role-based selections


def si_training_utterances(corpus: Corpus) -> list:
    """All accent-M training utterances (targets and sources)."""
    return [u for u in corpus.train if u.accent == "M"]


def si_heldout_utterances(corpus: Corpus) -> list:
    return [u for u in corpus.heldout if u.accent == "M"]


def accent_t_utterances(corpus: Corpus, split: str = "train") -> list:
    utts = corpus.train if split == "train" else corpus.heldout
    return [u for u in utts if u.accent == "T"]


def vc_training_utterances(corpus: Corpus) -> list:
    """Target speakers' native-accent training data; sources are excluded."""
    target_ids = {e.speaker for e in corpus.plan.targets()}
    return [u for u in corpus.train if u.speaker in target_ids]


def vc_heldout_utterances(corpus: Corpus) -> list:
    target_ids = {e.speaker for e in corpus.plan.targets()}
    return [u for u in corpus.heldout if u.speaker in target_ids]


def conversion_sources(corpus: Corpus, n: int = 30) -> list:
    """Unseen-speaker utterances to convert: round-robin over source speakers,
    held-out split first."""
    by_speaker: dict[int, list] = {}
    for utt in corpus.heldout + corpus.train:
        if utt.speaker in {e.speaker for e in corpus.plan.sources()}:
            by_speaker.setdefault(utt.speaker, []).append(utt)
    if not by_speaker:
        raise InputError("corpus has no source speakers to convert from")
    speakers = sorted(by_speaker)
    picked, idx = [], 0
    while len(picked) < n:
        spk = speakers[idx % len(speakers)]
        pool = by_speaker[spk]
        take = idx // len(speakers)
        if take >= len(pool):
            raise InputError(f"not enough source utterances: wanted {n}")
        picked.append(pool[take])
        idx += 1
    return picked


# ---------------------------------------------------------------------------
# persistence: one container per split


def _pack_utterances(utts) -> dict:
    arrays = {
        "speaker": np.array([u.speaker for u in utts], dtype=np.int64),
        "accent": np.array([ACCENTS.index(u.accent) for u in utts], dtype=np.int64),
        "tokens": np.concatenate([u.tokens for u in utts]) if utts else np.zeros(0, np.int64),
        "tones": np.concatenate([u.tones for u in utts]) if utts else np.zeros(0, np.int64),
        "durations": np.concatenate([u.durations for u in utts]) if utts else np.zeros(0, np.int64),
        "token_offset": np.cumsum([0] + [len(u.tokens) for u in utts]).astype(np.int64),
        "frames": np.concatenate([u.frames for u in utts]) if utts else np.zeros((0, 0)),
        "frame_tokens": np.concatenate([u.frame_tokens for u in utts]) if utts else np.zeros(0, np.int64),
        "frame_tones": np.concatenate([u.frame_tones for u in utts]) if utts else np.zeros(0, np.int64),
        "frame_offset": np.cumsum([0] + [u.n_frames for u in utts]).astype(np.int64),
    }
    return arrays


def _unpack_utterances(arrays) -> list:
    utts = []
    for i in range(arrays["speaker"].shape[0]):
        t0, t1 = arrays["token_offset"][i], arrays["token_offset"][i + 1]
        f0, f1 = arrays["frame_offset"][i], arrays["frame_offset"][i + 1]
        utts.append(Utterance(
            speaker=int(arrays["speaker"][i]),
            accent=ACCENTS[int(arrays["accent"][i])],
            tokens=arrays["tokens"][t0:t1],
            tones=arrays["tones"][t0:t1],
            durations=arrays["durations"][t0:t1],
            frames=arrays["frames"][f0:f1],
            frame_tokens=arrays["frame_tokens"][f0:f1],
            frame_tones=arrays["frame_tones"][f0:f1],
        ))
    return utts


def save_corpus(directory, corpus: Corpus) -> dict:
    """Write train/heldout containers; returns {split: path}."""
    import os
    paths = {}
    for split, utts in (("train", corpus.train), ("heldout", corpus.heldout)):
        meta = {"seed": corpus.seed, "world_hash": corpus.world_hash,
                "plan": corpus.plan.to_dict(), "split": split, "version": 1,
                "provenance": "real"}
        path = os.path.join(os.fspath(directory), f"corpus.{split}.avc")
        write_container(path, "corpus", meta, _pack_utterances(utts))
        paths[split] = path
    return paths


def load_corpus(directory) -> Corpus:
    import os
    splits = {}
    meta = None
    for split in ("train", "heldout"):
        path = os.path.join(os.fspath(directory), f"corpus.{split}.avc")
        _, meta, arrays = read_container(path, expect_kind="corpus")
        splits[split] = _unpack_utterances(arrays)
    return Corpus(seed=int(meta["seed"]), world_hash=meta["world_hash"],
                  plan=CorpusPlan.from_dict(meta["plan"]),
                  train=splits["train"], heldout=splits["heldout"])
