"""Batch conversion: run source utterances through a trained model for every
(target speaker, target accent) cell and keep the source's token ground truth
alongside the converted frames so content preservation can be scored later.

The bottleneck extractor is chosen by the TARGET accent: converting into the
offset accent routes the source through the accent-adapted recognizer (when
the system has one), exactly as the matching training utterances did.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .containers import read_container, write_container
from .errors import InputError
from .model import VCModel, convert
from .recognizer import extract_bn, select_extractor
from .world import ACCENTS


@dataclass(eq=False)
class ConversionRecord:
    system: str
    source_speaker: int
    source_index: int          # position of the source utterance in its batch
    target_speaker: int
    target_accent: str
    tokens: np.ndarray         # source ground truth
    tones: np.ndarray
    durations: np.ndarray
    frame_tokens: np.ndarray
    frame_tones: np.ndarray
    frames: np.ndarray         # converted observation frames
    provenance: str = field(default="converted", repr=False)

    @property
    def n_frames(self) -> int:
        return self.frames.shape[0]


def conversion_cells(model: VCModel):
    return [(s, a) for s in model.target_speakers for a in ACCENTS]


def run_conversions(model: VCModel, sources, recognizers: dict):
    """Every source crossed with every (target speaker, accent) cell."""
    if not sources:
        raise InputError("no source utterances to convert")
    records = []
    for i, utt in enumerate(sources):
        # the extractor follows the accent of the incoming speech, so the
        # usual all-Mandarin source pool always goes through the SI model
        rec = select_extractor(utt.accent, recognizers, model.system)
        bn = extract_bn(rec, utt)
        for speaker, accent in conversion_cells(model):
            frames = convert(model, bn, speaker, accent)
            records.append(ConversionRecord(
                system=model.system, source_speaker=utt.speaker,
                source_index=i, target_speaker=speaker, target_accent=accent,
                tokens=utt.tokens.copy(), tones=utt.tones.copy(),
                durations=utt.durations.copy(),
                frame_tokens=utt.frame_tokens.copy(),
                frame_tones=utt.frame_tones.copy(), frames=frames))
    return records


def save_conversions(path, records, meta: dict | None = None) -> None:
    if not records:
        raise InputError("refusing to write an empty conversion batch")
    token_offset = np.cumsum([0] + [len(r.tokens) for r in records])
    frame_offset = np.cumsum([0] + [r.n_frames for r in records])
    arrays = {
        "source_speaker": np.array([r.source_speaker for r in records]),
        "source_index": np.array([r.source_index for r in records]),
        "target_speaker": np.array([r.target_speaker for r in records]),
        "target_accent": np.array([ACCENTS.index(r.target_accent) for r in records]),
        "token_offset": token_offset,
        "frame_offset": frame_offset,
        "tokens": np.concatenate([r.tokens for r in records]),
        "tones": np.concatenate([r.tones for r in records]),
        "durations": np.concatenate([r.durations for r in records]),
        "frame_tokens": np.concatenate([r.frame_tokens for r in records]),
        "frame_tones": np.concatenate([r.frame_tones for r in records]),
        "frames": np.concatenate([r.frames for r in records], axis=0),
    }
    header = {"system": records[0].system, "count": len(records),
              "provenance": "converted"}
    header.update(meta or {})
    write_container(path, "conversions", header, arrays)


def load_conversions(path):
    _, meta, arrays = read_container(path, expect_kind="conversions")
    records = []
    to = arrays["token_offset"].astype(int)
    fo = arrays["frame_offset"].astype(int)
    for i in range(int(meta["count"])):
        records.append(ConversionRecord(
            system=meta["system"],
            source_speaker=int(arrays["source_speaker"][i]),
            source_index=int(arrays["source_index"][i]),
            target_speaker=int(arrays["target_speaker"][i]),
            target_accent=ACCENTS[int(arrays["target_accent"][i])],
            tokens=arrays["tokens"][to[i]:to[i + 1]].astype(np.int64),
            tones=arrays["tones"][to[i]:to[i + 1]].astype(np.int64),
            durations=arrays["durations"][to[i]:to[i + 1]].astype(np.int64),
            frame_tokens=arrays["frame_tokens"][fo[i]:fo[i + 1]].astype(np.int64),
            frame_tones=arrays["frame_tones"][fo[i]:fo[i + 1]].astype(np.int64),
            frames=arrays["frames"][fo[i]:fo[i + 1]]))
    return records, meta
