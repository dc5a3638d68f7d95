"""Walk through the synthetic world: factors, accent geometry, corpus draws.

Every utterance is rendered from known latent factors (content token, tone
index, speaker identity, accent), so downstream claims about what a model
keeps or discards can be checked against ground truth instead of listener
panels.  This script builds a world, inspects its geometry, draws the
standard corpus, and prints what each split contains.
"""

import argparse

import numpy as np

from accentvc.corpus import default_plan, generate_corpus
from accentvc.world import build_world, sample_utterance


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seed", type=int, default=7)
    args = ap.parse_args()

    world = build_world(args.seed)
    spec = world.spec
    print("== world ==")
    print(f"tokens {spec.n_tokens}, content dim {spec.d_content}, "
          f"tone dim {spec.d_tone}, speaker dim {spec.d_speaker}, "
          f"observed dim {spec.d_obs}")
    print(f"speakers {spec.n_speakers} ({spec.n_targets} targets), "
          f"accents M and T, noise sigma {spec.sigma}")

    # the T accent is one constant offset plus a tone remapping table
    print("\n== accent T geometry ==")
    print(f"offset norm      {np.linalg.norm(world.accent_offset):.3f}")
    remapped = int(np.sum(world.tone_map != np.arange(spec.n_tokens)))
    print(f"tones remapped   {remapped} of {spec.n_tokens} tokens")

    # same speaker, same content, both accents: the difference is the
    # offset plus whatever the tone remap moved
    utt_m = sample_utterance(world, speaker=0, accent="M", seed=123)
    utt_t = sample_utterance(world, speaker=0, accent="T", seed=123)
    delta = utt_t.frames.mean(axis=0) - utt_m.frames.mean(axis=0)
    cos = float(np.dot(delta, world.accent_offset)
                / (np.linalg.norm(delta) * np.linalg.norm(world.accent_offset)))
    print(f"mean frame shift aligns with the offset: cosine {cos:+.3f}")

    print("\n== corpus ==")
    plan = default_plan(spec, n_target_utts=60, n_source_utts=12)
    corpus = generate_corpus(world, plan, seed=args.seed)
    for split in ("train", "heldout"):
        utts = getattr(corpus, split)
        cells = {}
        for u in utts:
            cells[(u.speaker, u.accent)] = cells.get((u.speaker, u.accent), 0) + 1
        frames = sum(u.frames.shape[0] for u in utts)
        print(f"{split:>8s}: {len(utts)} utterances, {frames} frames, "
              f"{len(cells)} (speaker, accent) cells")
    # each speaker appears with exactly one accent in training data; the
    # crossing needed for evaluation comes from fresh probe corpora instead
    native = {(u.speaker, u.accent) for u in corpus.train}
    per_speaker = {}
    for s, a in native:
        per_speaker.setdefault(s, set()).add(a)
    assert all(len(a) == 1 for a in per_speaker.values())
    print("each training speaker is coupled to a single native accent")


if __name__ == "__main__":
    main()
