"""Two content extractors and what their bottlenecks still know.

A speaker-independent recognizer is trained on accent-M speech only, then a
copy is lightly adapted on accent-T data.  Routing T utterances through the
adapted copy is what makes the extraction accent dependent.  A linear accent
probe on the bottleneck features shows the payoff: the routed features give
the probe less accent signal to work with.
"""

import argparse

import numpy as np

from accentvc.corpus import (accent_t_utterances, default_plan,
                             generate_corpus, si_heldout_utterances,
                             si_training_utterances)
from accentvc.evaluation import (ProbeConfig, probe_corpus, probe_predict,
                                 train_probe)
from accentvc.recognizer import (RecognizerConfig, extract_bn, frame_accuracy,
                                 finetune_accent_recognizer,
                                 train_si_recognizer)
from accentvc.world import ACCENTS, build_world


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seed", type=int, default=7)
    args = ap.parse_args()

    world = build_world(args.seed)
    plan = default_plan(world.spec, n_target_utts=120, n_source_utts=20)
    corpus = generate_corpus(world, plan, seed=args.seed)
    cfg = RecognizerConfig()

    print("training the speaker-independent recognizer (accent M only)")
    si = train_si_recognizer(si_training_utterances(corpus), cfg,
                             seed=args.seed)
    held = si_heldout_utterances(corpus)
    print(f"  heldout frame accuracy {frame_accuracy(si, held):.3f}")

    print(f"adapting a copy on accent T ({cfg.finetune_epochs} epoch)")
    ft = finetune_accent_recognizer(si, accent_t_utterances(corpus),
                                    seed=args.seed)
    t_held = [u for u in corpus.heldout if u.accent == "T"]
    print(f"  SI on accent-T heldout  {frame_accuracy(si, t_held):.3f}")
    print(f"  FT on accent-T heldout  {frame_accuracy(ft, t_held):.3f}")

    # crossed probe corpus: every (speaker, accent) cell populated
    targets = list(range(world.spec.n_targets))
    utts = probe_corpus(world, targets, n_per_cell=10, seed=args.seed + 50)
    pcfg = ProbeConfig(max_epochs=20, seed=3)

    def bn_rows(route):
        feats, labels = [], []
        for u in utts:
            rec = ft if (route and u.accent == "T") else si
            feats.append(extract_bn(rec, u))
            labels.append(u.accent)
        return feats, labels

    print("\naccent probe on bottleneck features (lower = less leakage)")
    for name, route in (("SI for everything", False),
                        ("route T through FT", True)):
        feats, labels = bn_rows(route)
        acc = accent_probe(utts, pcfg, features=feats, labels=labels)
        print(f"  {name:<20s} probe accuracy {acc:.3f}")


if __name__ == "__main__":
    main()
