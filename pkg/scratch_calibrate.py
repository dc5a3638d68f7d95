"""Full-scale single-seed pipeline with timing and every headline metric."""
import sys
import time

import numpy as np

from accentvc.corpus import (accent_t_utterances, conversion_sources,
                             default_plan, generate_corpus,
                             sample_eval_corpus, si_training_utterances,
                             vc_heldout_utterances, vc_training_utterances)
from accentvc.conversion import run_conversions
from accentvc.evaluation import (accent_probe, accentedness_eval,
                                 content_preservation, content_probe,
                                 encoder_invariance, parallel_groups,
                                 speaker_probe, speaker_similarity_eval)
from accentvc.recognizer import (RecognizerConfig, finetune_accent_recognizer,
                                 frame_accuracy, train_si_recognizer)
from accentvc.training import TrainConfig, train_system
from accentvc.world import ACCENTS, WorldSpec, build_world

seed = int(sys.argv[1]) if len(sys.argv) > 1 else 1
t0 = time.time()


def tick(label):
    print(f"[{time.time()-t0:6.1f}s] {label}", flush=True)


world = build_world(seed)
plan = default_plan()
corpus = generate_corpus(world, plan, seed)
tick(f"corpus: train {len(corpus.train)} heldout {len(corpus.heldout)}")

rc = RecognizerConfig()
si = train_si_recognizer(si_training_utterances(corpus), rc, seed)
ft = finetune_accent_recognizer(si, accent_t_utterances(corpus, "train"), seed)
regs = {"SI": si, "T": ft}
t_utts = accent_t_utterances(corpus, "heldout")
tick(f"recognizers: SI heldout {si.heldout_accuracy:.3f} "
     f"SI-on-T {frame_accuracy(si, t_utts):.3f} "
     f"FT-on-T {frame_accuracy(ft, t_utts):.3f}")

vc_train = vc_training_utterances(corpus)
vc_held = vc_heldout_utterances(corpus)
models = {}
for system in ("BL", "P1", "P2"):
    cfg = TrainConfig(system=system, seed=seed)
    m, log = train_system(vc_train, vc_held, regs, cfg)
    models[system] = m
    g_rows = [r for r in log if r["phase"] == "G"]
    tick(f"{system}: recons first {g_rows[0]['recons']:.4f} "
         f"last {g_rows[-1]['recons']:.4f} heldout {m.meta['heldout_recons']:.4f}")

sources = conversion_sources(corpus, 30)
records = {s: run_conversions(models[s], sources, regs) for s in models}
tick(f"conversions: {len(records['BL'])} per system")

all_cells = [(s, a) for s in range(world.spec.n_speakers) for a in ACCENTS]
probe_utts = sample_eval_corpus(world, all_cells, 8, seed * 1000 + 1)
eval_utts = sample_eval_corpus(world, all_cells, 4, seed * 1000 + 2)
sp = speaker_probe(probe_utts)
ap = accent_probe(probe_utts)
cp = content_probe(probe_utts)
tick(f"probes: epochs sp {sp.epochs} ap {ap.epochs} cp {cp.epochs}")

for system in ("BL", "P1", "P2"):
    r = records[system]
    ss = speaker_similarity_eval(sp, eval_utts, r)
    ac = accentedness_eval(ap, eval_utts, r)
    ct = content_preservation(cp, eval_utts, r)
    worst_cell = min(ss["cells"].items(), key=lambda kv: kv[1])
    tick(f"{system}: spk real {ss['real']:.3f} worst cell {worst_cell} "
         f"| acc real {ac['real']:.3f} M {ac['by_accent']['M']:.3f} "
         f"T {ac['by_accent']['T']:.3f} | content real {ct['real']:.3f} "
         f"conv {ct['overall']:.3f}")
    for cell, v in sorted(ac["cells"].items()):
        if cell[1] == "T":
            print(f"      accent cell {cell}: {v:.3f}")

groups = parallel_groups(world, list(range(world.spec.n_speakers)), "M", 8,
                         seed * 1000 + 3)
for system in ("BL", "P1", "P2"):
    inv = encoder_invariance(models[system], regs, groups)
    tick(f"{system}: invariance ratio {inv['ratio']:.4f}")

tick("done")
