"""Single-seed calibration panel, crossed probes, SI conversion extraction.

usage: scratch_diag.py SEED FT_EPOCHS [OFFSET N_TGT D_BN SIGMA SYSTEMS]
"""
import sys
import time

import numpy as np

from accentvc.conversion import run_conversions
from accentvc.evaluation import (ProbeConfig, accent_probe, accentedness_eval,
                                 content_preservation, content_probe,
                                 encoder_invariance, mean_encoding,
                                 parallel_groups, probe_corpus, probe_predict,
                                 speaker_probe, speaker_similarity_eval,
                                 train_probe)
from accentvc.recognizer import (RecognizerConfig, extract_bn,
                                 finetune_accent_recognizer,
                                 train_si_recognizer)
from accentvc.rng import substream
from accentvc.training import TrainConfig, train_system
from accentvc.model import VCModelSpec
from accentvc.world import WorldSpec, build_world, sample_utterance

seed = int(sys.argv[1])
ft_epochs = int(sys.argv[2])
offset = float(sys.argv[3]) if len(sys.argv) > 3 else 1.2
n_tgt = int(sys.argv[4]) if len(sys.argv) > 4 else 300
d_bn = int(sys.argv[5]) if len(sys.argv) > 5 else 16
sigma = float(sys.argv[6]) if len(sys.argv) > 6 else 0.05
systems = sys.argv[7].split(",") if len(sys.argv) > 7 else ["BL", "P1", "P2"]

wspec = WorldSpec(sigma=sigma, accent_offset_scale=offset)
world = build_world(7, wspec)
targets = [(0, "M"), (1, "M"), (2, "T")]
sources = [(s, "M") for s in range(3, 12)]

def utts(pairs, n, tag):
    out = []
    for s, a in pairs:
        for j in range(n):
            out.append(sample_utterance(world, s, a, substream(seed, tag, s, j)))
    return out

si_train = utts(sources, 30, "si")
vc_train = utts(targets, n_tgt, "vc")
vc_held = utts(targets, 10, "vch")
conv_src = utts([(s, "M") for s in (3, 4)], 15, "cs")

rcfg = RecognizerConfig(d_bn=d_bn, finetune_epochs=ft_epochs)
t0 = time.time()
si = train_si_recognizer(si_train, rcfg, seed=seed)
t_utts = [u for u in vc_train if u.accent == "T"]
ft = finetune_accent_recognizer(si, t_utts, seed=seed)
regs = {"SI": si, "T": ft}

# crossed judges: targets x accents for speaker/accent, + sources for content
judge = probe_corpus(world, [0, 1, 2], 20, seed + 900)
judge_all = judge + probe_corpus(world, list(range(3, 12)), 4, seed + 901)
acc_epochs = int(sys.argv[8]) if len(sys.argv) > 8 else 300
spk_p = speaker_probe(judge)
acc_p = accent_probe(judge_all, ProbeConfig(max_epochs=acc_epochs))
cnt_p = content_probe(judge_all)
print(f"seed {seed} ft {ft_epochs} offset {offset} n {n_tgt} d_bn {d_bn} "
      f"sigma {sigma} | probes trained [{time.time()-t0:.0f}s]")

# C8: accent probe on BN features, SI vs accent-routed, same utterances
bn_eval = probe_corpus(world, [0, 1, 2], 10, seed + 902)
def bn_table(route):
    xs, ys = [], []
    for u in bn_eval:
        rec = si if route == "SI" or u.accent == "M" else ft
        xs.append(extract_bn(rec, u).features)
        ys.append(np.full(u.n_frames, 0 if u.accent == "M" else 1))
    return np.concatenate(xs), np.concatenate(ys)

def probe_acc(x, y, me=300):
    p = train_probe(x, y, ProbeConfig(seed=3, max_epochs=me))
    return float(np.mean(probe_predict(p, x) == y))

x_si, y_si = bn_table("SI")
x_rt, y_rt = bn_table("routed")
for me in (20, 50, 300):
    print(f"  BN accent probe e{me}: SI {probe_acc(x_si, y_si, me):.3f} "
          f"routed {probe_acc(x_rt, y_rt, me):.3f}")

o_T = world.accent_offset["T"]
o_obs = world.w_obs[:, :world.spec.d_content] @ o_T
o_dir = o_obs / np.dot(o_obs, o_obs)

groups = parallel_groups(world, [0, 1, 2], "M", 24, seed + 903)
fit_groups, ev_groups = groups[:12], groups[12:]
fit_flat = [r for g in fit_groups for r in g]
ev_flat = [r for g in ev_groups for r in g]

results = {}
for system in systems:
    t1 = time.time()
    cfg = TrainConfig(system=system, seed=seed)
    model, log = train_system(vc_train, vc_held, regs, cfg,
                              spec=VCModelSpec(d_bn=d_bn))
    t_train = time.time() - t1
    recs = run_conversions(model, conv_src, regs)
    sim = speaker_similarity_eval(spk_p, judge, recs)
    acc = accentedness_eval(acc_p, judge_all, recs)
    cnt = content_preservation(cnt_p, judge_all, recs)
    hfit = np.array([mean_encoding(model, regs, r) for r in fit_flat])
    hev = np.array([mean_encoding(model, regs, r) for r in ev_flat])
    yfit = np.array([r.speaker for r in fit_flat])
    yev = np.array([r.speaker for r in ev_flat])
    accs = {}
    for me in (30, 80, 300):
        hp = train_probe(hfit, yfit, ProbeConfig(seed=4, max_epochs=me))
        accs[me] = (float(np.mean(probe_predict(hp, hfit) == yfit)),
                    float(np.mean(probe_predict(hp, hev) == yev)))
    inv = encoder_invariance(model, regs, groups)
    held = model.meta["heldout_recons"]
    last_g = [r for r in log if r["phase"] == "G"][-1]
    print(f"{system}: recons {last_g['recons']:.4f} held {held:.4f} "
          f"inv {inv['ratio']:.4f} [train {t_train:.0f}s +eval "
          f"{time.time()-t1-t_train:.0f}s]")
    print("   h-spk fit/eval: " + "  ".join(
        f"e{me} {a:.3f}/{b:.3f}" for me, (a, b) in accs.items()))
    print(f"   real: spk {sim['real']:.3f} acc {acc['real']:.3f} "
          f"cnt {cnt['real']:.3f}")
    for cell in sorted(acc["cells"]):
        cell_recs = [r for r in recs if (r.target_speaker, r.target_accent) == cell]
        X = np.concatenate([r.frames for r in cell_recs])
        render = float(np.mean(X @ o_dir))
        print(f"   {cell}: acc {acc['cells'][cell]:.2f} "
              f"spk {sim['cells'][cell]:.2f} cnt {cnt['cells'][cell]:.2f} "
              f"render {render:+.2f}")
    print(f"   M-acc {acc['by_accent']['M']:.3f} T-acc {acc['by_accent']['T']:.3f} "
          f"spk-overall {sim['overall']:.3f} cnt-overall {cnt['overall']:.3f}")
    results[system] = {"acc": acc, "held": held}

if "P1" in results and "P2" in results:
    print(f"P2/P1 heldout ratio {results['P2']['held']/results['P1']['held']:.2f}")
print(f"total {time.time()-t0:.0f}s")
