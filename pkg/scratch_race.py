"""Race diagnostics: can the accent embedding ever claim the offset?

X1: gate_epoch=0 (no speaker-embedding head start)
X2: speaker embedding frozen at zero (accent pathway upper bound)
X0: control (gate 10, spk emb free)
"""
import sys
import time

import numpy as np

from accentvc import training as tr
from accentvc.model import VCModelSpec, convert, init_vc_model
from accentvc.optim import adam_step as real_adam_step
from accentvc.recognizer import (RecognizerConfig, extract_bn,
                                 finetune_accent_recognizer,
                                 train_si_recognizer)
from accentvc.rng import substream
from accentvc.world import (WorldSpec, build_world, sample_utterance)

mode = sys.argv[1]            # X0 | X1 | X2
offset = float(sys.argv[2])
n_tgt = int(sys.argv[3])
d_bn = int(sys.argv[4])

wspec = WorldSpec(sigma=0.05, accent_offset_scale=offset)
world = build_world(7, wspec)
targets = [(0, "M"), (1, "M"), (2, "T")]
sources = [(s, "M") for s in range(3, 12)]

def utts(pairs, n, tag):
    out = []
    for s, a in pairs:
        for j in range(n):
            rng = substream(7, tag, s, j)
            out.append(sample_utterance(world, s, a, rng))
    return out

si_train = utts(sources, 30, "si")
vc_train = utts(targets, n_tgt, "vc")
vc_held = utts(targets, 8, "vch")
conv_src = utts([(s, "M") for s in (3, 4)], 5, "cs")

rcfg = RecognizerConfig(d_bn=d_bn)
si = train_si_recognizer(si_train, rcfg, seed=1)
ft = finetune_accent_recognizer(si, [u for u in vc_train if u.accent == "T"],
                                seed=1)
regs = {"SI": si, "T": ft}

gate = 0 if mode == "X1" else 10
cfg = tr.TrainConfig(system="P1", epochs=90, gate_epoch=gate, seed=1)
mspec = VCModelSpec(d_bn=d_bn)

if mode == "X2":
    def frozen_spk_adam(store, lr, update=None, **kw):
        def u(name):
            if name == "emb.speaker":
                return False
            return update(name) if update is not None else True
        return real_adam_step(store, lr, update=u, **kw)
    tr.adam_step = frozen_spk_adam
    model = init_vc_model(mspec, [0, 1, 2], seed=1, system="P1")
    model.store["emb.speaker"].value[:] = 0.0
    t0 = time.time()
    model, log = tr.train_system(vc_train, vc_held, regs, cfg, spec=mspec,
                                 model=model)
else:
    t0 = time.time()
    model, log = tr.train_system(vc_train, vc_held, regs, cfg, spec=mspec)

o_T = world.accent_offset["T"]
o_dir = world.w_obs[:, :world.spec.d_content] @ o_T
o_dir_n = o_dir / np.dot(o_dir, o_dir)

def cell_offset(tgt, accent):
    fr = []
    for u in conv_src:
        bn = extract_bn(si, u)
        fr.append(convert(model, bn, tgt, accent))
    X = np.concatenate(fr)
    return float(np.mean(X @ o_dir_n))

print(f"mode {mode} offset {offset} n {n_tgt} d_bn {d_bn} "
      f"recons {log[-1]['recons']:.4f} [{time.time()-t0:.0f}s]")
for tgt in (0, 1, 2):
    m = cell_offset(tgt, "M")
    t = cell_offset(tgt, "T")
    print(f"  tgt {tgt}: M {m:+.3f} T {t:+.3f} accent-delta {t-m:+.3f}")
