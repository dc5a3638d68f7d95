import time

import numpy as np

from accentvc import autodiff as ad
from accentvc.corpus import (default_plan, generate_corpus, si_training_utterances,
                             si_heldout_utterances, accent_t_utterances,
                             vc_training_utterances, vc_heldout_utterances)
from accentvc.model import (VCModelSpec, classify_speaker, convert, decode, encode,
                            init_vc_model)
from accentvc.recognizer import (RecognizerConfig, finetune_accent_recognizer,
                                 train_si_recognizer)
from accentvc.training import TrainConfig, evaluate_recons, train_system
from accentvc.world import WorldSpec, build_world, sample_utterance
from accentvc.rng import substream

t0 = time.time()
world = build_world(1)
plan = default_plan(n_target_utts=60, n_source_utts=10)
corpus = generate_corpus(world, plan, seed=1)
print("corpus", len(corpus.train), len(corpus.heldout), f"{time.time()-t0:.1f}s")

rc = RecognizerConfig(epochs=12, finetune_epochs=8)
si = train_si_recognizer(si_training_utterances(corpus), rc, seed=1)
ft = finetune_accent_recognizer(si, accent_t_utterances(corpus, "train"), seed=1)
regs = {"SI": si, "T": ft}
print(f"recognizers {time.time()-t0:.1f}s")

# basic model mechanics
model = init_vc_model(VCModelSpec(), [0, 1, 2], seed=7)
utt = corpus.train[0]
from accentvc.recognizer import extract_bn
bn = extract_bn(si, utt)
enc = encode(model, bn, "M")
print("h shape", enc.h.shape)
enc_off_M = encode(model, bn, "M", accent_gate=False)
enc_off_T = encode(model, bn, "T", accent_gate=False)
assert np.array_equal(enc_off_M.h, enc_off_T.h), "gate-off not accent invariant"
p = classify_speaker(model, enc)
assert np.allclose(p.sum(axis=1), 1.0)
pre, post = decode(model, enc, 0, utt.frames)
print("pre/post", pre.shape, post.shape)

# zero postnet => post == pre
model.store["post.conv2.W"].value[:] = 0.0
model.store["post.conv2.b"].value[:] = 0.0
pre2, post2 = decode(model, enc, 0, utt.frames)
assert np.array_equal(pre2, post2), "zero postnet residual"
model2 = init_vc_model(VCModelSpec(), [0, 1, 2], seed=7)
model.store = model2.store

# convert refuses untrained
try:
    convert(model, bn, 0, "M")
    raise SystemExit("untrained convert should fail")
except Exception as e:
    print("untrained convert ->", type(e).__name__)

# train quickly: 12 epochs at small scale for BL/P1/P2
tr = vc_training_utterances(corpus)
held = vc_heldout_utterances(corpus)
print("vc train/heldout:", len(tr), len(held))
for system in ("BL", "P1", "P2"):
    cfg = TrainConfig(system=system, epochs=12, gate_epoch=2, seed=3,
                      decay_interval=5)
    t1 = time.time()
    m, log = train_system(tr, held, regs, cfg)
    dt = time.time() - t1
    r0 = log[0]["recons"]
    rl = [row["recons"] for row in log if row["phase"] == "G"][-1]
    ce = [row["ce"] for row in log if row["phase"] == "D"]
    print(f"{system}: {dt:.1f}s 1st recons {r0:.4f} last {rl:.4f} "
          f"heldout {m.meta['heldout_recons']:.4f} ce {ce[-1] if ce else None}")
    # convert determinism + decode consistency
    out1 = convert(m, bn, 2, "T")
    out2 = convert(m, bn, 2, "T")
    assert np.array_equal(out1, out2)
    encm = encode(m, bn, "T")
    pre_d, post_d = decode(m, encm, 2, out1)
    # teacher-forced on its own free-run output reproduces the free run
    err = np.abs(post_d - out1).max()
    print(f"  convert vs decode-on-own-output max err {err:.2e}")

print(f"total {time.time()-t0:.1f}s")
