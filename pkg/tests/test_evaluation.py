"""Probe training, scoring plumbing, and encoder-geometry measures."""

import numpy as np
import pytest

from accentvc.conversion import ConversionRecord
from accentvc.errors import InputError
from accentvc.evaluation import (Probe, ProbeConfig, _span_accuracy,
                                 accent_probe, accentedness_eval,
                                 content_preservation, content_probe,
                                 encoder_invariance, invariance_ratio,
                                 majority, majority_accuracy, mean_encoding,
                                 parallel_groups, pca_2d, probe_corpus,
                                 probe_posteriors, probe_predict,
                                 speaker_probe, speaker_similarity_eval,
                                 train_probe)
from accentvc.model import VCModelSpec, init_vc_model
from accentvc.recognizer import RecognizerConfig, train_si_recognizer
from accentvc.rng import substream
from accentvc.world import WorldSpec, build_world, sample_utterance


def _blobs(n, d, centers, seed=0):
    rng = np.random.default_rng(seed)
    x = np.concatenate([c + 0.3 * rng.standard_normal((n, d)) for c in centers])
    y = np.repeat(np.arange(len(centers)), n)
    return x, y


def test_probe_learns_separable_blobs():
    x, y = _blobs(60, 4, [np.zeros(4), np.full(4, 2.0)])
    p = train_probe(x, y)
    assert np.mean(probe_predict(p, x) == y) >= 0.98
    rows = probe_posteriors(p, x)
    assert np.allclose(rows.sum(axis=1), 1.0)


def test_probe_training_is_deterministic():
    x, y = _blobs(40, 3, [np.zeros(3), np.ravel([2, 0, 0])])
    a = train_probe(x, y, ProbeConfig(seed=6))
    b = train_probe(x, y, ProbeConfig(seed=6))
    c = train_probe(x, y, ProbeConfig(seed=7))
    assert np.array_equal(a.W, b.W) and np.array_equal(a.b, b.b)
    assert not np.array_equal(a.W, c.W)


def test_probe_rejects_degenerate_inputs():
    x = np.zeros((10, 3))
    with pytest.raises(InputError):
        train_probe(x, np.zeros(10))          # one class
    with pytest.raises(InputError):
        train_probe(x, np.zeros(9))           # label count mismatch
    with pytest.raises(InputError):
        train_probe(np.zeros((0, 3)), np.zeros(0))


def test_probe_on_shuffled_labels_sits_at_chance():
    x, y = _blobs(200, 6, [np.zeros(6), np.full(6, 1.5), -np.full(6, 1.5)])
    y = np.random.default_rng(3).permutation(y)
    p = train_probe(x, y)
    acc = np.mean(probe_predict(p, x) == y)
    assert abs(acc - 1 / 3) < 0.1


def test_probe_predict_speaks_class_ids():
    x, y = _blobs(30, 2, [np.zeros(2), np.full(2, 3.0)])
    p = train_probe(x, np.where(y == 0, 3, 7))
    assert set(probe_predict(p, x)) <= {3, 7}
    assert np.array_equal(p.classes, [3, 7])


def test_majority_breaks_ties_low():
    assert majority([2, 1, 1, 2]) == 1
    assert majority([5]) == 5
    assert majority([4, 4, 9]) == 4


def test_span_accuracy_votes_inside_token_spans():
    # hand-built two-class probe: argmax of the feature row itself
    p = Probe(W=10 * np.eye(2), b=np.zeros(2), classes=np.array([0, 1]),
              converged=True, epochs=1, grad_norm=0.0)
    e0, e1 = np.eye(2)
    frames = np.array([e0, e0, e1, e1, e0])
    # span one votes 0,0,1 -> 0 (hit); span two votes 1,0 -> tie, breaks to 0 (miss)
    acc = _span_accuracy(p, frames, durations=[3, 2], tokens=[0, 1])
    assert acc == 0.5


def test_invariance_ratio_extremes():
    tight = np.repeat(np.arange(3.0)[:, None], 4, axis=0) * np.ones((1, 5))
    groups = np.repeat(np.arange(3), 4)
    assert invariance_ratio(tight, groups) == 0.0
    cloud = np.random.default_rng(0).standard_normal((300, 8))
    g = np.tile(np.arange(30), 10)
    assert abs(invariance_ratio(cloud, g) - 1.0) < 0.15


def test_invariance_ratio_rejects_degenerate_groupings():
    x = np.random.default_rng(1).standard_normal((4, 3))
    with pytest.raises(InputError):
        invariance_ratio(x, [0, 0, 0, 0])
    with pytest.raises(InputError):
        invariance_ratio(x, [0, 1, 2, 3])


def test_pca_sign_convention_fixes_plots():
    x = np.random.default_rng(2).standard_normal((40, 6))
    pts1, comps1 = pca_2d(x)
    pts2, comps2 = pca_2d(x.copy())
    assert np.array_equal(pts1, pts2) and np.array_equal(comps1, comps2)
    assert pts1.shape == (40, 2) and comps1.shape == (2, 6)
    for row in comps1:
        nz = row[np.abs(row) > 1e-12]
        assert nz[0] > 0


WSPEC = WorldSpec()


@pytest.fixture(scope="module")
def world():
    return build_world(21, WSPEC)


def _real(world, pairs, n, tag, seed=13):
    out = []
    for s, a in pairs:
        for j in range(n):
            out.append(sample_utterance(world, s, a, substream(seed, tag, s, j)))
    return out


def test_probes_refuse_converted_material(world):
    u = _real(world, [(0, "M")], 1, "prov")[0]
    fake = ConversionRecord(system="BL", source_speaker=3, source_index=0,
                            target_speaker=0, target_accent="M",
                            tokens=u.tokens, tones=u.tones,
                            durations=u.durations,
                            frame_tokens=u.frame_tokens,
                            frame_tones=u.frame_tones, frames=u.frames)
    with pytest.raises(InputError, match="converted"):
        speaker_probe([u, fake])
    with pytest.raises(InputError, match="converted"):
        accent_probe([fake])
    with pytest.raises(InputError, match="converted"):
        content_probe([fake])


def test_probe_corpus_crosses_speakers_and_accents(world):
    utts = probe_corpus(world, [0, 2], 3, seed=5)
    cells = {}
    for u in utts:
        cells[(u.speaker, u.accent)] = cells.get((u.speaker, u.accent), 0) + 1
    assert cells == {(0, "M"): 3, (0, "T"): 3, (2, "M"): 3, (2, "T"): 3}
    again = probe_corpus(world, [0, 2], 3, seed=5)
    assert all(np.array_equal(a.frames, b.frames) for a, b in zip(utts, again))
    with pytest.raises(InputError):
        probe_corpus(world, [0], 0, seed=5)


def test_real_utterances_are_judgeable(world):
    """Probes fitted on a crossed corpus read the factors they claim to."""
    judge = probe_corpus(world, [0, 1, 2], 12, seed=33)
    sp = speaker_probe(judge)
    ap = accent_probe(judge)
    fresh = probe_corpus(world, [0, 1, 2], 4, seed=44)
    assert majority_accuracy(sp, fresh, lambda u: u.speaker) >= 0.9
    assert majority_accuracy(ap, fresh,
                             lambda u: 0 if u.accent == "M" else 1) >= 0.9


def test_eval_scores_keyed_by_target_cell(world):
    judge = probe_corpus(world, [0, 1], 12, seed=55)
    sp, ap, cp = speaker_probe(judge), accent_probe(judge), content_probe(judge)
    recs = []
    for s, a in [(0, "M"), (0, "T"), (1, "M")]:
        for u in _real(world, [(s, a)], 4, f"cell{s}{a}"):
            recs.append(ConversionRecord(
                system="BL", source_speaker=3, source_index=0,
                target_speaker=s, target_accent=a, tokens=u.tokens,
                tones=u.tones, durations=u.durations,
                frame_tokens=u.frame_tokens, frame_tones=u.frame_tones,
                frames=u.frames))
    sim = speaker_similarity_eval(sp, judge, recs)
    acc = accentedness_eval(ap, judge, recs)
    cnt = content_preservation(cp, judge, recs)
    want = {(0, "M"), (0, "T"), (1, "M")}
    assert set(sim["cells"]) == set(acc["cells"]) == set(cnt["cells"]) == want
    # records here are real renditions of their own target cell, so the
    # judges should score them like real data
    assert sim["overall"] >= 0.9 and cnt["overall"] >= 0.8
    assert acc["by_accent"]["M"] >= 0.75 and acc["by_accent"]["T"] >= 0.75
    assert sim["real"] >= 0.9


def test_encoder_invariance_plumbing(world):
    rcfg = RecognizerConfig(d_bn=5, epochs=2)
    si = train_si_recognizer(
        _real(world, [(s, "M") for s in range(3, 9)], 3, "si"), rcfg, seed=2)
    model = init_vc_model(VCModelSpec(d_bn=5, enc_hidden=3, conv_channels=4),
                          [0, 1, 2], seed=1)
    groups = parallel_groups(world, [0, 1, 2], "M", 4, seed=9)
    for g in groups:
        assert np.array_equal(g[0].tokens, g[1].tokens)
        assert not np.array_equal(g[0].frames, g[1].frames)
    out = encoder_invariance(model, {"SI": si}, groups)
    assert 0.0 < out["ratio"]
    assert out["points"].shape == (12, 2)
    v = mean_encoding(model, {"SI": si}, groups[0][0])
    assert v.shape == (model.spec.d_h,)
    with pytest.raises(InputError):
        encoder_invariance(model, {"SI": si}, groups[:1])
