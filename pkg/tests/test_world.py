"""World construction, tone realization, and frame rendering."""

import numpy as np
import pytest

from accentvc.errors import ConfigError, DomainError
from accentvc.rng import substream
from accentvc.world import (ACCENTS, World, WorldSpec, build_world, factor_vector,
                            load_world, render_frames, sample_utterance, save_world,
                            tone_realize)


@pytest.fixture(scope="module")
def world():
    return build_world(seed=7)


def test_build_world_same_seed_is_byte_identical(tmp_path, world):
    again = build_world(seed=7)
    a, b = tmp_path / "a.avc", tmp_path / "b.avc"
    save_world(a, world)
    save_world(b, again)
    assert a.read_bytes() == b.read_bytes()
    assert world.content_hash() == again.content_hash()


def test_build_world_different_seeds_differ(world):
    other = build_world(seed=8)
    assert world.content_hash() != other.content_hash()


def test_world_roundtrips_through_container(tmp_path, world):
    path = tmp_path / "w.avc"
    save_world(path, world)
    back = load_world(path)
    assert back.spec == world.spec
    assert np.array_equal(back.codebook, world.codebook)
    assert np.array_equal(back.w_obs, world.w_obs)
    assert np.array_equal(back.accent_offset["T"], world.accent_offset["T"])
    assert back.content_hash() == world.content_hash()


def test_codebook_min_pairwise_distance_exceeds_half(world):
    cb = world.codebook
    n = cb.shape[0]
    dists = [np.linalg.norm(cb[i] - cb[j]) for i in range(n) for j in range(i + 1, n)]
    assert min(dists) > 0.5
    assert np.allclose(np.linalg.norm(cb, axis=1), 1.0, atol=1e-12)


def test_accent_m_is_identity(world):
    assert np.array_equal(world.accent_offset["M"], np.zeros(world.spec.d_content))
    assert np.linalg.norm(world.accent_offset["T"]) > 0


def test_observation_projection_has_orthonormal_columns(world):
    gram = world.w_obs.T @ world.w_obs
    assert np.allclose(gram, np.eye(world.spec.d_factors), atol=1e-12)


def test_every_tone_class_is_used(world):
    assert set(world.tone_of.tolist()) == {1, 2, 3, 4}


def test_build_world_rejects_bad_dimensions():
    with pytest.raises(ConfigError):
        build_world(0, WorldSpec(n_tokens=4))
    with pytest.raises(ConfigError):
        build_world(0, WorldSpec(d_obs=8))
    with pytest.raises(ConfigError):
        build_world(0, WorldSpec(tone_remap_prob=1.5))


def test_tone_realize_accent_m_is_canonical(world):
    rng = substream(0, "tone-m")
    for token in range(world.spec.n_tokens):
        assert tone_realize(world, token, "M", rng) == world.tone_of[token]


def test_tone_realize_accent_t_keeps_non_first_tones(world):
    rng = substream(0, "tone-t")
    token2 = int(np.where(world.tone_of == 2)[0][0])
    for _ in range(200):
        assert tone_realize(world, token2, "T", rng) == 2


def test_tone_realize_remap_frequency_matches_probability(world):
    # Monte-Carlo oracle: 10k draws of a tone-1 token under accent T
    token1 = int(np.where(world.tone_of == 1)[0][0])
    rng = substream(1, "tone-mc")
    draws = [tone_realize(world, token1, "T", rng) for _ in range(10_000)]
    freq = np.mean([t == 3 for t in draws])
    assert abs(freq - world.spec.tone_remap_prob) < 0.02
    assert set(draws) <= {1, 3}


def test_tone_realize_rejects_unknown_token(world):
    with pytest.raises(DomainError):
        tone_realize(world, world.spec.n_tokens, "M", substream(0, "x"))


def test_zero_noise_frames_are_deterministic_and_repeated():
    w = build_world(seed=3, spec=WorldSpec(sigma=0.0))
    utt = sample_utterance(w, speaker=1, accent="M", rng=substream(2, "utt"))
    utt2 = sample_utterance(w, speaker=1, accent="M", rng=substream(2, "utt"))
    assert np.array_equal(utt.frames, utt2.frames)
    row = 0
    for d in utt.durations:
        block = utt.frames[row:row + d]
        assert np.array_equal(block, np.tile(block[0], (d, 1)))
        row += d


def test_total_frames_equal_sum_of_durations(world):
    utt = sample_utterance(world, speaker=0, accent="M", rng=substream(3, "utt"))
    assert utt.n_frames == int(utt.durations.sum())
    assert utt.frame_tokens.shape == (utt.n_frames,)
    assert 5 <= len(utt.tokens) <= 12
    assert np.all((utt.durations >= 2) & (utt.durations <= 4))


def test_pseudo_inverse_recovers_factors_at_zero_noise():
    w = build_world(seed=4, spec=WorldSpec(sigma=0.0))
    utt = sample_utterance(w, speaker=5, accent="T", rng=substream(4, "utt"))
    pinv = np.linalg.pinv(w.w_obs)
    row = 0
    for k, tone, d in zip(utt.tokens, utt.tones, utt.durations):
        recovered = pinv @ utt.frames[row]
        want = factor_vector(w, int(k), int(tone), 5, "T")
        assert np.allclose(recovered, want, atol=1e-9)
        row += d


def test_sample_utterance_rejects_unknown_ids(world):
    with pytest.raises(DomainError):
        sample_utterance(world, speaker=99, accent="M", rng=substream(0, "x"))
    with pytest.raises(DomainError):
        sample_utterance(world, speaker=0, accent="Q", rng=substream(0, "x"))


def test_factor_map_is_injective_at_zero_noise():
    # enumerate every (token, tone, speaker, accent) combination and check
    # the noiseless frames are pairwise distinct
    w = build_world(seed=5, spec=WorldSpec(sigma=0.0))
    rows = []
    for k in range(w.spec.n_tokens):
        for tone in (1, 2, 3, 4):
            for s in range(w.spec.n_speakers):
                for a in ACCENTS:
                    rows.append(w.w_obs @ factor_vector(w, k, tone, s, a))
    frames = np.stack(rows)
    sq = (frames * frames).sum(axis=1)
    d2 = sq[:, None] + sq[None, :] - 2.0 * frames @ frames.T
    np.fill_diagonal(d2, np.inf)
    assert frames.shape[0] == w.spec.n_tokens * 4 * w.spec.n_speakers * 2
    assert d2.min() > 1e-6


def test_parallel_streams_align_across_accents():
    # same (speaker, j) substream under M and T renders the same token
    # sequence; only offset and tone remap differ
    w = build_world(seed=6)
    um = sample_utterance(w, 4, "M", substream(9, "pair", 4, 0))
    ut = sample_utterance(w, 4, "T", substream(9, "pair", 4, 0))
    assert np.array_equal(um.tokens, ut.tokens)
    assert np.array_equal(um.durations, ut.durations)
    remapped = (w.tone_of[um.tokens] == 1)
    assert np.all(ut.tones[~remapped] == um.tones[~remapped])
