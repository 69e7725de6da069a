import itertools

import numpy as np
import pytest
import scipy.signal
from pystoi import stoi

from sqaguide import datagen
from sqaguide.metrics import (MetricVector, RankGroup, average_ranks, cer, default_registry, edit_distance, estoi,
                              lsd, mcd, mcd_from_cepstra, pearson, phoneme_similarity, rank_groups, rank_score, sdr,
                              si_snr, spearman, speaker_similarity_toy)
from sqaguide.metrics.oracles import MCD_CONST, DB_CAP
from sqaguide.signal import melbank


@pytest.fixture(scope="module")
def speech():
    return datagen.synth_clean(5, 1.5).samples


def noise_at(clean, snr_db, seed):
    n = np.random.default_rng(seed).standard_normal(len(clean))
    return n * np.sqrt(np.sum(clean ** 2) / np.sum(n ** 2) / 10 ** (snr_db / 10))


# ---------------------------------------------------------------- SDR / SI-SNR

def test_sdr_identity_and_delayed_gain_hit_cap(rng):
    ref = rng.standard_normal(400)
    assert sdr(ref, ref, 8) == DB_CAP
    est = np.concatenate([np.zeros(3), 0.5 * ref[:-3]])
    assert sdr(ref, est, 8) == DB_CAP


def test_sdr_orthogonal_noise_twenty_db(rng):
    ref = rng.standard_normal(1000)
    n = rng.standard_normal(1000)
    n -= (n @ ref) / (ref @ ref) * ref
    n *= np.sqrt((ref @ ref) / (n @ n) / 100.0)
    assert sdr(ref, ref + n, 1) == pytest.approx(20.0, abs=1e-9)


def test_sdr_errors(rng):
    with pytest.raises(ValueError):
        sdr(np.zeros(600), rng.standard_normal(600))
    with pytest.raises(ValueError):
        sdr(rng.standard_normal(100), rng.standard_normal(100))
    with pytest.raises(ValueError):
        sdr(rng.standard_normal(600), rng.standard_normal(601))


def test_si_snr_cases(rng):
    ref = rng.standard_normal(500)
    assert si_snr(ref, 2 * ref) == DB_CAP
    r0 = ref - ref.mean()
    perp = rng.standard_normal(500)
    perp -= perp.mean()
    perp -= (perp @ r0) / (r0 @ r0) * r0
    assert si_snr(ref, perp) == -DB_CAP
    perp *= np.sqrt((r0 @ r0) / (perp @ perp))
    assert si_snr(ref, ref + perp) == pytest.approx(0.0, abs=1e-9)
    with pytest.raises(ValueError):
        si_snr(np.zeros(10), ref[:10])


# ------------------------------------------------------------------------ LSD

def test_lsd_cases(speech, rng):
    assert lsd(speech, speech) == 0.0
    # broadband input keeps every bin far above the log floor
    x = rng.standard_normal(8000)
    assert lsd(x, 10 * x) == pytest.approx(20.0, abs=1e-6)
    assert lsd(np.zeros(4000), np.zeros(4000)) == 0.0


# ---------------------------------------------------------------------- ESTOI

def test_estoi_identity(speech):
    assert estoi(speech, speech) == pytest.approx(1.0, abs=1e-6)


def test_estoi_of_independent_noise_near_zero(speech):
    for seed in range(10):
        n = np.random.default_rng(seed).standard_normal(len(speech)) * 0.1
        assert abs(estoi(speech, n)) < 0.1


def test_estoi_monotone_in_snr(speech):
    assert estoi(speech, speech + noise_at(speech, 20, 0)) > estoi(speech, speech + noise_at(speech, 0, 0))


def test_estoi_matches_reference_implementation():
    for i in range(50):
        rng = np.random.default_rng(i)
        c = datagen.synth_clean(100 + i, 1.5).samples
        x = c + noise_at(c, rng.uniform(-5, 15), i)
        assert estoi(c, x) == pytest.approx(stoi(c, x, 16000, extended=True), abs=0.01)


def test_estoi_too_short():
    with pytest.raises(ValueError):
        estoi(np.ones(2000), np.ones(2000))


# ------------------------------------------------------------------------ MCD

def test_mcd_identity_and_gain(speech):
    assert mcd(speech, speech) == 0.0
    assert mcd(speech, 3.0 * speech) == pytest.approx(0.0, abs=1e-9)


def test_mcd_unit_vector_offset(rng):
    c = rng.standard_normal((20, 13))
    d = c.copy()
    d[np.arange(20), rng.integers(0, 13, 20)] += 1.0
    assert mcd_from_cepstra(c, d) == pytest.approx(10 / np.log(10) * np.sqrt(2), abs=1e-12)
    assert MCD_CONST == pytest.approx(6.1419, abs=1e-4)


# ----------------------------------------------------------------------- text

def test_edit_distance_examples():
    assert edit_distance("abc", "abc") == 0
    assert edit_distance("kitten", "sitting") == 3
    assert edit_distance("abc", "") == 3
    assert edit_distance(["ah", "iy"], ["iy"]) == 1


def test_cer_and_phoneme_similarity():
    assert cer("hello", "hello") == 0.0
    assert phoneme_similarity("hello", "hello") == 1.0
    assert cer("abcd", "abed") == 0.25
    assert phoneme_similarity("ab", "cd") == 0.0
    assert cer("ab", "abxyz") == 1.5
    with pytest.raises(ValueError):
        cer("", "a")
    with pytest.raises(ValueError):
        phoneme_similarity([], ["a"])


# -------------------------------------------------------------------- speaker

def brute_embedding(x, n_mels=32):
    # reflect-padded hann frames, plain FFT, mel power, log10, mean/std
    pad = np.pad(x, 256, mode="reflect")
    win = scipy.signal.get_window("hann", 512)
    frames = np.array([pad[i:i + 512] * win for i in range(0, len(pad) - 512 + 1, 256)])
    power = np.abs(np.fft.rfft(frames, axis=1)) ** 2
    lm = np.log10(np.maximum(power @ melbank(16000, 512, n_mels).weights.T, 1e-10))
    emb = np.concatenate([lm.mean(0), lm.std(0)])
    return emb / np.linalg.norm(emb)


def test_speaker_similarity_cases(speech):
    assert speaker_similarity_toy(speech, speech) == pytest.approx(1.0)
    assert speaker_similarity_toy(speech, -speech) == pytest.approx(1.0)
    r = np.random.default_rng(11).standard_normal(16000)
    e = np.random.default_rng(12).standard_normal(16000)
    got = speaker_similarity_toy(r, e)
    assert got == pytest.approx(float(brute_embedding(r) @ brute_embedding(e)), abs=1e-9)
    assert got == pytest.approx(0.9998551023234463, abs=1e-9)
    with pytest.raises(ValueError):
        speaker_similarity_toy(np.zeros(16000), r)


# -------------------------------------------------------------------- ranking

def only(weights):
    reg = default_registry()
    return reg.with_weights({n: weights.get(n, 0.0) for n in reg.names})


def test_rank_single_utterance_is_one():
    reg = default_registry()
    g = RankGroup("s", {"u": MetricVector(reg, {"SDR": 3.0, "LSD": 1.0})})
    assert rank_score(g, reg) == {"u": 1.0}


def test_rank_two_rows_one_metric():
    reg = only({"ESTOI": 1.0})
    g = RankGroup("s", {"a": MetricVector(reg, {"ESTOI": 0.9}), "b": MetricVector(reg, {"ESTOI": 0.7})})
    assert rank_score(g, reg) == {"a": 0.5, "b": 1.0}


def brute_rank(values, higher_better):
    # rank by counting strictly better rows, ties averaged over their positions
    out = []
    for v in values:
        better = sum((w > v) if higher_better else (w < v) for w in values)
        tied = sum(w == v for w in values)
        out.append(better + (tied + 1) / 2)
    return np.array(out)


def test_rank_three_rows_two_directions():
    reg = only({"SDR": 1.0, "LSD": 1.0})
    sdr_vals, lsd_vals = [3.0, 1.0, 2.0], [2.0, 1.0, 3.0]
    rows = {f"u{i}": MetricVector(reg, {"SDR": s, "LSD": ls}) for i, (s, ls) in enumerate(zip(sdr_vals, lsd_vals))}
    got = rank_score(RankGroup("s", rows), reg)
    want = (brute_rank(sdr_vals, True) + brute_rank(lsd_vals, False)) / 6
    assert np.allclose([got[u] for u in rows], want)
    assert np.allclose(want, [0.5, 4 / 6, 5 / 6])


def test_rank_ties_and_missing_metric():
    reg = only({"SDR": 1.0, "CER": 1.0})
    rows = {"a": MetricVector(reg, {"SDR": 1.0, "CER": 0.1}), "b": MetricVector(reg, {"SDR": 1.0})}
    # CER is missing for one row, so it is dropped for the whole group
    assert rank_score(RankGroup("s", rows), reg) == {"a": 0.75, "b": 0.75}
    with pytest.raises(ValueError):
        rank_score(RankGroup("s", {"a": MetricVector(reg, {"MCD": 1.0})}), reg)
    with pytest.raises(ValueError):
        RankGroup("s", {})


def test_rank_groups_splits_by_source():
    reg = only({"SDR": 1.0})
    vecs = {u: MetricVector(reg, {"SDR": v}) for u, v in [("a", 1.0), ("b", 2.0), ("c", 5.0)]}
    got = rank_groups(vecs, {"a": "x", "b": "x", "c": "y"}, reg)
    assert got == {"a": 1.0, "b": 0.5, "c": 1.0}


def test_rank_score_brute_force_many_groups(rng):
    reg = only({"SDR": 2.0, "MCD": 1.0})
    for _ in range(50):
        m = int(rng.integers(1, 6))
        s = rng.integers(0, 3, m).astype(float)
        c = rng.integers(0, 3, m).astype(float)
        rows = {f"u{i}": MetricVector(reg, {"SDR": s[i], "MCD": c[i]}) for i in range(m)}
        got = rank_score(RankGroup("g", rows), reg)
        want = (2 * brute_rank(s, True) + brute_rank(c, False)) / (3 * m)
        assert np.allclose([got[f"u{i}"] for i in range(m)], want)


# ---------------------------------------------------------------- correlation

def test_correlation_cases(rng):
    x = rng.standard_normal(20)
    assert pearson(x, 2 * x) == pytest.approx(1.0)
    assert spearman(x, -x) == pytest.approx(-1.0)
    assert spearman([1, 2, 3, 4], [1, 3, 2, 4]) == pytest.approx(0.8)
    with pytest.raises(ValueError):
        pearson([1, 1, 1], [1, 2, 3])
    with pytest.raises(ValueError):
        pearson([1.0], [2.0])


def test_spearman_closed_form(rng):
    for _ in range(1000):
        n = int(rng.integers(3, 12))
        x, y = rng.permutation(n) + 1, rng.permutation(n) + 1
        d2 = float(np.sum((x - y) ** 2))
        assert spearman(x, y) == pytest.approx(1 - 6 * d2 / (n * (n * n - 1)), abs=1e-12)


def test_average_ranks_against_permutations():
    vals = [2.0, 1.0, 2.0, 0.0]
    assert list(average_ranks(vals)) == [3.5, 2.0, 3.5, 1.0]
    # every permutation of the input permutes the ranks the same way
    for perm in itertools.permutations(range(4)):
        assert list(average_ranks([vals[p] for p in perm])) == [[3.5, 2.0, 3.5, 1.0][p] for p in perm]
