import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sqaguide.metrics import MetricVector, RankGroup, default_registry, edit_distance, rank_score, sdr, spearman

seqs = st.lists(st.integers(0, 4), max_size=10)
# quarter-integer grid: shifts and cubes below stay exact, so no ties appear or vanish
grid = st.integers(-400, 400).map(lambda k: k / 4)


@given(seqs, seqs)
def test_edit_distance_symmetric_and_bounded(a, b):
    d = edit_distance(a, b)
    assert d == edit_distance(b, a)
    assert abs(len(a) - len(b)) <= d <= max(len(a), len(b))
    assert (d == 0) == (a == b)


@given(seqs, seqs, seqs)
def test_edit_distance_triangle(a, b, c):
    assert edit_distance(a, c) <= edit_distance(a, b) + edit_distance(b, c)


@given(st.lists(st.tuples(grid, grid), min_size=3, max_size=30, unique_by=lambda t: t[0]))
def test_spearman_invariant_under_monotone_maps(pts):
    x = np.array([p[0] for p in pts])
    y = np.array([p[1] for p in pts])
    if np.ptp(y) == 0:
        return
    base = spearman(x, y)
    assert spearman(x ** 3 + 3, y) == pytest.approx(base, abs=1e-12)
    assert spearman(-x, y) == pytest.approx(-base, abs=1e-12)


# SDR higher-better, LSD lower-better
rows_strategy = st.lists(st.tuples(grid, grid.map(abs)), min_size=1, max_size=6)


def group_of(rows):
    reg = default_registry()
    return RankGroup("g", {f"u{i}": MetricVector(reg, {"SDR": s, "LSD": l}) for i, (s, l) in enumerate(rows)})


@given(rows_strategy, st.randoms(use_true_random=False))
def test_rank_score_permutation_invariant(rows, rnd):
    reg = default_registry()
    got = rank_score(group_of(rows), reg)
    order = list(range(len(rows)))
    rnd.shuffle(order)
    shuffled = RankGroup("g", {f"u{i}": MetricVector(reg, {"SDR": rows[i][0], "LSD": rows[i][1]}) for i in order})
    assert rank_score(shuffled, reg) == got
    assert all(1 / len(rows) - 1e-12 <= v <= 1.0 for v in got.values())


@given(rows_strategy, grid)
def test_rank_score_ignores_common_shift(rows, c):
    reg = default_registry()
    shifted = [(s + c, l + abs(c)) for s, l in rows]
    assert rank_score(group_of(shifted), reg) == pytest.approx(rank_score(group_of(rows), reg))


@given(rows_strategy, st.integers(0, 5), st.integers(1, 40).map(lambda k: k / 4))
def test_improving_a_row_never_worsens_it(rows, idx, delta):
    idx %= len(rows)
    reg = default_registry()
    before = rank_score(group_of(rows), reg)[f"u{idx}"]
    better = list(rows)
    better[idx] = (rows[idx][0] + delta, max(0.0, rows[idx][1] - delta))
    assert rank_score(group_of(better), reg)[f"u{idx}"] <= before + 1e-12


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**31 - 1), st.floats(0.1, 10), st.integers(0, 200))
def test_sdr_absorbs_gain_and_delay(seed, gain, delay):
    ref = np.random.default_rng(seed).standard_normal(4000)
    est = gain * np.concatenate([np.zeros(delay), ref[: len(ref) - delay]])
    assert sdr(ref, est) >= 60.0
