import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lagsynth.stats import aggregate_coeff_maps, bh_fdr, max_abs_signed, one_sample_t, pearson, wilcoxon_signed_rank

from oracles import bh_step_up, wilcoxon_enumeration


def _direct_pearson(x, y):
    n = len(x)
    mx, my = sum(x) / n, sum(y) / n
    sxy = sum((a - mx) * (b - my) for a, b in zip(x, y))
    sxx = sum((a - mx) ** 2 for a in x)
    syy = sum((b - my) ** 2 for b in y)
    return sxy / (sxx * syy) ** 0.5


def test_pearson_basic_cases(rng):
    y = rng.standard_normal(30)
    assert pearson(y, y) == pytest.approx(1.0)
    assert pearson(-y, y) == pytest.approx(-1.0)
    x, yh = [1.0, 2.0, 3.0, 4.0], [2.0, 4.0, 5.0, 4.0]
    assert pearson(x, yh) == pytest.approx(0.7182, abs=1e-4)
    assert pearson(x, yh) == pytest.approx(_direct_pearson(x, yh), abs=1e-12)


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 2**31), st.integers(2, 60))
def test_pearson_matches_direct_formula(seed, n):
    r = np.random.default_rng(seed)
    x, y = r.standard_normal(n), r.standard_normal(n) * 3 + 1
    assert abs(pearson(x, y) - _direct_pearson(list(x), list(y))) < 1e-12


def test_pearson_degenerate_and_errors():
    assert pearson([1.0, 1.0, 1.0], [1.0, 2.0, 3.0], return_flag=True) == (0.0, True)
    const = np.full(7, 0.1) + 1e-17 * 0  # rounding-prone constant
    assert pearson(const, np.arange(7.0), return_flag=True) == (0.0, True)
    with pytest.raises(ValueError):
        pearson([1.0, 2.0], [1.0, 2.0, 3.0])
    with pytest.raises(ValueError):
        pearson([1.0], [1.0])


# ---------------------------------------------------------------- Wilcoxon


def test_wilcoxon_identical_samples():
    a = np.arange(8.0)
    res = wilcoxon_signed_rank(a, a)
    assert res.pvalue == 1.0 and res.method == "degenerate"


def test_wilcoxon_all_positive_n6():
    res = wilcoxon_signed_rank([1.0, 2, 3, 4, 5, 6])
    assert res.pvalue == pytest.approx(2 / 64, abs=1e-15)
    assert res.method == "exact"


def test_wilcoxon_textbook_pairs():
    # classic paired example with a tie among |d|
    before = [125, 115, 130, 140, 140, 115, 140, 125, 140, 135]
    after = [110, 122, 125, 120, 140, 124, 123, 137, 135, 145]
    d = np.subtract(before, after, dtype=float)
    res = wilcoxon_signed_rank(before, after)
    assert res.pvalue == pytest.approx(wilcoxon_enumeration(d), abs=1e-12)
    assert res.n == 9  # one zero difference dropped


@settings(max_examples=300, deadline=None)
@given(st.integers(0, 2**31), st.integers(5, 12), st.booleans())
def test_wilcoxon_exact_matches_enumeration(seed, n, ties):
    r = np.random.default_rng(seed)
    d = r.integers(-4, 5, n).astype(float) if ties else r.standard_normal(n)
    if np.count_nonzero(d) < 5:
        return
    assert wilcoxon_signed_rank(d).pvalue == pytest.approx(wilcoxon_enumeration(d), abs=1e-12)


def test_wilcoxon_normal_approximation_close_to_exact(rng):
    d = rng.standard_normal(30) + 0.4
    approx = wilcoxon_signed_rank(d)
    exact = wilcoxon_signed_rank(d, exact_max_n=40)
    assert approx.method == "normal" and exact.method == "exact"
    assert abs(approx.pvalue - exact.pvalue) < 0.01


def test_wilcoxon_refuses_small_samples():
    with pytest.raises(ValueError, match="at least 5"):
        wilcoxon_signed_rank([0.1, 0.2, 0.3], [0.0, 0.0, 0.0])


# ---------------------------------------------------------------- BH


def test_bh_examples():
    rej, adj = bh_fdr([0.01, 0.04, 0.03, 0.005], 0.05)
    assert rej.all()
    np.testing.assert_allclose(adj, [0.02, 0.04, 0.04, 0.02])
    assert bh_fdr([0.0, 0.0, 0.0], 0.05)[0].all()
    assert not bh_fdr([0.06], 0.05)[0].any()


@settings(max_examples=1000, deadline=None)
@given(st.integers(0, 2**31), st.integers(1, 30), st.floats(0.001, 0.3))
def test_bh_matches_step_up_rule(seed, m, q):
    r = np.random.default_rng(seed)
    p = r.uniform(0, 1, m) ** r.uniform(0.5, 4)
    rej, adj = bh_fdr(p, q)
    np.testing.assert_array_equal(rej, bh_step_up(p, q))
    np.testing.assert_array_equal(rej, adj <= q)
    order = np.argsort(p, kind="stable")
    assert np.all(np.diff(adj[order]) >= -1e-15)
    # rejecting at q also rejects at a larger level
    assert np.all(bh_fdr(p, min(1.0, 1.5 * q))[0][rej])


# ---------------------------------------------------------------- t-maps


def test_max_abs_keeps_sign_and_lowest_index():
    x = np.array([[1.0, -3.0, 2.0], [3.0, -3.0, 0.0]])
    np.testing.assert_array_equal(max_abs_signed(x, axis=1), [-3.0, 3.0])


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**31), st.floats(0.1, 10))
def test_max_abs_invariants(seed, scale):
    x = np.random.default_rng(seed).standard_normal((4, 5, 6))
    v = max_abs_signed(x, axis=2)
    np.testing.assert_allclose(np.abs(v), np.abs(x).max(axis=2))
    k = np.argmax(np.abs(x), axis=2)
    np.testing.assert_array_equal(np.sign(v), np.sign(np.take_along_axis(x, k[..., None], 2)[..., 0]))
    np.testing.assert_array_equal(np.argmax(np.abs(scale * x), axis=2), k)


def test_one_sample_t_masks_zero_variance():
    t = one_sample_t(np.full((5, 3), 2.0))
    assert np.isnan(t).all()


def test_aggregate_constant_inputs_masked():
    maps = aggregate_coeff_maps([np.full((2, 3, 4), 0.5)] * 4)
    assert maps.freq_channel.mask.all() and maps.freq_lag.mask.all()


def test_aggregate_symmetric_inputs_give_zero_t(rng):
    base = 0.01 * rng.standard_normal((2, 3, 4))
    tensors = []
    for u in range(10):
        t = base.copy()
        t[1, 2, 3] = 1.0 if u % 2 == 0 else -1.0
        tensors.append(t)
    maps = aggregate_coeff_maps(tensors)
    assert abs(maps.freq_channel.t[2, 1]) < 1e-12


def test_aggregate_finds_planted_cell(rng):
    tensors = []
    for _ in range(10):
        t = 0.2 * rng.standard_normal((4, 5, 3))
        t[1, 3, 2] -= 1.0
        tensors.append(t)
    maps = aggregate_coeff_maps(tensors, ["a", "b", "c", "d"], [2, 4, 6, 8, 10])
    assert maps.freq_channel.argmax_abs() == (3, 1)
    assert maps.freq_lag.argmax_abs() == (3, 2)
    assert maps.negative_peak_freq == 8
    assert any(c["sign"] == -1 and (3, 1) in c["cells"] for c in maps.freq_channel.clusters)


def test_aggregate_shape_errors():
    with pytest.raises(ValueError):
        aggregate_coeff_maps([np.zeros((2, 2, 2)), np.zeros((2, 2, 3))])
    with pytest.raises(ValueError):
        aggregate_coeff_maps([np.zeros((2, 2, 2))])
