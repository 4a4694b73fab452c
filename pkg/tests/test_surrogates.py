import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats as sst

from lagsynth.cv import NestedSettings
from lagsynth.features import build_lagged_design
from lagsynth.sgl import HyperParams
from lagsynth.surrogates import (
    NullDistribution,
    StationarityError,
    adf_test,
    combine_null,
    empirical_p,
    ft_surrogate,
    iaaft_surrogate,
    null_distribution,
)


def _ar1(r, n, phi):
    x = np.zeros(n)
    e = r.standard_normal(n)
    for t in range(1, n):
        x[t] = phi * x[t - 1] + e[t]
    return x


series = st.integers(0, 2**31).map(lambda s: np.random.default_rng(s)).flatmap(
    lambda r: st.integers(8, 300).map(lambda n: np.exp(r.standard_normal(n)) * r.uniform(0.1, 5) + r.normal())
)


@settings(max_examples=500, deadline=None)
@given(series, st.integers(0, 2**31))
def test_ft_surrogate_keeps_magnitudes(y, seed):
    s = ft_surrogate(y, seed)
    np.testing.assert_allclose(np.abs(np.fft.rfft(s)), np.abs(np.fft.rfft(y)), atol=1e-9 * max(1.0, np.abs(y).sum()))


@settings(max_examples=500, deadline=None)
@given(series, st.integers(0, 2**31))
def test_iaaft_keeps_values_and_error_never_increases(y, seed):
    res = iaaft_surrogate(y, seed, return_info=True)
    np.testing.assert_array_equal(np.sort(res.surrogate), np.sort(y))
    assert np.all(np.diff(res.errors) <= 0)


def test_ft_constant_stays_constant():
    s = ft_surrogate(np.full(64, 2.5), 1)
    np.testing.assert_allclose(s, 2.5, atol=1e-12)


def test_ft_preserves_autocorrelation():
    diffs = []
    for seed in range(100):
        r = np.random.default_rng(seed)
        y = _ar1(r, 200, 0.7)
        s = ft_surrogate(y, seed + 1000)

        def acf(x):
            x = x - x.mean()
            return np.array([x[:-k] @ x[k:] / (x @ x) for k in range(1, 6)])

        diffs.append(acf(s) - acf(y))
    assert np.all(np.abs(np.mean(diffs, axis=0)) < 0.1)


def test_iaaft_converges_on_white_noise():
    ok = 0
    for seed in range(100):
        y = np.random.default_rng(seed).standard_normal(200)
        res = iaaft_surrogate(y, seed, max_iter=50, spectrum_tol=1e-3, return_info=True)
        ok += res.converged
    assert ok >= 95


def test_iaaft_keeps_skewness_ft_does_not():
    y = np.exp(1.5 * np.random.default_rng(4).standard_normal(512))
    s_i = iaaft_surrogate(y, 1)
    s_f = ft_surrogate(y, 1)
    assert sst.skew(s_i) == pytest.approx(sst.skew(y), abs=1e-12)
    assert abs(sst.skew(s_f) - sst.skew(y)) > 0.5


def test_adf_random_walk_not_rejected():
    rejected = sum(adf_test(np.cumsum(np.random.default_rng(s).standard_normal(1000))).rejected for s in range(100))
    assert rejected <= 1


def test_adf_white_noise_rejected():
    hits = sum(adf_test(np.random.default_rng(s).standard_normal(1000), threshold=0.05).rejected for s in range(100))
    assert hits >= 95


def test_adf_ar_more_negative_than_random_walk():
    for s in range(10):
        e = np.random.default_rng(s).standard_normal(1000)
        walk = np.cumsum(e)
        ar = np.zeros(1000)
        for t in range(1, 1000):
            ar[t] = 0.5 * ar[t - 1] + e[t]
        assert adf_test(ar).statistic < adf_test(walk).statistic


def test_adf_singular_and_short():
    with pytest.raises(np.linalg.LinAlgError):
        adf_test(np.ones(100))
    with pytest.raises(ValueError):
        adf_test(np.arange(10.0))


def test_empirical_p_conventions():
    null = np.array([0.1, 0.2, 0.3, 0.4])
    assert empirical_p(null, 0.5) == (0.0, 1 / 5)
    assert empirical_p(null, 0.3) == (0.5, 3 / 5)
    assert empirical_p(null, 0.15)[0] > 0.5
    with pytest.raises(ValueError):
        empirical_p([], 0.1)


def _null_data(seed, n=400):
    r = np.random.default_rng(seed)
    X = build_lagged_design(r.standard_normal((n, 2, 3)), 2)
    y = _ar1(r, X.shape[0], 0.3)
    h = X.shape[0] // 2
    return X.take_rows(np.arange(h)), y[:h], X.take_rows(np.arange(h, X.shape[0])), y[h:]


FAST = NestedSettings(fixed_hyper=HyperParams(0.05, 0.5))


def test_null_distribution_shapes_and_determinism():
    Xtr, ytr, Xte, yte = _null_data(0)
    a = null_distribution(Xtr, ytr, Xte, yte, FAST, n_surrogates=6, base_seed=3)
    b = null_distribution(Xtr, ytr, Xte, yte, FAST, n_surrogates=6, base_seed=3)
    assert a.n_surrogates == 6 and not a.failed
    np.testing.assert_array_equal(a.surrogate_stats, b.surrogate_stats)
    assert len(a.adf) == 2 and all(x.rejected for x in a.adf)
    d = a.to_dict()
    assert set(d["quantiles"]) == {"0.05", "0.25", "0.5", "0.75", "0.95"}


def test_null_distribution_parallel_matches_serial():
    Xtr, ytr, Xte, yte = _null_data(1)
    a = null_distribution(Xtr, ytr, Xte, yte, FAST, n_surrogates=4, base_seed=0)
    b = null_distribution(Xtr, ytr, Xte, yte, FAST, n_surrogates=4, base_seed=0, n_workers=2)
    np.testing.assert_array_equal(a.surrogate_stats, b.surrogate_stats)


def test_null_distribution_refuses_nonstationary_target():
    Xtr, ytr, Xte, yte = _null_data(2)
    walk = np.cumsum(np.random.default_rng(0).standard_normal(len(ytr)))
    with pytest.raises(StationarityError, match="statistic"):
        null_distribution(Xtr, walk, Xte, yte, FAST, n_surrogates=2)


def test_failed_surrogates_are_excluded(recwarn):
    Xtr, ytr, Xte, yte = _null_data(3)
    calls = {"n": 0}

    def flaky(X, y, settings):
        from lagsynth.cv import nested_fit

        calls["n"] += 1
        if calls["n"] == 3:
            raise FloatingPointError("overflow")
        return nested_fit(X, y, settings)

    res = null_distribution(Xtr, ytr, Xte, yte, FAST, n_surrogates=5, observed=0.2, fit=flaky)
    assert res.failed == [2]  # observed r is given, so call k fits surrogate k - 1
    assert res.n_surrogates == 4
    assert any(issubclass(w.category, RuntimeWarning) for w in recwarn)


def test_combine_null_averages_by_index():
    a = NullDistribution(np.array([0.1, 0.2, 0.3]), 0.5, 3, 0.0, 0.25)
    b = NullDistribution(np.array([0.3, 0.0, 0.1]), 0.1, 3, 0.0, 0.25)
    c = combine_null([a, b])
    np.testing.assert_allclose(c.surrogate_stats, [0.2, 0.1, 0.2])
    assert c.observed_stat == pytest.approx(0.3)
    assert c.p_value == 0.0
    a2 = NullDistribution(np.array([0.1, 0.3]), 0.5, 2, 0.0, 0.0, failed=[1])
    c2 = combine_null([a2, b])
    np.testing.assert_allclose(c2.surrogate_stats, [0.2, 0.2])
