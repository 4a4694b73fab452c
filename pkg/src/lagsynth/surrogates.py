"""Surrogate null models for prediction significance.

FT surrogates keep the Fourier amplitudes of the target and randomize
phases; IAAFT surrogates additionally keep its exact value distribution.
The null distribution refits the full estimation pipeline on surrogate
targets while the EEG features stay untouched.
"""

from __future__ import annotations

import logging
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from statsmodels.tsa.stattools import adfuller

from .cv import NestedSettings, evaluate, nested_fit

__all__ = [
    "ft_surrogate",
    "IaaftResult",
    "iaaft_surrogate",
    "spectral_error",
    "AdfResult",
    "adf_test",
    "StationarityError",
    "NullDistribution",
    "null_distribution",
    "combine_null",
    "empirical_p",
]

logger = logging.getLogger(__name__)


def ft_surrogate(y, seed) -> np.ndarray:
    """Phase-randomized surrogate with the same Fourier magnitudes as ``y``.

    DC and (for even lengths) Nyquist bins keep their phase.
    """
    y = np.asarray(y, dtype=float)
    n = len(y)
    if n < 4:
        raise ValueError("series must have at least 4 samples")
    rng = np.random.default_rng(seed)
    spec = np.fft.rfft(y)
    phases = rng.uniform(0, 2 * np.pi, len(spec))
    phases[0] = 0.0
    if n % 2 == 0:
        phases[-1] = 0.0
    return np.fft.irfft(spec * np.exp(1j * phases), n)


def spectral_error(x, target_amp) -> float:
    """Relative RMS difference between |rfft(x)| and ``target_amp``."""
    amp = np.abs(np.fft.rfft(x))
    denom = np.sqrt(np.mean(target_amp**2))
    if denom == 0:
        return 0.0
    return float(np.sqrt(np.mean((amp - target_amp) ** 2)) / denom)


@dataclass
class IaaftResult:
    surrogate: np.ndarray
    errors: list[float]
    converged: bool
    iterations: int


def iaaft_surrogate(y, seed, max_iter=200, spectrum_tol=1e-4, return_info=False):
    """Iterative amplitude-adjusted Fourier transform surrogate.

    Alternates between imposing the Fourier magnitudes of ``y`` and
    rank-remapping onto the sorted values of ``y``. The relative spectral
    error cannot reach zero after the rank step, so the loop counts as
    converged once the error is at most ``spectrum_tol`` or improves by a
    relative amount no larger than ``spectrum_tol`` (or not at all). The
    best rank-remapped iterate is returned, so its values are an exact
    permutation of ``y``.
    """
    y = np.asarray(y, dtype=float)
    n = len(y)
    if n < 4:
        raise ValueError("series must have at least 4 samples")
    rng = np.random.default_rng(seed)
    amp = np.abs(np.fft.rfft(y))
    sorted_y = np.sort(y)
    s = rng.permutation(y)
    errors = [spectral_error(s, amp)]
    converged = errors[0] <= spectrum_tol
    it = 0
    while not converged and it < max_iter:
        it += 1
        spec = np.fft.rfft(s)
        mag = np.abs(spec)
        phase = np.where(mag > 0, spec / np.where(mag > 0, mag, 1.0), 1.0)
        shaped = np.fft.irfft(amp * phase, n)
        cand = np.empty(n)
        cand[np.argsort(shaped, kind="stable")] = sorted_y
        err = spectral_error(cand, amp)
        if err >= errors[-1]:
            # fixed point (or limit cycle) of the rank remapping
            converged = True
            break
        gain = errors[-1] - err
        s = cand
        errors.append(err)
        converged = err <= spectrum_tol or gain <= spectrum_tol * errors[-2]
    if not converged:
        logger.debug("IAAFT stopped at spectral error %.3g after %d iterations", errors[-1], it)
    if return_info:
        return IaaftResult(s, errors, converged, len(errors) - 1)
    return s


class StationarityError(ValueError):
    """Raised when a target series fails the ADF pre-test."""

    def __init__(self, result: "AdfResult", threshold: float, which: str = "target"):
        self.result = result
        super().__init__(
            f"{which} failed the ADF stationarity pre-test: statistic {result.statistic:.3f}, "
            f"p = {result.p_value:.3g} (threshold {threshold:g})"
        )


@dataclass
class AdfResult:
    statistic: float
    p_value: float
    lags_used: int
    rejected: bool
    threshold: float


def adf_test(y, max_lag: int = 12, threshold: float = 1e-5) -> AdfResult:
    """Augmented Dickey-Fuller test with a constant; lag order by AIC.

    ``rejected`` means the unit-root null is rejected (the series looks
    stationary) at ``threshold``.
    """
    y = np.asarray(y, dtype=float)
    if len(y) <= max_lag + 2:
        raise ValueError(f"series of length {len(y)} too short for max_lag={max_lag}")
    if np.ptp(y) == 0:
        raise np.linalg.LinAlgError("ADF regression is singular for a constant series")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        stat, p, lags, *_ = adfuller(y, maxlag=max_lag, regression="c", autolag="AIC")
    if not np.isfinite(stat):
        raise np.linalg.LinAlgError("ADF regression is singular")
    return AdfResult(float(stat), float(p), int(lags), bool(p < threshold), threshold)


def empirical_p(null_stats, observed) -> tuple[float, float]:
    """Tie-inclusive exceedance fraction and the (k+1)/(n+1) variant."""
    null_stats = np.asarray(null_stats, dtype=float)
    n = len(null_stats)
    if n == 0:
        raise ValueError("empty null distribution")
    k = int(np.sum(null_stats >= observed))
    return k / n, (k + 1) / (n + 1)


@dataclass
class NullDistribution:
    surrogate_stats: np.ndarray
    observed_stat: float
    n_surrogates: int
    p_value: float
    p_conservative: float
    failed: list[int] = field(default_factory=list)
    adf: list[AdfResult] = field(default_factory=list)

    def to_dict(self):
        s = np.asarray(self.surrogate_stats)
        return {
            "observed_stat": self.observed_stat,
            "n_surrogates": self.n_surrogates,
            "p_value": self.p_value,
            "p_conservative": self.p_conservative,
            "failed": list(self.failed),
            "surrogate_stats": [float(v) for v in s],
            "quantiles": {str(q): float(np.quantile(s, q)) for q in (0.05, 0.25, 0.5, 0.75, 0.95)} if len(s) else {},
            "adf": [{"statistic": a.statistic, "p_value": a.p_value, "lags_used": a.lags_used} for a in self.adf],
        }


def _default_observed(X_train, y_train, X_test, y_test, settings, fit):
    model, _ = fit(X_train, y_train, settings)
    return evaluate(model, X_test, y_test).r


def _surrogate_r(job, i):
    X_train, y_train, X_test, y_test, settings, base_seed, iaaft_opts, fit = job
    ss = np.random.SeedSequence(base_seed + i).spawn(2)
    s_train = iaaft_surrogate(y_train, ss[0], **iaaft_opts)
    s_test = iaaft_surrogate(y_test, ss[1], **iaaft_opts)
    try:
        model, _ = fit(X_train, s_train, settings)
        return evaluate(model, X_test, s_test).r, None
    except (ArithmeticError, np.linalg.LinAlgError, RuntimeError) as exc:
        return None, str(exc)


def null_distribution(
    X_train,
    y_train,
    X_test,
    y_test,
    settings: NestedSettings | None = None,
    n_surrogates: int = 100,
    base_seed: int = 0,
    observed: float | None = None,
    adf_threshold: float | None = 1e-5,
    adf_max_lag: int = 12,
    iaaft_opts: dict | None = None,
    fit: Callable = nested_fit,
    n_workers: int = 1,
) -> NullDistribution:
    """Null distribution of the held-out correlation under IAAFT target surrogates.

    Surrogate ``i`` replaces both ``y_train`` and ``y_test`` by IAAFT
    surrogates seeded from ``base_seed + i`` and reruns ``fit`` on the
    unchanged features. Targets must pass the ADF pre-test first unless
    ``adf_threshold`` is None. Surrogates are independent, so
    ``n_workers > 1`` spreads them over processes without changing results.
    """
    if n_surrogates < 1:
        raise ValueError("n_surrogates must be >= 1")
    settings = settings or NestedSettings()
    iaaft_opts = iaaft_opts or {}
    adf = []
    if adf_threshold is not None:
        for name, series in (("training target", y_train), ("test target", y_test)):
            res = adf_test(series, adf_max_lag, adf_threshold)
            adf.append(res)
            if not res.rejected:
                raise StationarityError(res, adf_threshold, name)
    if observed is None:
        observed = _default_observed(X_train, y_train, X_test, y_test, settings, fit)
    job = (X_train, y_train, X_test, y_test, settings, base_seed, iaaft_opts, fit)
    if n_workers > 1:
        with ProcessPoolExecutor(max_workers=n_workers) as pool:
            results = list(pool.map(_surrogate_r, [job] * n_surrogates, range(n_surrogates)))
    else:
        results = [_surrogate_r(job, i) for i in range(n_surrogates)]
    stats, failed = [], []
    for i, (r, err) in enumerate(results):
        if err is not None:
            logger.warning("surrogate %d failed: %s", i, err)
            failed.append(i)
        else:
            stats.append(r)
    if failed:
        warnings.warn(f"{len(failed)} surrogate fits failed and were excluded", RuntimeWarning)
    stats = np.asarray(stats)
    p, p_cons = empirical_p(stats, observed)
    return NullDistribution(stats, float(observed), len(stats), p, p_cons, failed, adf)


def combine_null(parts: list[NullDistribution]) -> NullDistribution:
    """Average observed and surrogate statistics across parcellations, index by index."""
    n = min(p.n_surrogates for p in parts)
    if any(p.failed for p in parts):
        # align on surrogate indices that succeeded everywhere
        ok = set(range(max(p.n_surrogates + len(p.failed) for p in parts)))
        for p in parts:
            ok -= set(p.failed)
        idx = sorted(ok)
        per = []
        for p in parts:
            good = [i for i in range(p.n_surrogates + len(p.failed)) if i not in p.failed]
            lookup = dict(zip(good, p.surrogate_stats))
            per.append([lookup[i] for i in idx])
        stats = np.mean(per, axis=0)
    else:
        stats = np.mean([p.surrogate_stats[:n] for p in parts], axis=0)
    observed = float(np.mean([p.observed_stat for p in parts]))
    pv, pc = empirical_p(stats, observed)
    failed = sorted(set().union(*[p.failed for p in parts]))
    adf = [a for p in parts for a in p.adf]
    return NullDistribution(stats, observed, len(stats), pv, pc, failed, adf)
