"""Group-level statistics: correlation, paired tests, FDR, and coefficient t-maps."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from scipy import ndimage
from scipy import stats as sst

__all__ = [
    "pearson",
    "WilcoxonResult",
    "wilcoxon_signed_rank",
    "bh_fdr",
    "max_abs_signed",
    "TMap",
    "TMapSet",
    "one_sample_t",
    "aggregate_coeff_maps",
]

EXACT_MAX_N = 25


def pearson(x, y, return_flag=False):
    """Sample Pearson correlation.

    Returns 0 when either input has zero variance; with ``return_flag`` the
    result is ``(r, degenerate)``.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError(f"pearson needs two equal-length vectors, got {x.shape} and {y.shape}")
    if len(x) < 2:
        raise ValueError("pearson needs at least 2 samples")
    xc = x - x.mean()
    yc = y - y.mean()
    sxx = float(xc @ xc)
    syy = float(yc @ yc)
    # a constant vector's mean can carry rounding error, so test the range too
    if sxx == 0 or syy == 0 or np.ptp(x) == 0 or np.ptp(y) == 0:
        r, degenerate = 0.0, True
    else:
        r = float(xc @ yc) / np.sqrt(sxx * syy)
        r, degenerate = float(np.clip(r, -1.0, 1.0)), False
    return (r, degenerate) if return_flag else r


class WilcoxonResult(NamedTuple):
    statistic: float
    pvalue: float
    n: int
    method: str


def _signed_rank_counts(doubled_ranks):
    """Number of sign patterns reaching each positive-rank sum (in doubled units)."""
    total = int(sum(doubled_ranks))
    counts = np.zeros(total + 1, dtype=float)
    counts[0] = 1.0
    for r in doubled_ranks:
        r = int(r)
        counts[r:] = counts[r:] + counts[: total + 1 - r].copy()
    return counts


def wilcoxon_signed_rank(a, b=None, exact_max_n=EXACT_MAX_N, min_n=5) -> WilcoxonResult:
    """Two-sided Wilcoxon signed-rank test on paired samples.

    Zero differences are dropped and tied magnitudes get midranks. The null
    distribution is enumerated exactly for ``n <= exact_max_n``; above that a
    tie-corrected normal approximation with continuity correction is used.
    The statistic is ``min(W+, W-)``.
    """
    a = np.asarray(a, dtype=float)
    d = a - np.asarray(b, dtype=float) if b is not None else a
    d = d[d != 0]
    n = len(d)
    if n == 0:
        return WilcoxonResult(0.0, 1.0, 0, "degenerate")
    if n < min_n:
        raise ValueError(f"Wilcoxon signed-rank needs at least {min_n} non-zero differences, got {n}")
    ranks = sst.rankdata(np.abs(d))
    w_plus = float(ranks[d > 0].sum())
    total = n * (n + 1) / 2
    stat = min(w_plus, total - w_plus)
    if n <= exact_max_n:
        doubled = np.rint(2 * ranks).astype(int)
        counts = _signed_rank_counts(doubled)
        probs = counts / 2.0**n
        k = int(round(2 * w_plus))
        lower = probs[: k + 1].sum()
        upper = probs[k:].sum()
        p = min(1.0, 2 * min(lower, upper))
        return WilcoxonResult(stat, float(p), n, "exact")
    _, tie_counts = np.unique(np.abs(d), return_counts=True)
    mean = total / 2
    var = n * (n + 1) * (2 * n + 1) / 24 - np.sum(tie_counts**3 - tie_counts) / 48
    z = (abs(w_plus - mean) - 0.5) / np.sqrt(var)
    p = min(1.0, 2 * sst.norm.sf(max(z, 0.0)))
    return WilcoxonResult(stat, float(p), n, "normal")


def bh_fdr(pvals, q=0.05):
    """Benjamini-Hochberg step-up procedure.

    Returns ``(reject, adjusted)`` in the input order.
    """
    p = np.asarray(pvals, dtype=float)
    if np.any((p < 0) | (p > 1)) or np.any(~np.isfinite(p)):
        raise ValueError("p-values must lie in [0, 1]")
    m = len(p)
    if m == 0:
        return np.zeros(0, bool), np.zeros(0)
    order = np.argsort(p, kind="stable")
    ranked = p[order]
    below = ranked <= q * np.arange(1, m + 1) / m
    k = np.nonzero(below)[0].max() + 1 if below.any() else 0
    reject = np.zeros(m, bool)
    reject[order[:k]] = True
    adj_sorted = np.minimum.accumulate((ranked * m / np.arange(1, m + 1))[::-1])[::-1]
    adjusted = np.empty(m)
    adjusted[order] = np.minimum(adj_sorted, 1.0)
    return reject, adjusted


def max_abs_signed(x, axis):
    """Collapse ``axis`` to the element of largest magnitude, keeping its sign.

    Ties go to the lowest index along ``axis``.
    """
    x = np.asarray(x, dtype=float)
    idx = np.argmax(np.abs(x), axis=axis)
    return np.take_along_axis(x, np.expand_dims(idx, axis), axis=axis).squeeze(axis)


def one_sample_t(samples, axis=0):
    """One-sample t statistic against zero; zero-variance cells are NaN."""
    samples = np.asarray(samples, dtype=float)
    n = samples.shape[axis]
    mean = samples.mean(axis=axis)
    sd = samples.std(axis=axis, ddof=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        t = mean / (sd / np.sqrt(n))
    return np.where(sd > 0, t, np.nan)


@dataclass
class TMap:
    """t-statistics over a 2-D (frequency x other) grid."""

    t: np.ndarray
    row_axis: str
    col_axis: str
    row_labels: list
    col_labels: list
    critical_t: float
    clusters: list[dict] = field(default_factory=list)

    @property
    def mask(self):
        return np.isnan(self.t)

    def argmax_abs(self):
        filled = np.where(np.isnan(self.t), -np.inf, np.abs(self.t))
        return np.unravel_index(int(np.argmax(filled)), self.t.shape)


@dataclass
class TMapSet:
    freq_channel: TMap
    freq_lag: TMap
    channel_mean_curve: np.ndarray
    negative_peak_freq: float


def _clusters(t, crit):
    out = []
    for sign in (1, -1):
        with np.errstate(invalid="ignore"):
            hit = np.nan_to_num(sign * t, nan=-np.inf) > crit
        labels, k = ndimage.label(hit)
        for lab in range(1, k + 1):
            cells = [tuple(int(i) for i in c) for c in np.argwhere(labels == lab)]
            out.append({"sign": sign, "cells": cells, "peak_t": float(np.max(sign * t[labels == lab]) * sign)})
    return out


def aggregate_coeff_maps(tensors, channel_labels=None, freqs=None, alpha=0.05) -> TMapSet:
    """Group t-maps from per-unit ``C x F x M`` coefficient or correlation tensors.

    For each unit the tensor is collapsed by signed max-abs across lags
    (frequency x channel view) and across channels (frequency x lag view);
    the collapsed maps are t-tested across units. Clusters are connected
    regions beyond the two-sided critical t at ``alpha``.
    """
    stack = np.asarray([np.asarray(t, dtype=float) for t in tensors])
    if stack.ndim != 4:
        raise ValueError(f"expected a list of C x F x M tensors with identical shapes, got {stack.shape}")
    U, C, F, M = stack.shape
    if U < 2:
        raise ValueError("need at least 2 units to form t-maps")
    channel_labels = list(channel_labels) if channel_labels is not None else list(range(C))
    freqs = list(freqs) if freqs is not None else list(range(F))
    fc = max_abs_signed(stack, axis=3)  # U x C x F
    fl = max_abs_signed(stack, axis=1)  # U x F x M
    crit = float(sst.t.ppf(1 - alpha / 2, U - 1))
    t_fc = one_sample_t(fc, axis=0).T
    t_fl = one_sample_t(fl, axis=0)
    curve = fc.mean(axis=0).mean(axis=0)
    return TMapSet(
        TMap(t_fc, "frequency", "channel", freqs, channel_labels, crit, _clusters(t_fc, crit)),
        TMap(t_fl, "frequency", "lag", freqs, list(range(M)), crit, _clusters(t_fl, crit)),
        curve,
        freqs[int(np.argmin(curve))],
    )
