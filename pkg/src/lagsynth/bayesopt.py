"""Gaussian-process Bayesian optimization of the (lambda, alpha) penalty pair.

Points are searched in the unit square: the first coordinate maps to
lambda on a log scale, the second to alpha linearly. New points minimize
the lower confidence bound ``mu - kappa * sigma`` of the GP fitted to the
objective values (the minimization form of the upper confidence bound).
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import linalg, optimize
from scipy.stats import qmc

from .sgl import HyperParams

__all__ = ["EvaluatedPoint", "OptimizationTrace", "SearchSpace", "MaternGP", "gp_ucb_optimize"]

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SearchSpace:
    lam_min: float
    lam_max: float
    alpha_min: float = 0.0
    alpha_max: float = 1.0

    def __post_init__(self):
        if not (0 < self.lam_min <= self.lam_max):
            raise ValueError(f"need 0 < lam_min <= lam_max, got [{self.lam_min}, {self.lam_max}]")
        if not (0 <= self.alpha_min <= self.alpha_max <= 1):
            raise ValueError("alpha bounds must satisfy 0 <= min <= max <= 1")

    def to_params(self, u) -> tuple[float, float]:
        u = np.clip(np.asarray(u, dtype=float), 0.0, 1.0)
        lo, hi = np.log(self.lam_min), np.log(self.lam_max)
        lam = float(np.exp(lo + u[0] * (hi - lo)))
        alpha = float(self.alpha_min + u[1] * (self.alpha_max - self.alpha_min))
        return lam, alpha

    def to_unit(self, lam, alpha) -> np.ndarray:
        lo, hi = np.log(self.lam_min), np.log(self.lam_max)
        u0 = 0.0 if hi == lo else (np.log(lam) - lo) / (hi - lo)
        span = self.alpha_max - self.alpha_min
        u1 = 0.0 if span == 0 else (alpha - self.alpha_min) / span
        return np.array([u0, u1])


@dataclass
class EvaluatedPoint:
    lam: float
    alpha: float
    value: float
    ok: bool
    acquired: bool
    unit: tuple[float, float]


@dataclass
class OptimizationTrace:
    points: list[EvaluatedPoint]
    chosen: HyperParams
    chosen_index: int
    posterior_mean: float
    posterior_std: float
    n_acquisitions: int
    posterior_means: list[float] = field(default_factory=list)

    def to_dict(self):
        return {
            "points": [
                {"lambda": p.lam, "alpha": p.alpha, "value": p.value if p.ok else None, "ok": p.ok, "acquired": p.acquired}
                for p in self.points
            ],
            "chosen": {"lambda": self.chosen.lam, "alpha": self.chosen.alpha},
            "chosen_index": self.chosen_index,
            "posterior_mean": self.posterior_mean,
            "posterior_std": self.posterior_std,
            "n_acquisitions": self.n_acquisitions,
        }


def _matern52(A, B, length_scales):
    d = np.sqrt(np.sum(((A[:, None, :] - B[None, :, :]) / length_scales) ** 2, axis=2))
    s5d = np.sqrt(5.0) * d
    return (1.0 + s5d + 5.0 / 3.0 * d * d) * np.exp(-s5d)


class MaternGP:
    """Zero-mean GP on standardized targets with a Matern-5/2 kernel.

    The signal variance is profiled out of the marginal likelihood; the two
    length scales are fit by L-BFGS-B from a fixed start plus ``n_restarts``
    seeded random starts. ``nugget`` is the observation jitter relative to
    the signal variance.
    """

    LOG_BOUNDS = (np.log(1e-2), np.log(1e1))

    def __init__(self, nugget=1e-6, n_restarts=2, seed=0):
        self.nugget = nugget
        self.n_restarts = n_restarts
        self.seed = seed

    def _nll(self, log_ls):
        R = _matern52(self.U, self.U, np.exp(log_ls)) + self.nugget * np.eye(len(self.U))
        try:
            L = np.linalg.cholesky(R)
        except np.linalg.LinAlgError:
            return 1e25
        a = linalg.cho_solve((L, True), self.z)
        sigma2 = max(float(self.z @ a) / len(self.z), 1e-12)
        return 0.5 * len(self.z) * np.log(sigma2) + float(np.sum(np.log(np.diag(L))))

    def fit(self, U, y):
        self.U = np.asarray(U, dtype=float)
        y = np.asarray(y, dtype=float)
        self.y_mean = float(y.mean())
        sd = float(y.std())
        self.y_scale = sd if sd > 0 else 1.0
        self.z = (y - self.y_mean) / self.y_scale
        rng = np.random.default_rng(self.seed)
        lo, hi = self.LOG_BOUNDS
        starts = [np.full(2, np.log(0.3))] + [rng.uniform(lo, hi, 2) for _ in range(self.n_restarts)]
        best = None
        for x0 in starts:
            res = optimize.minimize(self._nll, x0, method="L-BFGS-B", bounds=[(lo, hi)] * 2)
            if best is None or res.fun < best.fun:
                best = res
        self.length_scales = np.exp(best.x)
        R = _matern52(self.U, self.U, self.length_scales) + self.nugget * np.eye(len(self.U))
        self.L = np.linalg.cholesky(R)
        self.alpha_ = linalg.cho_solve((self.L, True), self.z)
        self.sigma2 = max(float(self.z @ self.alpha_) / len(self.z), 1e-12)
        return self

    def predict(self, Uq, return_std=False):
        r = _matern52(np.atleast_2d(Uq), self.U, self.length_scales)
        mu = self.y_mean + self.y_scale * (r @ self.alpha_)
        if not return_std:
            return mu
        v = linalg.solve_triangular(self.L, r.T, lower=True)
        var = self.sigma2 * np.maximum(1.0 + self.nugget - np.sum(v * v, axis=0), 0.0)
        return mu, self.y_scale * np.sqrt(var)


def _fit_gp(U, y, seed, n_restarts):
    return MaternGP(n_restarts=n_restarts, seed=seed).fit(U, y)


def _initial_design(n, seed):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", UserWarning)
        return qmc.Sobol(d=2, scramble=True, seed=seed).random(n)


def _acquire(gp, kappa, evaluated, rng, n_candidates):
    cand = rng.random((n_candidates, 2))

    def lcb(u):
        mu, sd = gp.predict(np.atleast_2d(u), return_std=True)
        return mu - kappa * sd

    scores = lcb(cand)
    best = cand[int(np.argmin(scores))]
    res = optimize.minimize(lambda u: float(lcb(u)[0]), best, method="L-BFGS-B", bounds=[(0, 1), (0, 1)])
    u_new = np.clip(res.x if res.fun <= scores.min() else best, 0, 1)
    if np.min(np.linalg.norm(evaluated - u_new, axis=1)) < 1e-6:
        far = np.min(np.linalg.norm(cand[:, None, :] - evaluated[None], axis=2), axis=1) > 1e-6
        u_new = cand[far][int(np.argmin(scores[far]))]
    return u_new


def gp_ucb_optimize(
    objective: Callable[[float, float], float],
    space: SearchSpace,
    budget: int = 40,
    kappa: float = 0.1,
    seed: int = 0,
    n_init: int = 8,
    n_candidates: int = 1024,
    n_restarts: int = 2,
) -> OptimizationTrace:
    """Minimize ``objective(lam, alpha)`` with GP-UCB.

    The returned hyperparameters minimize the GP posterior mean over the
    evaluated points. With ``budget == n_init`` no GP is fitted and the best
    initial point is returned.
    """
    if budget < n_init or n_init < 1:
        raise ValueError(f"budget ({budget}) must be >= n_init ({n_init}) >= 1")
    rng = np.random.default_rng(seed)
    points: list[EvaluatedPoint] = []

    def run(u, acquired):
        lam, alpha = space.to_params(u)
        try:
            val = float(objective(lam, alpha))
        except (ArithmeticError, np.linalg.LinAlgError) as exc:
            logger.warning("objective failed at lam=%.4g alpha=%.3f: %s", lam, alpha, exc)
            val = float("nan")
        ok = bool(np.isfinite(val))
        if not ok:
            logger.warning("non-finite objective at lam=%.4g alpha=%.3f; excluded from GP", lam, alpha)
        points.append(EvaluatedPoint(lam, alpha, val, ok, acquired, (float(u[0]), float(u[1]))))

    for u in _initial_design(n_init, seed):
        run(u, False)

    n_acq = 0
    while len(points) < budget:
        U = np.array([p.unit for p in points if p.ok])
        if len(U) == 0:
            break
        y = np.array([p.value for p in points if p.ok])
        gp = _fit_gp(U, y, seed, n_restarts)
        u_new = _acquire(gp, kappa, np.array([p.unit for p in points]), rng, n_candidates)
        run(u_new, True)
        n_acq += 1

    ok_idx = [i for i, p in enumerate(points) if p.ok]
    if not ok_idx:
        raise RuntimeError("every objective evaluation failed")
    U = np.array([points[i].unit for i in ok_idx])
    y = np.array([points[i].value for i in ok_idx])
    if n_acq == 0:
        j = int(np.argmin(y))
        means, mu, sd = list(y), float(y[j]), 0.0
    else:
        gp = _fit_gp(U, y, seed, n_restarts)
        mu_all, sd_all = gp.predict(U, return_std=True)
        j = int(np.argmin(mu_all))
        means, mu, sd = [float(m) for m in mu_all], float(mu_all[j]), float(sd_all[j])
    best = points[ok_idx[j]]
    return OptimizationTrace(points, HyperParams(best.lam, best.alpha), ok_idx[j], mu, sd, n_acq, means)
