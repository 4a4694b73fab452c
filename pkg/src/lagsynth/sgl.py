"""Sparse Group Lasso for distributed-lag regression.

Solves::

    min_b  1/(2n) ||yc - Xc b||^2
           + lam * (1 - alpha) * sum_g sqrt(p_g) ||b_g||_2
           + lam * alpha * ||b||_1

with ``Xc``/``yc`` column-centred so the intercept is unpenalized. The
solver is monotone FISTA with backtracking, started from a power-iteration
Lipschitz estimate.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .features import LaggedDesign

__all__ = [
    "HyperParams",
    "SolverOptions",
    "FitDiagnostics",
    "SglModel",
    "sgl_prox",
    "sgl_penalty",
    "sgl_objective",
    "lambda_max",
    "fit_sgl",
    "predict",
    "kkt_residual",
]

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class HyperParams:
    lam: float
    alpha: float

    def __post_init__(self):
        if not np.isfinite(self.lam) or self.lam < 0:
            raise ValueError(f"lambda must be finite and >= 0, got {self.lam}")
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"alpha must lie in [0, 1], got {self.alpha}")


@dataclass(frozen=True)
class SolverOptions:
    max_iter: int = 5000
    tol: float = 1e-6
    rel_obj_tol: float = 1e-10
    check_every: int = 10
    debug: bool = False


@dataclass
class FitDiagnostics:
    iterations: int
    objective: float
    kkt: float
    converged: bool
    objective_trace: list[float] = field(default_factory=list, repr=False)


@dataclass
class SglModel:
    intercept: float
    coeffs: np.ndarray
    hyper: HyperParams
    diag: FitDiagnostics | None = None

    def coeff_tensor(self, n_channels, n_freqs, n_lags):
        return self.coeffs.reshape(n_channels, n_freqs, n_lags)


def _as_matrix(design):
    return design.matrix if isinstance(design, LaggedDesign) else np.asarray(design, dtype=float)


def _groups_of(design, groups):
    if groups is not None:
        return np.asarray(groups, dtype=int)
    if isinstance(design, LaggedDesign):
        return design.group_index
    return np.arange(_as_matrix(design).shape[1])


class _Groups:
    """Precomputed group bookkeeping for vectorized prox/penalty."""

    def __init__(self, index):
        index = np.asarray(index, dtype=int)
        _, self.inv = np.unique(index, return_inverse=True)
        self.sizes = np.bincount(self.inv)
        self.sqrt_sizes = np.sqrt(self.sizes)

    def norms(self, x):
        return np.sqrt(np.bincount(self.inv, weights=x * x, minlength=len(self.sizes)))


def _prox(v, step, lam, alpha, g: _Groups):
    if lam == 0:
        return v.copy()
    u = np.sign(v) * np.maximum(np.abs(v) - step * lam * alpha, 0.0)
    if alpha < 1:
        norms = g.norms(u)
        thresh = step * lam * (1 - alpha) * g.sqrt_sizes
        with np.errstate(invalid="ignore", divide="ignore"):
            scale = np.where(norms > thresh, 1.0 - thresh / norms, 0.0)
        u = u * scale[g.inv]
    return u


def sgl_prox(v, step, hyper: HyperParams, groups) -> np.ndarray:
    """Proximal operator of ``step`` times the SGL penalty.

    Soft-thresholds each coordinate at ``step*lam*alpha`` then shrinks each
    group by ``step*lam*(1-alpha)*sqrt(p_g)``. Zeroed groups are exact zeros.
    """
    if step <= 0:
        raise ValueError("step must be positive")
    v = np.asarray(v, dtype=float)
    return _prox(v, step, hyper.lam, hyper.alpha, _Groups(groups))


def _penalty(b, lam, alpha, g: _Groups):
    if lam == 0:
        return 0.0
    return lam * (1 - alpha) * float(g.sqrt_sizes @ g.norms(b)) + lam * alpha * float(np.abs(b).sum())


def sgl_penalty(b, hyper: HyperParams, groups) -> float:
    return _penalty(np.asarray(b, float), hyper.lam, hyper.alpha, _Groups(groups))


def _center(X, y):
    x_mean = X.mean(axis=0)
    y_mean = float(np.mean(y))
    return X - x_mean, y - y_mean, x_mean, y_mean


def sgl_objective(design, y, coeffs, hyper: HyperParams, groups=None) -> float:
    """Penalized objective at ``coeffs`` with the optimal (unpenalized) intercept."""
    X = _as_matrix(design)
    Xc, yc, _, _ = _center(X, np.asarray(y, float))
    r = yc - Xc @ coeffs
    g = _Groups(_groups_of(design, groups))
    return 0.5 * float(r @ r) / len(yc) + _penalty(np.asarray(coeffs, float), hyper.lam, hyper.alpha, g)


def _group_lambda(grad, alpha, sqrt_p, iters=100):
    """Smallest lam with ||S(grad, lam*alpha)|| <= lam*(1-alpha)*sqrt_p."""
    a = np.abs(grad)
    if a.max() == 0:
        return 0.0
    if alpha == 1:
        return float(a.max())
    if alpha == 0:
        return float(np.linalg.norm(a) / sqrt_p)

    def excess(lam):
        return np.linalg.norm(np.maximum(a - lam * alpha, 0.0)) - lam * (1 - alpha) * sqrt_p

    lo, hi = 0.0, float(a.max()) / alpha
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if excess(mid) > 0:
            lo = mid
        else:
            hi = mid
    return hi


def lambda_max(design, y, alpha: float, groups=None) -> float:
    """Smallest lambda at which all penalized coefficients are zero."""
    X = _as_matrix(design)
    if X.size == 0:
        raise ValueError("design is empty")
    y = np.asarray(y, float)
    Xc, yc, _, _ = _center(X, y)
    grad = Xc.T @ yc / len(yc)
    g = _Groups(_groups_of(design, groups))
    return max(
        _group_lambda(grad[g.inv == k], alpha, g.sqrt_sizes[k]) for k in range(len(g.sizes))
    )


def _power_iteration(X, n_iter=30):
    p = X.shape[1]
    v = np.ones(p) / np.sqrt(p)
    est = 0.0
    for _ in range(n_iter):
        w = X.T @ (X @ v)
        nrm = np.linalg.norm(w)
        if nrm == 0:
            return 0.0
        est = nrm
        v = w / nrm
    return est


def _kkt(b, grad, lam, alpha, g):
    """Max-abs of the unit-step proximal gradient mapping."""
    return float(np.max(np.abs(b - _prox(b - grad, 1.0, lam, alpha, g)), initial=0.0))


def fit_sgl(design, y, hyper: HyperParams, opts: SolverOptions | None = None, groups=None, init=None) -> SglModel:
    """Fit the Sparse Group Lasso by monotone FISTA.

    Stops when the KKT residual drops to ``opts.tol`` or the objective
    decreases by less than ``opts.rel_obj_tol`` (relative) over
    ``opts.check_every`` iterations. A fit that hits ``max_iter`` first is
    returned with ``diag.converged = False``.
    """
    opts = opts or SolverOptions()
    X = _as_matrix(design)
    y = np.asarray(y, dtype=float)
    if X.shape[0] != len(y):
        raise ValueError(f"design has {X.shape[0]} rows but y has {len(y)} entries")
    g = _Groups(_groups_of(design, groups))
    Xc, yc, x_mean, y_mean = _center(X, y)
    n = len(yc)
    lam, alpha = hyper.lam, hyper.alpha

    b = np.zeros(Xc.shape[1]) if init is None else np.array(init, dtype=float)
    r_b = Xc @ b - yc
    obj = 0.5 * float(r_b @ r_b) / n + _penalty(b, lam, alpha, g)
    kkt = _kkt(b, Xc.T @ r_b / n, lam, alpha, g)
    converged = kkt <= opts.tol
    L = max(_power_iteration(Xc) / n, 1e-12)
    trace = [obj] if opts.debug else []
    z, r_z, t = b, r_b, 1.0
    obj_checked = obj
    it = 0
    while not converged and it < opts.max_iter:
        it += 1
        grad_z = Xc.T @ r_z / n
        while True:
            cand = _prox(z - grad_z / L, 1.0 / L, lam, alpha, g)
            d = cand - z
            u = Xc @ d
            if float(u @ u) / n <= L * float(d @ d) * (1 + 1e-10):
                break
            L *= 2.0
        r_c = r_z + u
        obj_c = 0.5 * float(r_c @ r_c) / n + _penalty(cand, lam, alpha, g)
        if obj_c > obj:
            if z is b:
                # a proximal step from b cannot raise the objective beyond round-off
                cand, r_c, obj_c = b, r_b, obj
            else:
                z, r_z, t = b, r_b, 1.0
                continue
        t_next = 0.5 * (1 + np.sqrt(1 + 4 * t * t))
        mom = (t - 1) / t_next
        z = cand + mom * (cand - b)
        r_z = r_c + mom * (r_c - r_b)
        if mom == 0:
            z = cand
        t = t_next
        b, r_b, obj = cand, r_c, obj_c
        if opts.debug:
            if obj > trace[-1]:
                raise AssertionError("SGL objective increased")
            trace.append(obj)
        if it % opts.check_every == 0:
            kkt = _kkt(b, Xc.T @ r_b / n, lam, alpha, g)
            stalled = (obj_checked - obj) <= opts.rel_obj_tol * max(abs(obj), 1e-300)
            converged = kkt <= opts.tol or stalled
            obj_checked = obj
    if not converged:
        kkt = _kkt(b, Xc.T @ r_b / n, lam, alpha, g)
        converged = kkt <= opts.tol
        if not converged:
            logger.warning("SGL did not converge in %d iterations (KKT residual %.3g)", it, kkt)
    intercept = y_mean - float(x_mean @ b)
    return SglModel(intercept, b, hyper, FitDiagnostics(it, obj, kkt, converged, trace))


def predict(model: SglModel, design) -> np.ndarray:
    X = _as_matrix(design)
    if X.shape[1] != len(model.coeffs):
        raise ValueError(f"design has {X.shape[1]} columns, model has {len(model.coeffs)} coefficients")
    return model.intercept + X @ model.coeffs


def kkt_residual(model: SglModel, design, y, hyper: HyperParams | None = None, groups=None) -> float:
    """First-order optimality residual; zero exactly at a minimizer."""
    hyper = hyper or model.hyper
    X = _as_matrix(design)
    Xc, yc, _, _ = _center(X, np.asarray(y, float))
    grad = Xc.T @ (Xc @ model.coeffs - yc) / len(yc)
    g = _Groups(_groups_of(design, groups))
    return _kkt(np.asarray(model.coeffs, float), grad, hyper.lam, hyper.alpha, g)
