"""Train/test splitting, blocked cross-validation, and nested hyperparameter search."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .bayesopt import OptimizationTrace, SearchSpace, gp_ucb_optimize
from .features import LaggedDesign
from .sgl import HyperParams, SglModel, SolverOptions, fit_sgl, lambda_max, predict
from .stats import pearson

__all__ = [
    "Parcellation",
    "SplitPlan",
    "make_split",
    "guard_seams",
    "FoldSet",
    "block_kfold",
    "NestedSettings",
    "nested_fit",
    "Score",
    "evaluate",
]

SCHEMES = ("inter", "intra")


@dataclass
class Parcellation:
    train: np.ndarray
    test: np.ndarray


@dataclass
class SplitPlan:
    """Train/test parcellations over the concatenation ``[session 1, session 2]``."""

    scheme: str
    parcellations: list[Parcellation]
    session_ids: np.ndarray

    @property
    def n_samples(self):
        return len(self.session_ids)


def make_split(n1: int, n2: int, scheme: str) -> SplitPlan:
    """Two 50/50 parcellations of two sessions.

    ``inter`` trains on one session and tests on the other. ``intra`` trains
    on the first half of one session joined with the second half of the
    other; halves split at ``floor(n/2)``.
    """
    if scheme not in SCHEMES:
        raise ValueError(f"unknown scheme {scheme!r}; expected one of {SCHEMES}")
    if n1 < 2 or n2 < 2:
        raise ValueError("each session needs at least 2 samples")
    s1 = np.arange(n1)
    s2 = np.arange(n1, n1 + n2)
    if scheme == "inter":
        parts = [Parcellation(s1, s2), Parcellation(s2, s1)]
    else:
        h1, h2 = n1 // 2, n2 // 2
        a = np.concatenate([s1[:h1], s2[h2:]])
        b = np.concatenate([s2[:h2], s1[h1:]])
        parts = [Parcellation(a, b), Parcellation(b, a)]
    session_ids = np.r_[np.zeros(n1, int), np.ones(n2, int)]
    return SplitPlan(scheme, parts, session_ids)


def guard_seams(plan: SplitPlan, n_lags: int) -> SplitPlan:
    """Drop rows whose lag window reaches across a train/test seam.

    Indices are rows of per-session lagged designs. Within a session, the
    ``n_lags - 1`` rows after each change of partition reuse feature samples
    of the preceding block and are removed from whichever set they belong to.
    """
    if n_lags <= 1:
        return plan
    drop = []
    for part in plan.parcellations:
        member = np.full(plan.n_samples, -1)
        member[part.train] = 0
        member[part.test] = 1
        dropped = set()
        for s in np.unique(plan.session_ids):
            idx = np.nonzero(plan.session_ids == s)[0]
            m = member[idx]
            for j in np.nonzero(m[1:] != m[:-1])[0] + 1:
                block = m[j]
                for k in range(j, min(j + n_lags - 1, len(idx))):
                    if m[k] != block:
                        break
                    dropped.add(int(idx[k]))
        drop.append(dropped)
    parts = [
        Parcellation(
            np.array([i for i in p.train if i not in d], dtype=int),
            np.array([i for i in p.test if i not in d], dtype=int),
        )
        for p, d in zip(plan.parcellations, drop)
    ]
    return SplitPlan(plan.scheme, parts, plan.session_ids)


@dataclass
class FoldSet:
    """Contiguous validation blocks over positions ``0..n-1`` of a training set."""

    folds: list[tuple[np.ndarray, np.ndarray]]

    def __iter__(self):
        return iter(self.folds)

    def __len__(self):
        return len(self.folds)


def block_kfold(n: int, k: int = 3) -> FoldSet:
    """Split ``0..n-1`` into ``k`` contiguous validation blocks.

    The first ``n % k`` blocks get one extra sample.
    """
    if k < 2:
        raise ValueError("k must be >= 2")
    if n < k:
        raise ValueError(f"cannot split {n} samples into {k} blocks")
    sizes = np.full(k, n // k)
    sizes[: n % k] += 1
    edges = np.r_[0, np.cumsum(sizes)]
    idx = np.arange(n)
    folds = []
    for a, b in zip(edges[:-1], edges[1:]):
        val = idx[a:b]
        train = np.r_[idx[:a], idx[b:]]
        folds.append((train, val))
    return FoldSet(folds)


@dataclass(frozen=True)
class NestedSettings:
    """Knobs for :func:`nested_fit`."""

    k: int = 3
    budget: int = 40
    n_init: int = 8
    kappa: float = 0.1
    lam_floor_ratio: float = 1e-4
    seed: int = 0
    cv_solver: SolverOptions = field(default_factory=lambda: SolverOptions(tol=1e-5))
    final_solver: SolverOptions = field(default_factory=SolverOptions)
    fixed_hyper: HyperParams | None = None
    n_candidates: int = 1024
    gp_restarts: int = 2


def _mse(a, b):
    d = np.asarray(a) - np.asarray(b)
    return float(d @ d) / len(d)


def nested_fit(design: LaggedDesign, y, settings: NestedSettings | None = None) -> tuple[SglModel, OptimizationTrace | None]:
    """Choose (lambda, alpha) by GP-UCB over block-CV validation MSE, then refit on all rows.

    With ``settings.fixed_hyper`` the search is skipped and the trace is None.
    """
    s = settings or NestedSettings()
    y = np.asarray(y, dtype=float)
    if s.fixed_hyper is not None:
        return fit_sgl(design, y, s.fixed_hyper, s.final_solver), None
    X = design.matrix
    groups = design.group_index
    folds = block_kfold(len(y), s.k)
    lam_hi = lambda_max(design, y, 1.0)
    if lam_hi <= 0:
        lam_hi = 1.0
    space = SearchSpace(lam_hi * s.lam_floor_ratio, lam_hi)
    warm: list[list[tuple[np.ndarray, np.ndarray]]] = [[] for _ in folds]

    def objective(lam, alpha):
        here = space.to_unit(lam, alpha)
        losses = []
        for j, (tr, va) in enumerate(folds):
            init = None
            if warm[j]:
                dists = [np.linalg.norm(u - here) for u, _ in warm[j]]
                init = warm[j][int(np.argmin(dists))][1]
            m = fit_sgl(X[tr], y[tr], HyperParams(lam, alpha), s.cv_solver, groups=groups, init=init)
            warm[j].append((here, m.coeffs))
            losses.append(_mse(predict(m, X[va]), y[va]))
        return float(np.mean(losses))

    trace = gp_ucb_optimize(
        objective,
        space,
        budget=s.budget,
        kappa=s.kappa,
        seed=s.seed,
        n_init=s.n_init,
        n_candidates=s.n_candidates,
        n_restarts=s.gp_restarts,
    )
    model = fit_sgl(design, y, trace.chosen, s.final_solver)
    return model, trace


@dataclass
class Score:
    r: float
    mse: float
    degenerate: bool
    n: int

    def to_dict(self):
        return {"r": self.r, "mse": self.mse, "degenerate": self.degenerate, "n": self.n}


def evaluate(model: SglModel, design, y) -> Score:
    """Pearson r and MSE of the model's predictions on held-out rows."""
    y = np.asarray(y, dtype=float)
    pred = predict(model, design)
    if len(pred) != len(y):
        raise ValueError("prediction and target lengths differ")
    r, degenerate = pearson(pred, y, return_flag=True)
    return Score(r, _mse(pred, y), degenerate, len(y))
