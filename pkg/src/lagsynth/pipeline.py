"""Dataset-level runs shared by the CLI and the acceptance checks."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .baselines import muc_fit, muc_predict, smr_predict
from .bayesopt import OptimizationTrace
from .cv import NestedSettings, Score, SplitPlan, evaluate, guard_seams, make_split, nested_fit
from .features import LaggedDesign, SpectralFeatureTensor, align_target, build_lagged_design, standardize_runs
from .sgl import SglModel, predict
from .stats import bh_fdr, pearson, wilcoxon_signed_rank
from .surrogates import NullDistribution, combine_null, null_distribution

__all__ = [
    "Prepared",
    "prepare",
    "plan_for",
    "ParcellationResult",
    "SchemeResult",
    "run_scheme",
    "run_baselines",
    "run_nulltest",
    "compare_cohort",
]

logger = logging.getLogger(__name__)


@dataclass
class Prepared:
    """Lag-trimmed designs and targets for two sessions, stacked row-wise."""

    design: LaggedDesign
    y: np.ndarray
    n1: int
    n2: int
    tensors: list[SpectralFeatureTensor]
    n_lags: int

    def rows(self, idx) -> tuple[LaggedDesign, np.ndarray]:
        return self.design.take_rows(idx), self.y[idx]


def prepare(tensors, targets, n_lags: int, standardize: bool = True) -> Prepared:
    """Standardize each session per run, then lag each session separately."""
    if len(tensors) != 2 or len(targets) != 2:
        raise ValueError("expected exactly two sessions")
    designs, ys, kept = [], [], []
    for tensor, y in zip(tensors, targets):
        y = np.asarray(y, dtype=float)
        if len(y) != tensor.n_samples:
            raise ValueError(f"target length {len(y)} != feature samples {tensor.n_samples}")
        if standardize:
            tensor = standardize_runs(tensor)
        kept.append(tensor)
        designs.append(build_lagged_design(tensor, n_lags))
        ys.append(align_target(y, n_lags))
    d0, d1 = designs
    if d0.shape[1] != d1.shape[1]:
        raise ValueError("sessions have different feature dimensions")
    stacked = LaggedDesign(np.vstack([d0.matrix, d1.matrix]), n_lags, d0.n_channels, d0.n_freqs)
    return Prepared(stacked, np.concatenate(ys), len(ys[0]), len(ys[1]), kept, n_lags)


def plan_for(prep: Prepared, scheme: str) -> SplitPlan:
    return guard_seams(make_split(prep.n1, prep.n2, scheme), prep.n_lags)


@dataclass
class ParcellationResult:
    score: Score
    model: SglModel
    trace: OptimizationTrace | None
    prediction: np.ndarray
    truth: np.ndarray


@dataclass
class SchemeResult:
    scheme: str
    parcellations: list[ParcellationResult] = field(default_factory=list)

    @property
    def mean_r(self) -> float:
        return float(np.mean([p.score.r for p in self.parcellations]))

    @property
    def mean_mse(self) -> float:
        return float(np.mean([p.score.mse for p in self.parcellations]))


def run_scheme(prep: Prepared, scheme: str, settings: NestedSettings | None = None, fit=nested_fit) -> SchemeResult:
    """Nested fit on each training parcellation, scored on its test set."""
    settings = settings or NestedSettings()
    plan = plan_for(prep, scheme)
    out = SchemeResult(scheme)
    for part in plan.parcellations:
        Xtr, ytr = prep.rows(part.train)
        Xte, yte = prep.rows(part.test)
        model, trace = fit(Xtr, ytr, settings)
        score = evaluate(model, Xte, yte)
        out.parcellations.append(ParcellationResult(score, model, trace, predict(model, Xte), yte))
    return out


def run_baselines(prep: Prepared, scheme: str, tr: float) -> dict:
    """SMR and MUC test correlations per parcellation and averaged."""
    plan = plan_for(prep, scheme)
    smr_rows = []
    for tensor in prep.tensors:
        smr_rows.append(align_target(smr_predict(tensor, tr), prep.n_lags))
    smr_all = np.concatenate(smr_rows)
    smr_r, muc_r = [], []
    for part in plan.parcellations:
        Xtr, ytr = prep.rows(part.train)
        Xte, yte = prep.rows(part.test)
        muc = muc_fit(Xtr, ytr)
        muc_r.append(pearson(muc_predict(muc, Xte), yte))
        pred = smr_all[part.test]
        ok = np.isfinite(pred)
        smr_r.append(pearson(pred[ok], yte[ok]))
    return {
        "smr_r": smr_r,
        "smr_mean_r": float(np.mean(smr_r)),
        "smr_mean_abs_r": float(np.mean(np.abs(smr_r))),
        "muc_r": muc_r,
        "muc_mean_r": float(np.mean(muc_r)),
    }


def run_nulltest(
    prep: Prepared,
    scheme: str,
    settings: NestedSettings | None = None,
    n_surrogates: int = 100,
    base_seed: int = 0,
    observed: list[float] | None = None,
    **kw,
) -> tuple[NullDistribution, list[NullDistribution]]:
    """IAAFT null per parcellation, combined by averaging over parcellations.

    ``observed`` may carry the per-parcellation test r of an earlier fit with
    the same settings; otherwise it is recomputed. Extra keywords go to
    :func:`null_distribution`.
    """
    settings = settings or NestedSettings()
    plan = plan_for(prep, scheme)
    parts = []
    for j, part in enumerate(plan.parcellations):
        Xtr, ytr = prep.rows(part.train)
        Xte, yte = prep.rows(part.test)
        obs = None if observed is None else observed[j]
        parts.append(null_distribution(Xtr, ytr, Xte, yte, settings, n_surrogates, base_seed, obs, **kw))
    return combine_null(parts), parts


def compare_cohort(sgl_r, others: dict, q: float = 0.05) -> dict:
    """Paired Wilcoxon tests of SGL against each baseline, BH-corrected.

    ``others`` maps a baseline name to its per-dataset values (already in
    the orientation to compare, e.g. |r| for SMR).
    """
    names = list(others)
    tests = [wilcoxon_signed_rank(sgl_r, others[n]) for n in names]
    reject, adj = bh_fdr([t.pvalue for t in tests], q)
    out = {}
    for n, t, rj, pa in zip(names, tests, reject, adj):
        diff = np.asarray(sgl_r, dtype=float) - np.asarray(others[n], dtype=float)
        out[n] = {
            "statistic": float(t.statistic),
            "p_value": float(t.pvalue),
            "p_bh": float(pa),
            "reject": bool(rj),
            "method": t.method,
            "n": int(t.n),
            "median_difference": float(np.median(diff)),
            "sgl_better": bool(np.median(diff) > 0),
        }
    return out
