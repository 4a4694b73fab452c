"""Run configuration: a single JSON file, validated before any computation.

Schema (all sections optional except where noted)::

    {
      "dataset":  "path/to/dataset_dir",          # fit, nulltest
      "datasets": ["dir1", "dir2", ...],          # baseline cohort
      "scheme":   "inter" | "intra",
      "n_lags":   int | null,                     # null: taken from the dataset manifest
      "standardize": true,
      "seed": 0,
      "output": "out_dir",
      "plots": true,
      "solver": {"max_iter": 5000, "tol": 1e-6, "cv_tol": 1e-5},
      "search": {"budget": 40, "n_init": 8, "kappa": 0.1, "folds": 3,
                 "lambda_floor_ratio": 1e-4, "n_candidates": 1024,
                 "gp_restarts": 2, "fixed": null | {"lambda": x, "alpha": a}},
      "surrogates": {"n": 100, "base_seed": 0, "adf_threshold": 1e-5,
                     "adf_max_lag": 12, "max_iter": 200, "spectrum_tol": 1e-4},
      "baseline": {"q": 0.05}
    }

Relative paths are resolved against the directory holding the config file.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

from .cv import SCHEMES, NestedSettings
from .sgl import HyperParams, SolverOptions

__all__ = [
    "ConfigError",
    "SolverSection",
    "SearchSection",
    "SurrogateSection",
    "BaselineSection",
    "RunConfig",
    "load_config",
    "config_hash",
]


class ConfigError(ValueError):
    """Invalid configuration (exit code 2 at the command line)."""


def _check_keys(cls, d, where):
    if not isinstance(d, dict):
        raise ConfigError(f"{where}: expected an object, got {type(d).__name__}")
    known = {f.name for f in fields(cls) if f.name != "base_dir"}
    unknown = sorted(set(d) - known)
    if unknown:
        raise ConfigError(f"{where}: unknown key(s) {', '.join(unknown)}; allowed: {', '.join(sorted(known))}")


def _typed(value, kinds, where, name):
    if isinstance(value, bool) and bool not in kinds:
        raise ConfigError(f"{where}.{name}: expected {kinds[0].__name__}, got bool")
    if not isinstance(value, kinds):
        raise ConfigError(f"{where}.{name}: expected {kinds[0].__name__}, got {type(value).__name__}")
    return value


def _positive_int(v, where, name, minimum=1):
    _typed(v, (int,), where, name)
    if v < minimum:
        raise ConfigError(f"{where}.{name} must be >= {minimum}, got {v}")
    return v


def _positive(v, where, name):
    _typed(v, (float, int), where, name)
    if not v > 0:
        raise ConfigError(f"{where}.{name} must be > 0, got {v}")
    return float(v)


@dataclass(frozen=True)
class SolverSection:
    max_iter: int = 5000
    tol: float = 1e-6
    cv_tol: float = 1e-5

    def validate(self, where="solver"):
        _positive_int(self.max_iter, where, "max_iter")
        _positive(self.tol, where, "tol")
        _positive(self.cv_tol, where, "cv_tol")


@dataclass(frozen=True)
class SearchSection:
    budget: int = 40
    n_init: int = 8
    kappa: float = 0.1
    folds: int = 3
    lambda_floor_ratio: float = 1e-4
    n_candidates: int = 1024
    gp_restarts: int = 2
    fixed: dict | None = None

    def validate(self, where="search"):
        _positive_int(self.n_init, where, "n_init")
        _positive_int(self.budget, where, "budget")
        if self.budget < self.n_init:
            raise ConfigError(f"{where}.budget ({self.budget}) must be >= n_init ({self.n_init})")
        _typed(self.kappa, (float, int), where, "kappa")
        if self.kappa < 0:
            raise ConfigError(f"{where}.kappa must be >= 0")
        _positive_int(self.folds, where, "folds", 2)
        r = _positive(self.lambda_floor_ratio, where, "lambda_floor_ratio")
        if r >= 1:
            raise ConfigError(f"{where}.lambda_floor_ratio must be < 1")
        _positive_int(self.n_candidates, where, "n_candidates")
        _positive_int(self.gp_restarts, where, "gp_restarts", 0)
        if self.fixed is not None:
            if not isinstance(self.fixed, dict) or set(self.fixed) != {"lambda", "alpha"}:
                raise ConfigError(f"{where}.fixed must be null or {{\"lambda\": x, \"alpha\": a}}")
            try:
                HyperParams(float(self.fixed["lambda"]), float(self.fixed["alpha"]))
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"{where}.fixed: {exc}") from None


@dataclass(frozen=True)
class SurrogateSection:
    n: int = 100
    base_seed: int = 0
    adf_threshold: float = 1e-5
    adf_max_lag: int = 12
    max_iter: int = 200
    spectrum_tol: float = 1e-4

    def validate(self, where="surrogates"):
        _typed(self.n, (int,), where, "n")
        if self.n < 1:
            raise ConfigError(f"{where}.n must be >= 1 (got {self.n}); a null test needs surrogates")
        _positive_int(self.base_seed, where, "base_seed", 0)
        _positive(self.adf_threshold, where, "adf_threshold")
        _positive_int(self.adf_max_lag, where, "adf_max_lag", 0)
        _positive_int(self.max_iter, where, "max_iter")
        _positive(self.spectrum_tol, where, "spectrum_tol")


@dataclass(frozen=True)
class BaselineSection:
    q: float = 0.05

    def validate(self, where="baseline"):
        q = _positive(self.q, where, "q")
        if q >= 1:
            raise ConfigError(f"{where}.q must be in (0, 1)")


_SECTIONS = {"solver": SolverSection, "search": SearchSection, "surrogates": SurrogateSection, "baseline": BaselineSection}


@dataclass(frozen=True)
class RunConfig:
    dataset: str | None = None
    datasets: list[str] | None = None
    scheme: str = "inter"
    n_lags: int | None = None
    standardize: bool = True
    seed: int = 0
    output: str | None = None
    plots: bool = True
    solver: SolverSection = field(default_factory=SolverSection)
    search: SearchSection = field(default_factory=SearchSection)
    surrogates: SurrogateSection = field(default_factory=SurrogateSection)
    baseline: BaselineSection = field(default_factory=BaselineSection)
    base_dir: str = field(default=".", compare=False, repr=False)

    @classmethod
    def from_dict(cls, d: dict, base_dir=".") -> "RunConfig":
        d = dict(d)
        _check_keys(cls, d, "config")
        kw = {}
        for name, sec_cls in _SECTIONS.items():
            if name in d:
                sec = d.pop(name)
                _check_keys(sec_cls, sec, name)
                kw[name] = sec_cls(**sec)
        cfg = cls(**d, **kw, base_dir=str(base_dir))
        cfg.validate()
        return cfg

    def validate(self):
        if self.scheme not in SCHEMES:
            raise ConfigError(f"config.scheme must be one of {', '.join(SCHEMES)}, got {self.scheme!r}")
        if self.dataset is not None:
            _typed(self.dataset, (str,), "config", "dataset")
        if self.datasets is not None:
            if not isinstance(self.datasets, list) or not all(isinstance(p, str) for p in self.datasets):
                raise ConfigError("config.datasets must be a list of paths")
        if self.n_lags is not None:
            _positive_int(self.n_lags, "config", "n_lags")
        _typed(self.standardize, (bool,), "config", "standardize")
        _typed(self.plots, (bool,), "config", "plots")
        _positive_int(self.seed, "config", "seed", 0)
        if self.output is not None:
            _typed(self.output, (str,), "config", "output")
        for name in _SECTIONS:
            getattr(self, name).validate()
        return self

    def with_overrides(self, **kw) -> "RunConfig":
        """Apply command-line overrides (``None`` values are ignored)."""
        sur = kw.pop("surrogates", None)
        changes = {k: v for k, v in kw.items() if v is not None}
        cfg = replace(self, **changes)
        if sur is not None:
            cfg = replace(cfg, surrogates=replace(cfg.surrogates, n=sur))
        return cfg.validate()

    def resolve(self, path) -> Path:
        p = Path(path)
        return p if p.is_absolute() else Path(self.base_dir) / p

    def to_dict(self) -> dict:
        d = asdict(self)
        d.pop("base_dir")
        return d

    def nested_settings(self) -> NestedSettings:
        s, o = self.search, self.solver
        fixed = HyperParams(float(s.fixed["lambda"]), float(s.fixed["alpha"])) if s.fixed else None
        return NestedSettings(
            k=s.folds,
            budget=s.budget,
            n_init=s.n_init,
            kappa=float(s.kappa),
            lam_floor_ratio=float(s.lambda_floor_ratio),
            seed=self.seed,
            cv_solver=SolverOptions(max_iter=o.max_iter, tol=float(o.cv_tol)),
            final_solver=SolverOptions(max_iter=o.max_iter, tol=float(o.tol)),
            fixed_hyper=fixed,
            n_candidates=s.n_candidates,
            gp_restarts=s.gp_restarts,
        )

    def iaaft_opts(self) -> dict:
        return {"max_iter": self.surrogates.max_iter, "spectrum_tol": float(self.surrogates.spectrum_tol)}


def config_hash(cfg: RunConfig | dict) -> str:
    """SHA-256 of the canonical JSON form (sorted keys, no whitespace)."""
    d = cfg.to_dict() if isinstance(cfg, RunConfig) else cfg
    blob = json.dumps(d, sort_keys=True, separators=(",", ":"), allow_nan=True)
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


def load_config(path) -> RunConfig:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"config file not found: {path}")
    try:
        raw = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    return RunConfig.from_dict(raw, base_dir=path.parent)
