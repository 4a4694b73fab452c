"""lagsynth: sparse-group-lasso prediction of fMRI signals from lagged EEG spectral features."""

__version__ = "0.1.0"

from .features import (  # noqa: E402
    LaggedDesign,
    SpectralFeatureTensor,
    TrialParadigm,
    align_target,
    build_lagged_design,
    morlet_relative_power,
    remove_trial_average,
    resample_to_tr,
    standardize_runs,
)
from .sgl import HyperParams, SglModel, SolverOptions, fit_sgl, lambda_max, predict, sgl_prox  # noqa: E402
from .cv import NestedSettings, block_kfold, evaluate, make_split, nested_fit  # noqa: E402
from .synth import SyntheticSpec, double_gamma_hrf, generate, scenario  # noqa: E402

__all__ = [
    "__version__",
    "LaggedDesign",
    "SpectralFeatureTensor",
    "TrialParadigm",
    "align_target",
    "build_lagged_design",
    "morlet_relative_power",
    "remove_trial_average",
    "resample_to_tr",
    "standardize_runs",
    "HyperParams",
    "SglModel",
    "SolverOptions",
    "fit_sgl",
    "lambda_max",
    "predict",
    "sgl_prox",
    "NestedSettings",
    "block_kfold",
    "evaluate",
    "make_split",
    "nested_fit",
    "SyntheticSpec",
    "double_gamma_hrf",
    "generate",
    "scenario",
]
