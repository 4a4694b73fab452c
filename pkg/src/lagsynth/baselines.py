"""Reference predictors: sensorimotor-rhythm average (SMR) and massive univariate correlation (MUC)."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .features import LaggedDesign, SpectralFeatureTensor

__all__ = ["SMR_CHANNELS", "SMR_BAND", "SMR_DELAY_S", "smr_shift", "smr_predict", "MucModel", "muc_fit", "muc_predict"]

SMR_CHANNELS = ("C3", "C4")
SMR_BAND = (8.0, 30.0)
SMR_DELAY_S = 6.3


def smr_shift(tr: float, delay: float = SMR_DELAY_S) -> int:
    return int(round(delay / tr))


def smr_predict(tensor: SpectralFeatureTensor, tr: float, delay: float = SMR_DELAY_S) -> np.ndarray:
    """Mean C3/C4 power over 8-30 Hz, delayed by ``round(delay / tr)`` samples.

    The output keeps the raw power sign (band power drops during activation,
    so the correlation with BOLD is expected to be negative). The first
    ``shift`` samples have no history and are NaN.
    """
    missing = [c for c in SMR_CHANNELS if c not in tensor.channel_labels]
    if missing:
        raise ValueError(f"SMR needs channels {SMR_CHANNELS}; missing: {', '.join(missing)}")
    freqs = np.asarray(tensor.freqs, dtype=float)
    band = (freqs >= SMR_BAND[0]) & (freqs <= SMR_BAND[1])
    if not band.any():
        raise ValueError(f"no frequency bins inside {SMR_BAND[0]}-{SMR_BAND[1]} Hz")
    ch = [tensor.channel_index(c) for c in SMR_CHANNELS]
    series = tensor.data[:, ch][:, :, band].mean(axis=(1, 2))
    shift = smr_shift(tr, delay)
    out = np.full(len(series), np.nan)
    if shift < len(series):
        out[shift:] = series[: len(series) - shift]
    return out


@dataclass
class MucModel:
    """Per-regressor correlations and the univariate fit on the best one."""

    corr: np.ndarray
    selected: int
    slope: float
    offset: float

    def corr_tensor(self, n_channels, n_freqs, n_lags):
        return self.corr.reshape(n_channels, n_freqs, n_lags)

    def selected_cfm(self, n_freqs, n_lags) -> tuple[int, int, int]:
        c, rest = divmod(self.selected, n_freqs * n_lags)
        f, m = divmod(rest, n_lags)
        return c, f, m


def _corr_columns(X, y):
    Xc = X - X.mean(axis=0)
    yc = y - y.mean()
    sx = np.sqrt((Xc * Xc).sum(axis=0))
    sy = np.sqrt(yc @ yc)
    with np.errstate(invalid="ignore", divide="ignore"):
        r = (Xc.T @ yc) / (sx * sy)
    r = np.where((sx > 0) & (sy > 0), r, 0.0)
    return np.clip(r, -1.0, 1.0)


def muc_fit(design, y) -> MucModel:
    """Correlate every column with ``y``; keep the max-|r| column (lowest index on ties)."""
    X = design.matrix if isinstance(design, LaggedDesign) else np.asarray(design, float)
    y = np.asarray(y, dtype=float)
    if X.shape[0] != len(y):
        raise ValueError("design rows and target length differ")
    corr = _corr_columns(X, y)
    sel = int(np.argmax(np.abs(corr)))
    x = X[:, sel]
    xc = x - x.mean()
    sxx = float(xc @ xc)
    slope = float(xc @ (y - y.mean())) / sxx if sxx > 0 else 0.0
    offset = float(y.mean() - slope * x.mean())
    return MucModel(corr, sel, slope, offset)


def muc_predict(model: MucModel, design) -> np.ndarray:
    X = design.matrix if isinstance(design, LaggedDesign) else np.asarray(design, float)
    return model.offset + model.slope * X[:, model.selected]
