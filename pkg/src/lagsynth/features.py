"""Spectral feature extraction and distributed-lag design construction.

The pipeline runs: multichannel signal -> Morlet relative power ->
(optional) trial-average removal -> anti-aliased resampling to the fMRI
repetition time -> per-run standardization -> lag stacking.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Sequence

import numpy as np
from scipy import signal as sps

__all__ = [
    "SpectralFeatureTensor",
    "TrialParadigm",
    "LaggedDesign",
    "morlet_kernel",
    "morlet_relative_power",
    "remove_trial_average",
    "resample_to_tr",
    "resample_filter",
    "standardize_runs",
    "build_lagged_design",
    "align_target",
]

FWHM_TO_SIGMA = 1.0 / np.sqrt(8.0 * np.log(2.0))


@dataclass(frozen=True)
class SpectralFeatureTensor:
    """Time x channel x frequency feature tensor.

    ``relative`` is True while ``data`` still holds relative power, i.e.
    every (sample, channel) spectrum sums to one.
    """

    data: np.ndarray
    sample_rate: float
    channel_labels: list[str]
    freqs: list[float]
    run_boundaries: list[int] = field(default_factory=lambda: [0])
    relative: bool = False

    def __post_init__(self):
        data = np.asarray(self.data, dtype=float)
        object.__setattr__(self, "data", data)
        if data.ndim != 3 or min(data.shape) == 0:
            raise ValueError(f"feature tensor must be non-empty T x C x F, got shape {data.shape}")
        T, C, F = data.shape
        if len(self.channel_labels) != C:
            raise ValueError(f"{len(self.channel_labels)} channel labels for {C} channels")
        if len(self.freqs) != F:
            raise ValueError(f"{len(self.freqs)} frequencies for {F} frequency bins")
        rb = list(self.run_boundaries)
        if not rb or rb[0] != 0 or any(b <= a for a, b in zip(rb, rb[1:])) or rb[-1] >= T:
            raise ValueError(f"run boundaries must start at 0 and be strictly increasing below T, got {rb}")
        object.__setattr__(self, "run_boundaries", [int(b) for b in rb])
        object.__setattr__(self, "channel_labels", [str(c) for c in self.channel_labels])
        if self.sample_rate <= 0:
            raise ValueError("sample_rate must be positive")

    @property
    def shape(self):
        return self.data.shape

    @property
    def n_samples(self) -> int:
        return self.data.shape[0]

    def run_slices(self) -> list[slice]:
        edges = self.run_boundaries + [self.n_samples]
        return [slice(a, b) for a, b in zip(edges[:-1], edges[1:])]

    def channel_index(self, label: str) -> int:
        return self.channel_labels.index(label)

    def with_data(self, data, **changes) -> "SpectralFeatureTensor":
        return replace(self, data=data, **changes)


@dataclass(frozen=True)
class TrialParadigm:
    """Trial onsets (seconds from the start of the recording) and sides."""

    onsets: list[tuple[float, str]]
    trial_window: tuple[float, float] = (5.0, 5.0)

    def __post_init__(self):
        times = [float(t) for t, _ in self.onsets]
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ValueError("trial onsets must be strictly increasing")
        for _, side in self.onsets:
            if side not in ("left", "right"):
                raise ValueError(f"trial side must be 'left' or 'right', got {side!r}")
        pre, post = self.trial_window
        if pre < 0 or post < 0 or pre + post <= 0:
            raise ValueError("trial window must have positive total length")


@dataclass(frozen=True)
class LaggedDesign:
    """Lag-stacked design matrix.

    Column ``(c * F + f) * M + n`` holds channel ``c``, frequency ``f`` at
    lag ``n``; row ``i`` corresponds to tensor sample ``i + M - 1``.
    """

    matrix: np.ndarray
    n_lags: int
    n_channels: int
    n_freqs: int

    @property
    def group_index(self) -> np.ndarray:
        return np.repeat(np.arange(self.n_channels), self.n_freqs * self.n_lags)

    @property
    def column_meta(self) -> list[tuple[int, int, int]]:
        return [
            (c, f, n)
            for c in range(self.n_channels)
            for f in range(self.n_freqs)
            for n in range(self.n_lags)
        ]

    @property
    def shape(self):
        return self.matrix.shape

    def take_rows(self, rows) -> "LaggedDesign":
        return replace(self, matrix=self.matrix[np.asarray(rows, dtype=int)])


def _check_finite(x, what):
    if not np.all(np.isfinite(x)):
        raise ValueError(f"{what} contains non-finite values")


def morlet_kernel(freq, fs, central_freq=1.0, time_res=3.0, n_sigma=5.0):
    """Complex Morlet wavelet at ``freq`` Hz sampled at ``fs``.

    The mother wavelet has FWHM ``time_res`` seconds at ``central_freq``;
    the temporal width scales as ``central_freq / freq``. Scaled so that a
    cosine of amplitude A at ``freq`` gives coefficient magnitude A.
    """
    sigma_t = time_res * FWHM_TO_SIGMA * central_freq / freq
    half = int(np.ceil(n_sigma * sigma_t * fs))
    t = np.arange(-half, half + 1) / fs
    envelope = np.exp(-0.5 * (t / sigma_t) ** 2)
    return envelope * np.exp(2j * np.pi * freq * t) * (2.0 / envelope.sum())


def morlet_relative_power(
    x,
    fs,
    freqs=tuple(range(1, 41)),
    central_freq=1.0,
    time_res=3.0,
    channel_labels=None,
    run_boundaries=None,
) -> SpectralFeatureTensor:
    """Relative wavelet power of an ``N x C`` signal.

    Squared magnitudes of the Morlet coefficients are divided by their sum
    over ``freqs`` at each sample. A sample with zero total power maps to
    the uniform spectrum.
    """
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    _check_finite(x, "signal")
    freqs = [float(f) for f in freqs]
    if fs <= 2 * max(freqs):
        raise ValueError(f"sampling rate {fs} Hz too low for {max(freqs)} Hz (need fs > 2*max(freqs))")
    N, C = x.shape
    power = np.empty((N, C, len(freqs)))
    for j, f in enumerate(freqs):
        k = morlet_kernel(f, fs, central_freq, time_res)
        w = sps.fftconvolve(x, k[:, None], mode="same", axes=0)
        power[:, :, j] = w.real**2 + w.imag**2
    total = power.sum(axis=2, keepdims=True)
    zero = total[..., 0] == 0
    with np.errstate(invalid="ignore", divide="ignore"):
        rel = power / total
    rel[zero] = 1.0 / len(freqs)
    if channel_labels is None:
        channel_labels = [f"ch{i}" for i in range(C)]
    return SpectralFeatureTensor(
        rel,
        float(fs),
        list(channel_labels),
        [int(f) if float(f).is_integer() else f for f in freqs],
        list(run_boundaries) if run_boundaries is not None else [0],
        relative=True,
    )


def _trial_windows(tensor: SpectralFeatureTensor, paradigm: TrialParadigm):
    pre, post = paradigm.trial_window
    length = int(round((pre + post) * tensor.sample_rate))
    runs = tensor.run_slices()
    windows = []
    for onset, side in paradigm.onsets:
        start = int(round((onset - pre) * tensor.sample_rate))
        stop = start + length
        run = next((i for i, r in enumerate(runs) if r.start <= start < r.stop), None)
        if run is None or stop > runs[run].stop:
            raise ValueError(
                f"trial window [{start}, {stop}) for onset {onset}s is not inside a single run"
            )
        windows.append((run, side, start, stop))
    ordered = sorted(windows, key=lambda w: w[2])
    for a, b in zip(ordered, ordered[1:]):
        if b[2] < a[3]:
            raise ValueError(f"trial windows overlap at samples {b[2]}..{a[3]}")
    return windows


def remove_trial_average(tensor: SpectralFeatureTensor, paradigm: TrialParadigm) -> SpectralFeatureTensor:
    """Subtract the per-run, per-side average trial response inside each trial window."""
    windows = _trial_windows(tensor, paradigm)
    out = tensor.data.copy()
    keys = sorted({(run, side) for run, side, _, _ in windows})
    for key in keys:
        members = [(a, b) for run, side, a, b in windows if (run, side) == key]
        stereotype = np.mean([tensor.data[a:b] for a, b in members], axis=0)
        for a, b in members:
            out[a:b] -= stereotype
    return tensor.with_data(out, relative=False)


def _rational_ratio(fs_in, tr):
    ratio = 1 / (Fraction(tr).limit_denominator(10**6) * Fraction(fs_in).limit_denominator(10**6))
    return ratio.numerator, ratio.denominator


def resample_filter(up, down, half_len_factor=10, beta=5.0):
    """Anti-aliasing FIR taps for rational resampling by ``up/down``.

    Cutoff sits at the lower of the input and output Nyquist rates; the
    taps carry gain ``up`` to compensate for zero-insertion.
    """
    max_rate = max(up, down)
    half_len = half_len_factor * max_rate
    taps = sps.firwin(2 * half_len + 1, 1.0 / max_rate, window=("kaiser", beta))
    return taps * up


def resample_to_tr(tensor: SpectralFeatureTensor, tr: float) -> SpectralFeatureTensor:
    """Low-pass filter and resample every run to one sample per ``tr`` seconds.

    Each run is resampled separately and has output length
    ``floor(n_run * fs_out / fs_in)``.
    """
    if tr <= 1.0 / tensor.sample_rate:
        raise ValueError(f"tr={tr}s is not longer than the input sample interval")
    up, down = _rational_ratio(tensor.sample_rate, tr)
    taps = resample_filter(up, down)
    pieces, bounds, start = [], [], 0
    for run in tensor.run_slices():
        seg = tensor.data[run]
        n_out = (seg.shape[0] * up) // down
        if n_out == 0:
            raise ValueError("run too short to yield any output sample")
        y = sps.resample_poly(seg, up, down, axis=0, window=taps, padtype="line")
        pieces.append(y[:n_out])
        bounds.append(start)
        start += n_out
    return tensor.with_data(
        np.concatenate(pieces, axis=0),
        sample_rate=1.0 / tr,
        run_boundaries=bounds,
        relative=False,
    )


def standardize_runs(tensor: SpectralFeatureTensor) -> SpectralFeatureTensor:
    """Z-score every (channel, frequency) series within each run.

    Uses the population standard deviation; constant series become zeros.
    """
    out = np.empty_like(tensor.data)
    for run in tensor.run_slices():
        seg = tensor.data[run]
        if seg.shape[0] < 2:
            raise ValueError("each run needs at least 2 samples to standardize")
        mu = seg.mean(axis=0)
        sd = seg.std(axis=0)
        centered = seg - mu
        safe = np.where(sd > 0, sd, 1.0)
        out[run] = np.where(sd > 0, centered / safe, 0.0)
    return tensor.with_data(out, relative=False)


def build_lagged_design(tensor: SpectralFeatureTensor | np.ndarray, n_lags: int) -> LaggedDesign:
    """Stack lags 0..n_lags-1 of every regressor.

    The first ``n_lags - 1`` samples lack a full lag history and are
    dropped; use :func:`align_target` to trim the target the same way.
    """
    data = tensor.data if isinstance(tensor, SpectralFeatureTensor) else np.asarray(tensor, float)
    if n_lags < 1:
        raise ValueError("n_lags must be >= 1")
    T, C, F = data.shape
    if n_lags >= T:
        raise ValueError(f"n_lags={n_lags} must be smaller than the number of samples {T}")
    rows = T - n_lags + 1
    flat = data.reshape(T, C * F)
    stacked = np.empty((rows, C * F, n_lags))
    for n in range(n_lags):
        stacked[:, :, n] = flat[n_lags - 1 - n : T - n]
    return LaggedDesign(stacked.reshape(rows, C * F * n_lags), n_lags, C, F)


def align_target(y: Sequence[float], n_lags: int) -> np.ndarray:
    """Trim a target series to the rows kept by :func:`build_lagged_design`."""
    y = np.asarray(y, dtype=float)
    return y[n_lags - 1 :]
