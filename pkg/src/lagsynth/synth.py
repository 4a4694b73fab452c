"""Synthetic paired EEG-feature / BOLD datasets with known coupling.

Each session carries latent band-power series (AR(1) fluctuations plus a
task boxcar for coupled regressors). Observed features are the latents
plus independent noise and, optionally, a session-specific slow drift
projected onto a random channel-frequency pattern (scaled by
``confound_feature_gain``). The target is the latents filtered through the ground-truth lag
coefficients, plus AR(1) noise at the requested SNR and the same drift.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field, replace

import numpy as np
from scipy import stats as sst

from .features import SpectralFeatureTensor, TrialParadigm

__all__ = [
    "CHANNELS_10_20",
    "HrfParams",
    "SyntheticSpec",
    "SyntheticDataset",
    "double_gamma_hrf",
    "pick_channels",
    "default_freqs",
    "hrf_lag_coeffs",
    "generate",
    "scenario",
    "SCENARIOS",
]

# anterior to posterior
CHANNELS_10_20 = [
    "Fp1", "Fp2", "F7", "F3", "Fz", "F4", "F8", "FC5", "FC1", "FC2", "FC6",
    "T7", "C3", "Cz", "C4", "T8", "TP9", "CP5", "CP1", "CP2", "CP6", "TP10",
    "P7", "P3", "Pz", "P4", "P8", "POz", "O1", "Oz", "O2",
]
_PRIORITY = [
    "C3", "C4", "Cz", "CP1", "CP2", "FC1", "FC2", "P3", "P4", "F3", "F4",
    "Pz", "Fz", "CP5", "CP6", "FC5", "FC6", "O1", "O2", "T7", "T8", "P7",
    "P8", "F7", "F8", "Fp1", "Fp2", "Oz", "POz", "TP9", "TP10",
]


@dataclass(frozen=True)
class HrfParams:
    peak: float = 6.0
    undershoot: float = 16.0
    ratio: float = 1.0 / 6.0
    dispersion: float = 1.0


def double_gamma_hrf(tr: float, duration: float = 30.0, params: HrfParams = HrfParams()) -> np.ndarray:
    """Double-gamma HRF sampled every ``tr`` seconds from 0 to ``duration``.

    Each lobe is a gamma density whose mode sits at ``params.peak`` /
    ``params.undershoot``; the undershoot is scaled by ``params.ratio`` and
    the kernel is divided by its maximum.
    """
    if tr <= 0:
        raise ValueError("tr must be positive")
    if duration < 20:
        raise ValueError("duration must cover at least 20 s")
    t = np.arange(0.0, duration + 1e-9, tr)
    d = params.dispersion
    pos = sst.gamma.pdf(t, params.peak / d + 1, scale=d)
    neg = sst.gamma.pdf(t, params.undershoot / d + 1, scale=d)
    h = pos - params.ratio * neg
    return h / h.max()


def pick_channels(n: int) -> list[str]:
    """``n`` 10-20 labels, C3/C4 first in priority, returned anterior to posterior."""
    if not 1 <= n <= len(CHANNELS_10_20):
        raise ValueError(f"channel count must be in 1..{len(CHANNELS_10_20)}")
    chosen = set(_PRIORITY[:n])
    return [c for c in CHANNELS_10_20 if c in chosen]


def default_freqs(n: int) -> list[int]:
    """``n`` integer frequencies spread evenly over 1-40 Hz."""
    if n >= 40:
        return list(range(1, n + 1))
    step = 40 // n
    return list(range(step, step * n + 1, step))


def hrf_lag_coeffs(tr, n_lags, params: HrfParams = HrfParams()):
    """HRF samples at lags ``0..n_lags-1`` scaled to unit maximum."""
    h = double_gamma_hrf(tr, max(30.0, n_lags * tr), params)[:n_lags]
    return h / np.max(np.abs(h))


@dataclass(frozen=True)
class SyntheticSpec:
    n_samples: int
    n_channels: int
    n_freqs: int
    n_lags: int
    true_coeffs: np.ndarray
    tr: float = 1.26
    channel_labels: tuple[str, ...] | None = None
    freqs: tuple[int, ...] | None = None
    snr: float = 4.0
    noise_ar: float = 0.3
    latent_ar: float = 0.5
    feature_noise: float = 0.3
    task_amp: float = 1.0
    session_confound: float = 0.0
    confound_feature_gain: float = 1.0
    trial_period: float = 20.0
    trial_duration: float = 5.0
    n_runs: int = 1
    hrf: HrfParams = field(default_factory=HrfParams)
    seed: int = 0

    def __post_init__(self):
        coeffs = np.asarray(self.true_coeffs, dtype=float)
        object.__setattr__(self, "true_coeffs", coeffs)
        if coeffs.shape != (self.n_channels, self.n_freqs, self.n_lags):
            raise ValueError(
                f"true_coeffs shape {coeffs.shape} != (C, F, M) = "
                f"{(self.n_channels, self.n_freqs, self.n_lags)}"
            )
        if not self.snr > 0:
            raise ValueError("snr must be positive")
        for name in ("noise_ar", "latent_ar"):
            if not -1 < getattr(self, name) < 1:
                raise ValueError(f"{name} must lie in (-1, 1)")
        if self.n_samples <= self.n_lags:
            raise ValueError("n_samples must exceed n_lags")
        if self.channel_labels is None:
            object.__setattr__(self, "channel_labels", tuple(pick_channels(self.n_channels)))
        if self.freqs is None:
            object.__setattr__(self, "freqs", tuple(default_freqs(self.n_freqs)))
        if len(self.channel_labels) != self.n_channels or len(self.freqs) != self.n_freqs:
            raise ValueError("channel_labels/freqs lengths do not match dimensions")

    @property
    def active_groups(self) -> list[int]:
        return [int(c) for c in np.nonzero(np.any(self.true_coeffs != 0, axis=(1, 2)))[0]]

    def to_dict(self) -> dict:
        d = asdict(self)
        d["true_coeffs"] = self.true_coeffs.tolist()
        d["channel_labels"] = list(self.channel_labels)
        d["freqs"] = list(self.freqs)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SyntheticSpec":
        d = dict(d)
        d["hrf"] = HrfParams(**d.get("hrf", {}))
        d["true_coeffs"] = np.asarray(d["true_coeffs"], dtype=float)
        d["channel_labels"] = tuple(d["channel_labels"]) if d.get("channel_labels") else None
        d["freqs"] = tuple(d["freqs"]) if d.get("freqs") else None
        return cls(**d)


@dataclass
class SyntheticDataset:
    features: list[SpectralFeatureTensor]
    targets: list[np.ndarray]
    paradigms: list[TrialParadigm]
    spec: SyntheticSpec
    signal: list[np.ndarray]
    noise: list[np.ndarray]


def _ar1(rng, n, phi, shape=()):
    """Stationary unit-variance AR(1) along axis 0."""
    e = rng.standard_normal((n,) + tuple(shape))
    out = np.empty_like(e)
    out[0] = e[0]
    scale = np.sqrt(1 - phi * phi)
    for t in range(1, n):
        out[t] = phi * out[t - 1] + scale * e[t]
    return out


def _paradigm(rng, spec: SyntheticSpec, total_s):
    onsets = []
    t = 0.5 * spec.trial_period * rng.uniform(0.5, 1.0)
    while t + spec.trial_duration + spec.trial_period / 2 < total_s:
        onsets.append((round(float(t), 3), "left" if rng.random() < 0.5 else "right"))
        t += spec.trial_period * rng.uniform(0.8, 1.2)
    half = spec.trial_period / 2
    return TrialParadigm(onsets, (min(half, 5.0), min(half, 5.0)))


def _drift(rng, n):
    t = np.arange(n) / n
    d = np.zeros(n)
    for k in (0.5, 1.0, 1.5):
        d += rng.standard_normal() * np.sin(2 * np.pi * k * t + rng.uniform(0, 2 * np.pi))
    d -= d.mean()
    sd = d.std()
    return d / sd if sd > 0 else d


def _session(spec: SyntheticSpec, rng):
    T, C, F, M = spec.n_samples, spec.n_channels, spec.n_freqs, spec.n_lags
    tr = spec.tr
    total = T + M - 1
    paradigm = _paradigm(rng, spec, T * tr)
    box = np.zeros(total)
    times = (np.arange(total) - (M - 1)) * tr
    for onset, _ in paradigm.onsets:
        box[(times >= onset) & (times < onset + spec.trial_duration)] = 1.0
    if box.std() > 0:
        box = (box - box.mean()) / box.std()

    latent = _ar1(rng, total, spec.latent_ar, (C, F))
    active = np.any(spec.true_coeffs != 0, axis=2)
    latent[:, active] += spec.task_amp * box[:, None]

    signal = np.zeros(T)
    for n in range(M):
        signal += np.einsum("tcf,cf->t", latent[M - 1 - n : total - n], spec.true_coeffs[:, :, n])
    noise = _ar1(rng, T, spec.noise_ar)
    sig_sd = signal.std()
    if np.isinf(spec.snr):
        noise = np.zeros(T)
    elif sig_sd > 0:
        noise = (noise - noise.mean()) * (sig_sd / noise.std()) / np.sqrt(spec.snr)

    features = latent[M - 1 :] + spec.feature_noise * rng.standard_normal((T, C, F))
    target = signal + noise
    drift = _drift(rng, T)
    pattern = rng.standard_normal((C, F))
    if spec.session_confound:
        features = features + spec.session_confound * spec.confound_feature_gain * drift[:, None, None] * pattern
        target = target + spec.session_confound * (sig_sd if sig_sd > 0 else 1.0) * drift

    run_len = T // spec.n_runs
    bounds = [i * run_len for i in range(spec.n_runs)]
    tensor = SpectralFeatureTensor(
        features, 1.0 / tr, list(spec.channel_labels), list(spec.freqs), bounds, relative=False
    )
    return tensor, target, paradigm, signal, noise


def generate(spec: SyntheticSpec) -> SyntheticDataset:
    """Two sessions drawn from ``spec``; identical specs give identical data."""
    seeds = np.random.SeedSequence(spec.seed).spawn(2)
    out = [_session(spec, np.random.default_rng(s)) for s in seeds]
    tensors, targets, paradigms, signals, noises = (list(x) for x in zip(*out))
    return SyntheticDataset(tensors, targets, paradigms, spec, signals, noises)


def _coeffs(C, F, M, labels, freqs, cells, tr, hrf=HrfParams()):
    """Fill ``cells`` = {(channel, freq_hz): weight} with HRF-shaped lag profiles."""
    out = np.zeros((C, F, M))
    prof = hrf_lag_coeffs(tr, M, hrf)
    for (ch, fz), w in cells.items():
        out[labels.index(ch), list(freqs).index(fz)] = w * prof
    return out


def _s1(seed):
    C, F, M, tr = 16, 20, 5, 1.26
    labels, freqs = pick_channels(C), default_freqs(F)
    cells = {
        ("C3", 10): -0.5, ("C3", 12): -0.4, ("C3", 20): -0.3, ("C3", 22): -0.25,
        ("C4", 10): -0.45, ("C4", 12): -0.35, ("C4", 20): -0.3, ("C4", 24): -0.2,
        ("P3", 6): 0.35, ("P3", 8): -0.3, ("P3", 30): 0.25,
    }
    return SyntheticSpec(400, C, F, M, _coeffs(C, F, M, labels, freqs, cells, tr), tr, tuple(labels), tuple(freqs), snr=4.0, seed=seed)


def _s2(seed):
    C, F, M, tr = 8, 20, 9, 1.26
    labels, freqs = pick_channels(C), default_freqs(F)
    coeffs = np.zeros((C, F, M))
    coeffs[labels.index("C3"), freqs.index(10), 5] = -1.0
    return SyntheticSpec(300, C, F, M, coeffs, tr, tuple(labels), tuple(freqs), snr=2.0, task_amp=0.0, seed=seed)


def _s3(seed):
    C, F, M, tr = 8, 10, 5, 1.26
    labels, freqs = pick_channels(C), default_freqs(F)
    cells = {("C3", 8): -0.5, ("C3", 12): -0.4, ("C4", 12): -0.4, ("C4", 20): -0.3}
    return SyntheticSpec(
        300, C, F, M, _coeffs(C, F, M, labels, freqs, cells, tr), tr, tuple(labels), tuple(freqs),
        snr=2.0, feature_noise=1.0, session_confound=0.5, confound_feature_gain=3.0, seed=seed,
    )


def _null(seed):
    C, F, M = 4, 5, 3
    return SyntheticSpec(200, C, F, M, np.zeros((C, F, M)), noise_ar=0.5, task_amp=0.0, seed=seed)


SCENARIOS = {"S1": _s1, "S2": _s2, "S3": _s3, "NULL": _null}


def scenario(name: str, seed: int = 0, **overrides) -> SyntheticSpec:
    """Named synthetic scenario.

    S1: group-sparse recovery with three coupled channels (C3, C4, P3).
    S2: a single planted coupling at C3, 10 Hz, lag 5 samples (~6.3 s).
    S3: leakage demonstration; a session-specific drift enters both the
        features (strongly) and the target, so training on the test
        session inflates the score.
    NULL: features and target are independent AR(1) processes.
    """
    if name not in SCENARIOS:
        raise ValueError(f"unknown scenario {name!r}; valid scenarios: {', '.join(SCENARIOS)}")
    spec = SCENARIOS[name](seed)
    return replace(spec, **overrides) if overrides else spec
