"""Static SVG figures: prediction overlays, violin summaries and t-map heatmaps.

SVG output is made reproducible by pinning matplotlib's hash salt and
dropping the creation-date metadata.
"""

from __future__ import annotations

import io
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .io import atomic_write  # noqa: E402

__all__ = ["plot_prediction", "plot_violin", "plot_tmap"]

_RC = {"svg.hashsalt": "lagsynth", "svg.fonttype": "path", "font.size": 9}


def _save(fig, path):
    buf = io.StringIO()
    fig.savefig(buf, format="svg", metadata={"Date": None, "Creator": "lagsynth"})
    plt.close(fig)
    atomic_write(Path(path), buf.getvalue())


def plot_prediction(truth, pred, path, title="", tr=None):
    """Overlay of the held-out target and the model prediction."""
    with plt.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(8, 2.8))
        t = np.arange(len(truth)) * (tr or 1.0)
        ax.plot(t, truth, color="0.3", lw=1.0, label="target")
        ax.plot(t, pred, color="tab:red", lw=1.0, label="prediction")
        ax.set_xlabel("time (s)" if tr else "sample")
        ax.set_title(title)
        ax.legend(loc="upper right", frameon=False)
        fig.tight_layout()
        _save(fig, path)


def plot_violin(groups: dict, path, title="", observed: dict | None = None, ylabel="test r"):
    """Violin per named sample; optional observed values drawn as markers."""
    names = list(groups)
    with plt.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(1.6 + 1.2 * len(names), 3.2))
        data = [np.asarray(groups[n], dtype=float) for n in names]
        pos = np.arange(1, len(names) + 1)
        ok = [i for i, d in enumerate(data) if len(d) > 1 and np.ptp(d) > 0]
        if ok:
            ax.violinplot([data[i] for i in ok], positions=pos[ok], showmedians=True)
        for i, d in enumerate(data):
            ax.scatter(np.full(len(d), pos[i]), d, s=6, color="0.4", zorder=3)
        if observed:
            for i, n in enumerate(names):
                if n in observed:
                    ax.scatter([pos[i]], [observed[n]], marker="D", s=30, color="tab:red", zorder=4)
        ax.set_xticks(pos, names)
        ax.set_ylabel(ylabel)
        ax.set_title(title)
        fig.tight_layout()
        _save(fig, path)


def plot_tmap(tmap, path, title=""):
    """Heatmap of a t-map with supra-threshold cells outlined."""
    t = np.asarray(tmap.t, dtype=float)
    with plt.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(6, 4))
        lim = np.nanmax(np.abs(t)) if np.isfinite(t).any() else 1.0
        im = ax.imshow(t, aspect="auto", origin="lower", cmap="RdBu_r", vmin=-lim, vmax=lim)
        sig = np.nan_to_num(np.abs(t)) > tmap.critical_t
        if sig.any():
            ax.contour(sig.astype(float), levels=[0.5], colors="k", linewidths=0.8)
        ax.set_yticks(range(t.shape[0]), [str(v) for v in tmap.row_labels])
        ax.set_xticks(range(t.shape[1]), [str(v) for v in tmap.col_labels], rotation=90)
        ax.set_ylabel(tmap.row_axis)
        ax.set_xlabel(tmap.col_axis)
        ax.set_title(title)
        fig.colorbar(im, ax=ax, label="t")
        fig.tight_layout()
        _save(fig, path)
