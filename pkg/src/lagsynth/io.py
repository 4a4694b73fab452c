"""Dataset and report files.

Feature tensors use a small binary container::

    b"LGST" | version (u8) | ndim (u8) | ndim x dim (u64 LE) | float64 LE data, row-major

with a JSON sidecar (``<name>.json``) holding channel labels, frequencies,
sample rate and run boundaries. Targets are one-column CSV files and trial
onsets are ``time,side`` CSV files. A dataset directory is described by
``manifest.json``.
"""

from __future__ import annotations

import csv
import io
import json
import os
import struct
import tempfile
from pathlib import Path

import numpy as np

from .features import SpectralFeatureTensor, TrialParadigm

__all__ = [
    "MAGIC",
    "FORMAT_VERSION",
    "FormatError",
    "atomic_write",
    "dump_json",
    "encode_tensor",
    "decode_tensor",
    "write_tensor",
    "read_tensor",
    "write_feature_tensor",
    "read_feature_tensor",
    "write_target_csv",
    "read_target_csv",
    "write_onsets_csv",
    "read_onsets_csv",
    "write_dataset",
    "read_dataset",
    "LoadedDataset",
]

MAGIC = b"LGST"
FORMAT_VERSION = 1
MANIFEST = "manifest.json"


class FormatError(ValueError):
    """A file exists but does not follow the expected layout."""


def atomic_write(path, data: bytes | str) -> None:
    """Write via a temporary file in the same directory, then rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if isinstance(data, str):
        data = data.encode("utf-8")
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", suffix=".tmp", dir=path.parent)
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def dump_json(obj) -> str:
    # sorted keys and repr floats keep the output byte-stable
    return json.dumps(obj, sort_keys=True, indent=2, allow_nan=True) + "\n"


def encode_tensor(arr) -> bytes:
    arr = np.ascontiguousarray(arr, dtype="<f8")
    if arr.ndim > 255:
        raise ValueError("too many dimensions")
    head = MAGIC + struct.pack("<BB", FORMAT_VERSION, arr.ndim)
    head += struct.pack(f"<{arr.ndim}Q", *arr.shape)
    return head + arr.tobytes(order="C")


def decode_tensor(buf: bytes) -> np.ndarray:
    if len(buf) < 6 or buf[:4] != MAGIC:
        raise FormatError("not an LGST tensor (bad magic)")
    version, ndim = struct.unpack_from("<BB", buf, 4)
    if version != FORMAT_VERSION:
        raise FormatError(f"unsupported LGST version {version}")
    off = 6 + 8 * ndim
    if len(buf) < off:
        raise FormatError("truncated LGST header")
    shape = struct.unpack_from(f"<{ndim}Q", buf, 6)
    count = int(np.prod(shape, dtype=np.int64)) if ndim else 1
    if len(buf) != off + 8 * count:
        raise FormatError(f"LGST payload has {len(buf) - off} bytes, expected {8 * count}")
    return np.frombuffer(buf, dtype="<f8", offset=off, count=count).reshape(shape).astype(float)


def write_tensor(path, arr) -> None:
    atomic_write(path, encode_tensor(arr))


def read_tensor(path) -> np.ndarray:
    return decode_tensor(Path(path).read_bytes())


def _sidecar(path) -> Path:
    return Path(path).with_suffix(".json")


def write_feature_tensor(path, tensor: SpectralFeatureTensor) -> None:
    meta = {
        "channel_labels": list(tensor.channel_labels),
        "freqs": [float(f) for f in tensor.freqs],
        "sample_rate": float(tensor.sample_rate),
        "run_boundaries": list(tensor.run_boundaries),
        "relative": bool(tensor.relative),
        "axes": ["time", "channel", "frequency"],
    }
    write_tensor(path, tensor.data)
    atomic_write(_sidecar(path), dump_json(meta))


def read_feature_tensor(path) -> SpectralFeatureTensor:
    data = read_tensor(path)
    side = _sidecar(path)
    if not side.exists():
        raise FileNotFoundError(f"missing sidecar {side}")
    meta = json.loads(side.read_text())
    try:
        return SpectralFeatureTensor(
            data,
            meta["sample_rate"],
            meta["channel_labels"],
            meta["freqs"],
            meta.get("run_boundaries", [0]),
            meta.get("relative", False),
        )
    except KeyError as exc:
        raise FormatError(f"sidecar {side} lacks field {exc}") from None


def write_target_csv(path, y) -> None:
    buf = io.StringIO()
    buf.write("bold\n")
    for v in np.asarray(y, dtype=float):
        buf.write(repr(float(v)) + "\n")
    atomic_write(path, buf.getvalue())


def read_target_csv(path) -> np.ndarray:
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r]
    if rows and rows[0] and not _is_number(rows[0][0]):
        rows = rows[1:]
    if any(len(r) != 1 for r in rows):
        raise FormatError(f"{path}: target CSV must have exactly one column")
    try:
        return np.array([float(r[0]) for r in rows])
    except ValueError as exc:
        raise FormatError(f"{path}: {exc}") from None


def _is_number(s) -> bool:
    try:
        float(s)
        return True
    except ValueError:
        return False


def write_onsets_csv(path, paradigm: TrialParadigm) -> None:
    buf = io.StringIO()
    buf.write("time,side\n")
    for t, side in paradigm.onsets:
        buf.write(f"{float(t)!r},{side}\n")
    atomic_write(path, buf.getvalue())


def read_onsets_csv(path) -> TrialParadigm:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != ["time", "side"]:
            raise FormatError(f"{path}: expected header 'time,side'")
        onsets = [(float(r["time"]), r["side"].strip()) for r in reader]
    return TrialParadigm(onsets)


class LoadedDataset:
    """Two sessions read back from a dataset directory."""

    def __init__(self, features, targets, paradigms, manifest):
        self.features = features
        self.targets = targets
        self.paradigms = paradigms
        self.manifest = manifest

    @property
    def tr(self) -> float:
        return float(self.manifest["tr"])

    @property
    def n_lags(self) -> int | None:
        return self.manifest.get("n_lags")


def write_dataset(out_dir, features, targets, paradigms=None, *, tr, n_lags=None, extra=None, force=False) -> Path:
    """Write a two-session dataset directory; refuses to overwrite unless ``force``."""
    out = Path(out_dir)
    if (out / MANIFEST).exists() and not force:
        raise FileExistsError(f"{out} already holds a dataset (use --force to overwrite)")
    sessions = []
    for i, (tensor, y) in enumerate(zip(features, targets), start=1):
        entry = {"features": f"session{i}.lgst", "target": f"session{i}_bold.csv"}
        write_feature_tensor(out / entry["features"], tensor)
        write_target_csv(out / entry["target"], y)
        if paradigms is not None:
            entry["onsets"] = f"session{i}_onsets.csv"
            write_onsets_csv(out / entry["onsets"], paradigms[i - 1])
        sessions.append(entry)
    manifest = {"format": "lagsynth-dataset", "version": FORMAT_VERSION, "tr": float(tr), "sessions": sessions}
    if n_lags is not None:
        manifest["n_lags"] = int(n_lags)
    if extra:
        manifest.update(extra)
    atomic_write(out / MANIFEST, dump_json(manifest))
    return out


def read_dataset(path) -> LoadedDataset:
    """Read a dataset directory (or its manifest file)."""
    path = Path(path)
    manifest_path = path / MANIFEST if path.is_dir() else path
    if not manifest_path.exists():
        raise FileNotFoundError(f"no dataset manifest at {manifest_path}")
    root = manifest_path.parent
    manifest = json.loads(manifest_path.read_text())
    if manifest.get("format") != "lagsynth-dataset":
        raise FormatError(f"{manifest_path} is not a dataset manifest")
    for key in ("tr", "sessions"):
        if key not in manifest:
            raise FormatError(f"{manifest_path} lacks {key!r}")
    feats, ys, pars = [], [], []
    for entry in manifest["sessions"]:
        feats.append(read_feature_tensor(root / entry["features"]))
        ys.append(read_target_csv(root / entry["target"]))
        pars.append(read_onsets_csv(root / entry["onsets"]) if "onsets" in entry else None)
    return LoadedDataset(feats, ys, pars, manifest)
