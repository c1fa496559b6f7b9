"""Standardised tensor-regression datasets and the surf-ds-v1 file format.

surf-ds-v1 is a JSON manifest next to raw little-endian float64 payloads::

    {"format": "surf-ds-v1", "shape": [I1, ..., IN], "m": M,
     "x_file": "...", "y_file": "...", "x_nbytes": ..., "y_nbytes": ...,
     "layout": "row-major", "standardized": true,
     "standardization": {"y_mean": ..., "means_file": ..., "scales_file": ...,
                         "mask_file": ...}}

The X payload stores samples contiguously, each sample row-major. The
standardization block is present only when ``standardized`` is true; raw
payloads are standardised on load. ``x_nbytes``/``y_nbytes`` are optional for
foreign writers but let the loader tell truncation apart from a bad shape.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

FORMAT = "surf-ds-v1"
_F64 = np.dtype("<f8")


class DatasetError(Exception):
    """Raised for unreadable or inconsistent dataset files.

    ``code`` is one of ``corrupt_manifest``, ``truncated_payload``,
    ``shape_mismatch`` or ``missing_file``.
    """

    def __init__(self, code, message):
        super().__init__(f"{code}: {message}")
        self.code = code


def _frozen(a, dtype=np.float64):
    a = np.array(a, dtype=dtype, copy=True, order="C")
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class StandardizationRecord:
    y_mean: float
    entry_means: np.ndarray
    entry_scales: np.ndarray
    zero_variance_mask: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "y_mean", float(self.y_mean))
        object.__setattr__(self, "entry_means", _frozen(self.entry_means))
        object.__setattr__(self, "entry_scales", _frozen(self.entry_scales))
        object.__setattr__(self, "zero_variance_mask", _frozen(self.zero_variance_mask, bool))
        if np.any(self.entry_scales <= 0):
            raise ValueError("entry scales must be positive")

    @property
    def sample_shape(self):
        return self.entry_means.shape

    def apply(self, raw_x) -> np.ndarray:
        """Map raw samples stacked on the last mode into the standardised space."""
        raw_x = np.asarray(raw_x, dtype=np.float64)
        if raw_x.shape[:-1] != self.sample_shape:
            raise ValueError(f"sample shape {raw_x.shape[:-1]} does not match {self.sample_shape}")
        if not np.all(np.isfinite(raw_x)):
            raise ValueError("non-finite predictor values")
        x = (raw_x - self.entry_means[..., None]) / self.entry_scales[..., None]
        x[self.zero_variance_mask] = 0.0
        return x

    def invert(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        return x * self.entry_scales[..., None] + self.entry_means[..., None]

    def __eq__(self, other):
        if not isinstance(other, StandardizationRecord):
            return NotImplemented
        return (
            self.y_mean == other.y_mean
            and _bits_equal(self.entry_means, other.entry_means)
            and _bits_equal(self.entry_scales, other.entry_scales)
            and np.array_equal(self.zero_variance_mask, other.zero_variance_mask)
        )


def _bits_equal(a, b):
    a = np.asarray(a)
    b = np.asarray(b)
    return a.shape == b.shape and a.dtype == b.dtype and a.tobytes() == b.tobytes()


@dataclass(frozen=True, eq=False)
class TensorDataset:
    """Predictors stacked along the last mode, shape (I1, ..., IN, M), and response y.

    ``std`` is None for data that was never standardised (toy problems).
    """

    x: np.ndarray
    y: np.ndarray
    std: StandardizationRecord | None = None

    def __post_init__(self):
        x = _frozen(self.x)
        y = _frozen(self.y)
        if x.ndim < 2:
            raise ValueError("x must have at least one predictor mode plus the sample mode")
        if y.ndim != 1 or y.size != x.shape[-1]:
            raise ValueError(f"y has shape {y.shape}, expected ({x.shape[-1]},)")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)

    @property
    def sample_shape(self) -> tuple:
        return self.x.shape[:-1]

    @property
    def m(self) -> int:
        return self.x.shape[-1]

    def subset(self, idx) -> "TensorDataset":
        idx = np.asarray(idx)
        return TensorDataset(self.x[..., idx], self.y[idx], self.std)

    def with_response(self, y) -> "TensorDataset":
        return TensorDataset(self.x, y, self.std)

    def __eq__(self, other):
        if not isinstance(other, TensorDataset):
            return NotImplemented
        return _bits_equal(self.x, other.x) and _bits_equal(self.y, other.y) and self.std == other.std


def standardize(raw_x, raw_y) -> TensorDataset:
    """Centre the response and scale every predictor entry to mean 0, mean square 1.

    Scaling uses the population convention (divide by M). Entries that are
    constant over the samples are flagged and set to exactly 0.
    """
    raw_x = np.asarray(raw_x, dtype=np.float64)
    raw_y = np.asarray(raw_y, dtype=np.float64).ravel()
    if raw_x.ndim < 2 or raw_x.shape[-1] != raw_y.size:
        raise ValueError(f"x shape {raw_x.shape} is incompatible with {raw_y.size} responses")
    m = raw_y.size
    if m < 2:
        raise ValueError("standardization needs at least 2 samples")
    if not (np.all(np.isfinite(raw_x)) and np.all(np.isfinite(raw_y))):
        raise ValueError("non-finite values in raw data")
    y_mean = raw_y.mean()
    means = raw_x.mean(axis=-1)
    spread = np.ptp(raw_x, axis=-1)
    constant = spread == 0
    # divide by the range first so tiny spreads do not underflow when squared
    unit = np.where(constant, 1.0, spread)
    scales = unit * np.sqrt((((raw_x - means[..., None]) / unit[..., None]) ** 2).mean(axis=-1))
    constant |= ~(scales > 0)
    scales[constant] = 1.0
    record = StandardizationRecord(y_mean, means, scales, constant)
    return TensorDataset(record.apply(raw_x), raw_y - y_mean, record)


def _resolve(path):
    path = Path(path)
    if path.suffix != ".json":
        path = path / "dataset.json"
    return path


def _write(path, arr, dtype=_F64):
    Path(path).write_bytes(np.ascontiguousarray(arr, dtype=dtype).tobytes())


def save(dataset: TensorDataset, path, raw=False) -> Path:
    """Write ``dataset`` as surf-ds-v1 and return the manifest path.

    With ``raw=True`` the stored record is inverted and the unstandardised
    payload is written with ``"standardized": false``.
    """
    manifest_path = _resolve(path)
    manifest_path.parent.mkdir(parents=True, exist_ok=True)
    stem = manifest_path.stem
    d = manifest_path.parent
    if raw:
        if dataset.std is None:
            raise ValueError("cannot write raw payload without a standardization record")
        x = dataset.std.invert(dataset.x)
        y = dataset.y + dataset.std.y_mean
    else:
        x, y = dataset.x, dataset.y
    xs = np.moveaxis(x, -1, 0)
    manifest = {
        "format": FORMAT,
        "shape": list(dataset.sample_shape),
        "m": dataset.m,
        "x_file": f"{stem}.x.f64",
        "y_file": f"{stem}.y.f64",
        "x_nbytes": int(xs.size * 8),
        "y_nbytes": int(y.size * 8),
        "layout": "row-major",
        "standardized": not raw and dataset.std is not None,
    }
    _write(d / manifest["x_file"], xs)
    _write(d / manifest["y_file"], y)
    if manifest["standardized"]:
        s = dataset.std
        manifest["standardization"] = {
            "y_mean": s.y_mean,
            "means_file": f"{stem}.means.f64",
            "scales_file": f"{stem}.scales.f64",
            "mask_file": f"{stem}.mask.u8",
        }
        _write(d / f"{stem}.means.f64", s.entry_means)
        _write(d / f"{stem}.scales.f64", s.entry_scales)
        _write(d / f"{stem}.mask.u8", s.zero_variance_mask, np.uint8)
    manifest_path.write_text(json.dumps(manifest, indent=2) + "\n")
    return manifest_path


def _read_manifest(path):
    manifest_path = _resolve(path)
    if not manifest_path.exists():
        raise DatasetError("missing_file", f"no manifest at {manifest_path}")
    try:
        manifest = json.loads(manifest_path.read_text())
        if manifest.get("format") != FORMAT:
            raise DatasetError("corrupt_manifest", f"unknown format {manifest.get('format')!r}")
        shape = tuple(int(s) for s in manifest["shape"])
        m = int(manifest["m"])
        if manifest.get("layout", "row-major") != "row-major":
            raise DatasetError("corrupt_manifest", f"unsupported layout {manifest['layout']!r}")
        manifest["x_file"], manifest["y_file"], manifest["standardized"]
    except DatasetError:
        raise
    except (ValueError, KeyError, TypeError) as exc:
        raise DatasetError("corrupt_manifest", f"{manifest_path}: {exc}") from exc
    if not shape or any(s < 1 for s in shape) or m < 1:
        raise DatasetError("corrupt_manifest", f"invalid shape {shape} / m {m}")
    return manifest_path, manifest, shape, m


def _read_payload(path, count, recorded_nbytes, dtype=_F64):
    if not path.exists():
        raise DatasetError("missing_file", f"payload {path} not found")
    raw = path.read_bytes()
    expected = count * dtype.itemsize
    if recorded_nbytes is not None and recorded_nbytes != expected:
        raise DatasetError("shape_mismatch", f"{path.name}: manifest shape implies {expected} bytes, payload recorded as {recorded_nbytes}")
    if len(raw) < expected:
        raise DatasetError("truncated_payload", f"{path.name}: {len(raw)} of {expected} bytes")
    if len(raw) > expected:
        raise DatasetError("shape_mismatch", f"{path.name}: {len(raw)} bytes, manifest shape implies {expected}")
    return np.frombuffer(raw, dtype=dtype).copy()


def load_arrays(path):
    """Read a dataset file without standardising: ``(x, y, record_or_None)``."""
    manifest_path, manifest, shape, m = _read_manifest(path)
    d = manifest_path.parent
    n_entries = int(np.prod(shape))
    xs = _read_payload(d / manifest["x_file"], n_entries * m, manifest.get("x_nbytes"))
    y = _read_payload(d / manifest["y_file"], m, manifest.get("y_nbytes"))
    x = np.ascontiguousarray(np.moveaxis(xs.reshape((m,) + shape), 0, -1))
    record = None
    if manifest["standardized"]:
        try:
            s = manifest["standardization"]
            y_mean = float(s["y_mean"])
        except (KeyError, TypeError, ValueError) as exc:
            raise DatasetError("corrupt_manifest", f"bad standardization block: {exc}") from exc
        means = _read_payload(d / s["means_file"], n_entries, None).reshape(shape)
        scales = _read_payload(d / s["scales_file"], n_entries, None).reshape(shape)
        mask = _read_payload(d / s["mask_file"], n_entries, None, np.dtype(np.uint8)).reshape(shape)
        record = StandardizationRecord(y_mean, means, scales, mask.astype(bool))
    return x, y, record


def load(path) -> TensorDataset:
    x, y, record = load_arrays(path)
    if record is None:
        try:
            return standardize(x, y)
        except ValueError as exc:
            raise DatasetError("shape_mismatch", str(exc)) from exc
    return TensorDataset(x, y, record)


def load_raw(path):
    """Raw-scale ``(x, y)`` for prediction, inverting a stored record if needed."""
    x, y, record = load_arrays(path)
    if record is None:
        return x, y
    return record.invert(x), y + record.y_mean
