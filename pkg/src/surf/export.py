"""File formats for paths and models.

Path CSV, one row per point, columns in this order::

    t,lambda,step_type,sigma,nnz_1,...,nnz_N,J,Gamma

Path JSON-lines, one object per point::

    {"t", "lambda", "step_type", "sigma", "J", "Gamma",
     "factors": [{"index": [...], "value": [...]}, ...]}

ACS paths use the same schemas with ``step_type`` "acs" and ``t`` the grid
position. Floats are written with 17 significant digits. Models are
surf-model-v1 JSON with a ``<stem>.std.json`` standardization sidecar.
"""
from __future__ import annotations

import csv
import io
import json
from pathlib import Path

import numpy as np

from .acs import rank_one_objective
from .dataset import StandardizationRecord
from .deflation import CPModel
from .tensor import UnitRankTerm, materialize

MODEL_FORMAT = "surf-model-v1"


def fmt(v) -> str:
    return format(float(v), ".17g")


def _sparse(factors, sigma):
    out = []
    for f in factors:
        f = np.asarray(f)
        idx = np.flatnonzero(f) if sigma > 0 else np.zeros(0, dtype=np.int64)
        out.append({"index": [int(i) for i in idx], "value": [float(v) for v in f[idx]]})
    return out


def _dense(sparse, shape):
    out = []
    for entry, size in zip(sparse, shape):
        v = np.zeros(size)
        v[np.asarray(entry["index"], dtype=np.int64)] = entry["value"]
        out.append(v)
    return out


def surf_rows(path):
    for p in path:
        yield {
            "t": p.t, "lambda": p.lam, "step_type": p.step_type, "sigma": p.sigma,
            "nnz": p.nnz(), "J": p.j, "Gamma": p.gamma, "factors": _sparse(p.factors(), p.sigma),
        }


def acs_rows(path, dataset, alpha):
    for k, (lam, term) in enumerate(path):
        coef = materialize(term)
        j = rank_one_objective(dataset, coef, 0.0, alpha)
        nnz = [int(np.count_nonzero(f)) if term.sigma > 0 else 0 for f in term.factors]
        yield {
            "t": k, "lambda": float(lam), "step_type": "acs", "sigma": term.sigma, "nnz": nnz,
            "J": j, "Gamma": j + lam * term.sigma, "factors": _sparse(term.factors, term.sigma),
        }


def write_path_csv(rows, fh, order):
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["t", "lambda", "step_type", "sigma"] + [f"nnz_{n + 1}" for n in range(order)] + ["J", "Gamma"])
    for r in rows:
        w.writerow([r["t"], fmt(r["lambda"]), r["step_type"], fmt(r["sigma"])] + list(r["nnz"]) + [fmt(r["J"]), fmt(r["Gamma"])])


def write_path_jsonl(rows, fh):
    for r in rows:
        rec = {k: r[k] for k in ("t", "lambda", "step_type", "sigma", "J", "Gamma", "factors")}
        fh.write(json.dumps(rec) + "\n")


def save_path(rows, stem, order):
    """Write ``stem``.csv and ``stem``.jsonl; returns both paths."""
    rows = list(rows)
    stem = Path(stem)
    stem.parent.mkdir(parents=True, exist_ok=True)
    csv_path, jsonl_path = stem.with_suffix(".csv"), stem.with_suffix(".jsonl")
    with open(csv_path, "w", newline="", encoding="utf-8") as fh:
        write_path_csv(rows, fh, order)
    with open(jsonl_path, "w", encoding="utf-8") as fh:
        write_path_jsonl(rows, fh)
    return csv_path, jsonl_path


def read_path_csv(path):
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def write_table(rows, columns, path):
    """Generic CSV with a fixed column order; floats at 17 significant digits."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([fmt(r[c]) if isinstance(r[c], (float, np.floating)) else r[c] for c in columns])
    Path(path).write_text(buf.getvalue(), encoding="utf-8")


def _std_to_dict(s: StandardizationRecord):
    return {
        "shape": list(s.sample_shape),
        "y_mean": s.y_mean,
        "entry_means": [float(v) for v in s.entry_means.ravel()],
        "entry_scales": [float(v) for v in s.entry_scales.ravel()],
        "zero_variance_mask": [bool(v) for v in s.zero_variance_mask.ravel()],
    }


def _std_from_dict(d):
    shape = tuple(d["shape"])
    return StandardizationRecord(
        d["y_mean"],
        np.array(d["entry_means"], dtype=np.float64).reshape(shape),
        np.array(d["entry_scales"], dtype=np.float64).reshape(shape),
        np.array(d["zero_variance_mask"], dtype=bool).reshape(shape),
    )


def _jsonable(v):
    if isinstance(v, dict):
        return {k: _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, np.ndarray):
        return [_jsonable(x) for x in v.tolist()]
    if isinstance(v, np.generic):
        return v.item()
    return v


def save_model(model: CPModel, path) -> list:
    """Write the surf-model-v1 manifest (and sidecar); returns written paths."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    doc = {
        "format": MODEL_FORMAT,
        "shape": list(model.shape),
        "solver": model.solver,
        "rank": model.rank,
        "terms": [
            {"sigma": t.sigma, "lambda": lam, "factors": _sparse(t.factors, t.sigma)}
            for t, lam in zip(model.terms, model.lambdas)
        ],
        "cv_table": model.cv_table,
        "config": model.config,
        "standardization": None,
    }
    written = [path]
    if model.standardization is not None:
        std_path = path.with_name(path.stem + ".std.json")
        std_path.write_text(json.dumps(_std_to_dict(model.standardization)) + "\n")
        doc["standardization"] = std_path.name
        written.append(std_path)
    path.write_text(json.dumps(_jsonable(doc), indent=1) + "\n")
    return written


class ModelFormatError(Exception):
    pass


def load_model(path) -> CPModel:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except (OSError, ValueError) as exc:
        raise ModelFormatError(f"cannot read model {path}: {exc}") from exc
    if doc.get("format") != MODEL_FORMAT:
        raise ModelFormatError(f"{path} is not a {MODEL_FORMAT} file")
    shape = tuple(doc["shape"])
    std = None
    if doc.get("standardization"):
        std = _std_from_dict(json.loads((path.parent / doc["standardization"]).read_text()))
    terms = [UnitRankTerm(t["sigma"], tuple(_dense(t["factors"], shape))) for t in doc["terms"]]
    lambdas = [t["lambda"] for t in doc["terms"]]
    return CPModel(terms, shape, std, lambdas, doc.get("cv_table", []), doc.get("solver", "surf"), doc.get("config", {}))
