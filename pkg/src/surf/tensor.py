"""Dense tensor kernels.

Tensors are plain C-ordered ``float64`` numpy arrays, so the flat layout is
row-major with the last index fastest. Modes are numbered from 0.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np


def as_tensor(values, shape=None) -> np.ndarray:
    """Return a C-contiguous float64 copy-free view where possible."""
    a = np.ascontiguousarray(values, dtype=np.float64)
    if shape is not None:
        shape = tuple(int(s) for s in shape)
        if any(s < 1 for s in shape):
            raise ValueError(f"tensor extents must be >= 1, got {shape}")
        if a.size != int(np.prod(shape, dtype=np.int64)):
            raise ValueError(f"{a.size} values do not fill shape {shape}")
        a = a.reshape(shape)
    return a


def _check_same_shape(a, b):
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")


def inner_product(a, b) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    _check_same_shape(a, b)
    return float(np.dot(a.ravel(), b.ravel()))


def frobenius_norm(a) -> float:
    return float(np.sqrt(inner_product(a, a)))


def l1_norm(a) -> float:
    return float(np.abs(np.asarray(a, dtype=np.float64)).sum())


def outer_product(vectors: Sequence) -> np.ndarray:
    if len(vectors) == 0:
        raise ValueError("outer_product needs at least one vector")
    out = np.asarray(vectors[0], dtype=np.float64)
    for v in vectors[1:]:
        out = np.multiply.outer(out, np.asarray(v, dtype=np.float64))
    return np.ascontiguousarray(out)


def n_mode_product(a, u, n: int) -> np.ndarray:
    """Contract mode ``n`` of ``a`` with the vector ``u``.

    The result drops mode ``n``. Contracting an order-1 tensor gives a 0-d
    array (a single-entry tensor).
    """
    a = np.asarray(a, dtype=np.float64)
    u = np.asarray(u, dtype=np.float64)
    if not 0 <= n < a.ndim:
        raise ValueError(f"mode {n} out of range for order-{a.ndim} tensor")
    if u.shape != (a.shape[n],):
        raise ValueError(f"vector of length {u.shape} cannot contract mode {n} of extent {a.shape[n]}")
    # ascontiguousarray would promote a 0-d result to shape (1,)
    return np.require(np.tensordot(a, u, axes=([n], [0])), requirements="C")


def contract_all_but(x, factors: Sequence, keep: Sequence[int]) -> np.ndarray:
    """Contract every mode of ``x`` whose index is not in ``keep`` with ``factors[mode]``.

    ``factors`` is indexed by mode; entries for kept modes are ignored. Zero
    factor entries are skipped, which makes sparse factors cheap. Kept modes
    stay in their original order.
    """
    keep = set(keep)
    out = np.asarray(x)
    # highest mode first so lower mode indices stay valid
    for mode in sorted((m for m in range(len(factors)) if m not in keep), reverse=True):
        w = np.asarray(factors[mode])
        nz = np.flatnonzero(w)
        if nz.size < w.size:
            out = np.take(out, nz, axis=mode)
            w = w[nz]
        out = np.tensordot(out, w, axes=([mode], [0]))
    return out


def matricize_last_mode(x) -> np.ndarray:
    """(N+1)-mode matricization: an (prod I_n) x M matrix.

    Column m is the row-major vectorisation of sample ``x[..., m]``, so row
    ``r`` corresponds to the multi-index ``np.unravel_index(r, x.shape[:-1])``.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim < 2:
        raise ValueError("matricize_last_mode needs an order >= 2 tensor")
    return x.reshape(-1, x.shape[-1])


def dematricize_last_mode(mat, sample_shape) -> np.ndarray:
    mat = np.asarray(mat, dtype=np.float64)
    return mat.reshape(tuple(sample_shape) + (mat.shape[1],))


def flat_index(multi_index, shape) -> int:
    return int(np.ravel_multi_index(tuple(multi_index), tuple(shape)))


def multi_index(flat, shape) -> tuple:
    return tuple(int(i) for i in np.unravel_index(int(flat), tuple(shape)))


@dataclass(frozen=True)
class UnitRankTerm:
    """``sigma * w1 o w2 o ... o wN`` with each factor of unit l1 norm."""

    sigma: float
    factors: tuple

    def __post_init__(self):
        if self.sigma < 0 or not np.isfinite(self.sigma):
            raise ValueError(f"sigma must be finite and nonnegative, got {self.sigma}")
        facs = tuple(np.asarray(f, dtype=np.float64).copy() for f in self.factors)
        if not facs or any(f.ndim != 1 or f.size == 0 for f in facs):
            raise ValueError("factors must be a nonempty list of nonempty vectors")
        for f in facs:
            f.setflags(write=False)
        object.__setattr__(self, "factors", facs)
        object.__setattr__(self, "sigma", float(self.sigma))

    @property
    def shape(self) -> tuple:
        return tuple(f.size for f in self.factors)

    @classmethod
    def zero(cls, shape) -> "UnitRankTerm":
        return cls(0.0, tuple(np.full(s, 1.0 / s) for s in shape))

    def check(self, tol=1e-8):
        if self.sigma > 0:
            for n, f in enumerate(self.factors):
                if abs(np.abs(f).sum() - 1.0) > tol:
                    raise ValueError(f"factor {n} has l1 norm {np.abs(f).sum()}, expected 1")


def materialize(term: UnitRankTerm) -> np.ndarray:
    if term.sigma == 0:
        return np.zeros(term.shape)
    return term.sigma * outer_product(term.factors)


def cp_sum(terms: Sequence[UnitRankTerm], shape=None) -> np.ndarray:
    if not terms:
        if shape is None:
            raise ValueError("cp_sum of no terms needs an explicit shape")
        return np.zeros(tuple(shape))
    shape = tuple(shape) if shape is not None else terms[0].shape
    out = np.zeros(shape)
    for r, term in enumerate(terms):
        if term.shape != shape:
            raise ValueError(f"term {r} has shape {term.shape}, expected {shape}")
        out += materialize(term)
    return out
