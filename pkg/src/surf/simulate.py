"""Synthetic sparse low-rank tensor regression data.

Predictors are Gaussian on an I x I grid (or I x I x I with ``order=3``, an
extension beyond the 2-D setting) with correlation 0.6 ** (grid distance).
The truth is W = sum_r (1/r) w1_r o w2_r with l1-normalised Gaussian factors,
after which S% of W's entries are set to zero.

Randomness: ``np.random.SeedSequence(seed).spawn(4)`` gives independent PCG64
streams, in order, for predictors, factors, noise and the sparsity mask.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import asdict, dataclass

import numpy as np

from .dataset import standardize
from .tensor import UnitRankTerm, materialize, matricize_last_mode

STREAMS = ("x", "factors", "noise", "mask")


@dataclass(frozen=True)
class SimSpec:
    m: int = 500
    i: int = 16
    r: int = 50
    s: float = 80.0
    noise_sd: float = 1.0
    correlation_base: float = 0.6
    seed: int = 0
    order: int = 2

    def __post_init__(self):
        if self.m < 2 or self.i < 2 or self.r < 1:
            raise ValueError(f"invalid sizes m={self.m} i={self.i} r={self.r}")
        if not 0 <= self.s < 100:
            raise ValueError(f"sparsity must be in [0, 100), got {self.s}")
        if self.noise_sd < 0:
            raise ValueError("noise_sd must be >= 0")
        if self.order not in (2, 3):
            raise ValueError("order must be 2 or 3")

    @property
    def shape(self) -> tuple:
        return (self.i,) * self.order

    def to_dict(self):
        return asdict(self)


@dataclass
class GroundTruth:
    w: np.ndarray
    terms: list
    spec: SimSpec

    def to_dict(self):
        return {
            "spec": self.spec.to_dict(),
            "seed": self.spec.seed,
            "shape": list(self.w.shape),
            "w": [float(v) for v in self.w.ravel()],
            "terms": [{"sigma": t.sigma, "factors": [[float(v) for v in f] for f in t.factors]} for t in self.terms],
        }


def rngs(seed):
    return dict(zip(STREAMS, (np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(len(STREAMS)))))


def gen_covariance(i, base=0.6, order=2) -> np.ndarray:
    """Correlation between grid cells: base ** euclidean distance, cells in row-major order."""
    grid = np.array(list(itertools.product(range(i), repeat=order)), dtype=np.float64)
    dist = np.sqrt(((grid[:, None, :] - grid[None, :, :]) ** 2).sum(-1))
    return base ** dist


def psd_factor(cov) -> np.ndarray:
    """Symmetric L with L @ L.T == cov, clipping negative eigenvalues at 0."""
    vals, vecs = np.linalg.eigh(cov)
    vals = np.clip(vals, 0.0, None)
    return (vecs * np.sqrt(vals)) @ vecs.T


def _truth(i, r, s, order, rng_factors, rng_mask):
    shape = (i,) * order
    terms = []
    for k in range(1, r + 1):
        factors = []
        for _ in range(order):
            v = rng_factors.standard_normal(i)
            factors.append(v / np.abs(v).sum())
        terms.append(UnitRankTerm(1.0 / k, tuple(factors)))
    w = np.zeros(shape)
    for t in terms:
        w += materialize(t)
    n_zero = math.floor(s * w.size / 100)
    if n_zero:
        w.ravel()[rng_mask.choice(w.size, size=n_zero, replace=False)] = 0.0
    return w, terms


def gen_truth(i, r, s, seed, order=2):
    """(sparsified W, pre-sparsification terms), drawn from the factor and mask streams of ``seed``."""
    g = rngs(seed)
    return _truth(i, r, s, order, g["factors"], g["mask"])


def draw_samples(cov_factor, w, m, noise_sd, rng_x, rng_noise):
    """Raw predictors (shape + (m,)) and responses y = <X, W> + noise."""
    p = cov_factor.shape[0]
    flat = rng_x.standard_normal((m, p)) @ cov_factor
    x = np.ascontiguousarray(np.moveaxis(flat.reshape((m,) + w.shape), 0, -1))
    y = matricize_last_mode(x).T @ w.ravel() + noise_sd * rng_noise.standard_normal(m)
    return x, y


def signal_variance(w, base=0.6) -> float:
    """Population variance of <X, W> under the simulator's predictor law."""
    cov = gen_covariance(w.shape[0], base, w.ndim)
    v = w.ravel()
    return float(v @ cov @ v)


def gen_raw(spec: SimSpec, m_extra=0):
    """Raw ``(x, y, truth)`` with ``spec.m + m_extra`` samples."""
    g = rngs(spec.seed)
    w, terms = _truth(spec.i, spec.r, spec.s, spec.order, g["factors"], g["mask"])
    cf = psd_factor(gen_covariance(spec.i, spec.correlation_base, spec.order))
    x, y = draw_samples(cf, w, spec.m + m_extra, spec.noise_sd, g["x"], g["noise"])
    return x, y, GroundTruth(w, terms, spec)


def gen_dataset(spec: SimSpec):
    """Standardised dataset and its ground truth, fully determined by ``spec``."""
    x, y, truth = gen_raw(spec)
    return standardize(x, y), truth


def gen_split(spec: SimSpec, m_test: int):
    """Standardised training set of ``spec.m`` samples plus a raw test set.

    Returns ``(train, x_test, y_test, truth)``; test samples follow the
    training samples in the same streams.
    """
    x, y, truth = gen_raw(spec, m_test)
    train = standardize(x[..., : spec.m], y[: spec.m])
    return train, x[..., spec.m:], y[spec.m:], truth

