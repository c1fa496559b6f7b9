"""Alternating convex search (ACS) for the sparse unit-rank problem.

Each block (sigma, w_n) is an elastic net in the scaled factor
``v = sigma * w_n``. Appending sqrt(alpha * beta * M) * I below Z^(-n)^T
turns it into a plain LASSO, solved here by cyclic coordinate descent on the
Gram matrix.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .tensor import UnitRankTerm, contract_all_but, matricize_last_mode, materialize

log = logging.getLogger(__name__)


@dataclass
class AcsConfig:
    alpha: float = 1.0
    lambda_grid: np.ndarray | None = None
    n_lambdas: int = 100
    lambda_ratio: float = 1e-3
    block_tol: float = 1e-8
    max_sweeps: int = 500
    cd_tol: float = 1e-8
    cd_max_iter: int = 10000
    init_scale: float = 1e-3
    warm_start: bool = True

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError("alpha must be > 0")
        for name in ("block_tol", "cd_tol", "init_scale"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be > 0")
        if self.lambda_grid is not None:
            grid = np.asarray(self.lambda_grid, dtype=np.float64)
            if grid.ndim != 1 or grid.size == 0 or np.any(grid <= 0) or np.any(np.diff(grid) >= 0):
                raise ValueError("lambda_grid must be strictly decreasing positive values")
            self.lambda_grid = grid

    def grid(self, lmax: float) -> np.ndarray:
        if self.lambda_grid is not None:
            return self.lambda_grid
        return default_grid(lmax, self.n_lambdas, self.lambda_ratio)


def default_grid(lmax, n=100, ratio=1e-3):
    return np.geomspace(lmax, lmax * ratio, n)


def rank_one_objective(dataset, coef, lam, alpha) -> float:
    """(1/M) ||y - <X, W>||^2 + alpha ||W||_F^2 + lam ||W||_1 for a dense W."""
    resid = dataset.y - matricize_last_mode(dataset.x).T @ np.ravel(coef)
    return float(np.dot(resid, resid) / resid.size + alpha * np.sum(coef * coef) + lam * np.abs(coef).sum())


def block_design(x, factors, n):
    """Z^(-n) (I_n x M) and beta^(-n) for the current factors."""
    order = x.ndim - 1
    z = contract_all_but(x, list(factors) + [None], keep=[n, order])
    sq = [float(np.dot(w, w)) for k, w in enumerate(factors) if k != n]
    return z, math.prod(sq)


def build_augmented(dataset, factors, n, alpha):
    """Augmented LASSO data (y_aug, z_aug) for block ``n``."""
    z, beta = block_design(dataset.x, factors, n)
    m = dataset.m
    size = z.shape[0]
    y_aug = np.concatenate([dataset.y, np.zeros(size)])
    z_aug = np.vstack([z.T, math.sqrt(alpha * beta * m) * np.eye(size)])
    return y_aug, z_aug


@dataclass
class LassoResult:
    w: np.ndarray
    kkt: float
    n_iter: int
    converged: bool


def lasso_kkt(gram, c, w, lam, m) -> float:
    """Largest violation of the LASSO optimality conditions at ``w``."""
    grad = 2.0 / m * (gram @ w - c)
    nz = w != 0
    viol = np.where(nz, np.abs(grad + lam * np.sign(w)), np.maximum(np.abs(grad) - lam, 0.0))
    return float(viol.max()) if viol.size else 0.0


def _soft(u, thr):
    # tiny relative dead zone keeps exact-threshold inputs at zero despite rounding
    if abs(u) <= thr * (1 + 1e-12):
        return 0.0
    return u - math.copysign(thr, u)


def lasso_cd(gram, c, lam, m, w0=None, tol=1e-8, max_iter=10000) -> LassoResult:
    """Minimise (1/m)(w^T G w - 2 c^T w) + lam ||w||_1 by cyclic coordinate descent."""
    gram = np.asarray(gram, dtype=np.float64)
    c = np.asarray(c, dtype=np.float64)
    p = c.size
    w = np.zeros(p) if w0 is None else np.array(w0, dtype=np.float64)
    diag = np.diag(gram).copy()
    thr = lam * m / 2.0
    r = c - gram @ w
    kkt = lasso_kkt(gram, c, w, lam, m)
    it = 0
    while kkt > tol and it < max_iter:
        it += 1
        for j in range(p):
            if diag[j] <= 0:
                continue
            old = w[j]
            new = _soft(r[j] + diag[j] * old, thr) / diag[j]
            if new != old:
                w[j] = new
                r -= gram[:, j] * (new - old)
        r = c - gram @ w
        kkt = lasso_kkt(gram, c, w, lam, m)
    return LassoResult(w, kkt, it, kkt <= tol)


def solve_block_lasso(y_aug, z_aug, lam, m, warm_start=None, tol=1e-8, max_iter=10000) -> LassoResult:
    """Solve (1/m) ||y_aug - z_aug w||^2 + lam ||w||_1."""
    if lam < 0:
        raise ValueError("lambda must be >= 0")
    z_aug = np.asarray(z_aug, dtype=np.float64)
    gram = z_aug.T @ z_aug
    c = z_aug.T @ np.asarray(y_aug, dtype=np.float64)
    return lasso_cd(gram, c, lam, m, warm_start, tol, max_iter)


@dataclass
class AcsResult:
    term: UnitRankTerm
    lam: float
    objective: float
    trace: list = field(default_factory=list)  # objective after every block update
    sweeps: int = 0
    converged: bool = True
    kkt: float = 0.0
    cd_failures: int = 0


def lemma_init(dataset, scale=1e-3) -> UnitRankTerm:
    """The single-entry starting point: largest |x_i^T y| entry, signed on mode 0."""
    shape = dataset.sample_shape
    c = matricize_last_mode(dataset.x) @ dataset.y
    k = int(np.argmax(np.abs(c)))
    idx = np.unravel_index(k, shape)
    sign = 1.0 if c[k] >= 0 else -1.0
    factors = []
    for n, (i, size) in enumerate(zip(idx, shape)):
        v = np.zeros(size)
        v[i] = sign if n == 0 else 1.0
        factors.append(v)
    return UnitRankTerm(scale, tuple(factors))


def acs_fit(dataset, lam, config: AcsConfig | None = None, init: UnitRankTerm | None = None) -> AcsResult:
    """Block-coordinate minimisation at a fixed ``lam`` from ``init``.

    A block update is kept only if it does not raise the objective, so the
    recorded trace is nonincreasing. Returns sigma = 0 as soon as a block
    solution vanishes.
    """
    config = config or AcsConfig()
    if init is None:
        init = lemma_init(dataset, config.init_scale)
    if not init.sigma > 0:
        raise ValueError("ACS needs an initial term with sigma > 0")
    x, y, m = dataset.x, dataset.y, dataset.m
    alpha = config.alpha
    order = x.ndim - 1
    sigma = init.sigma
    factors = [np.array(f) for f in init.factors]
    obj = rank_one_objective(dataset, materialize(init), lam, alpha)
    trace = [obj]
    cd_failures = 0
    kkt = 0.0
    converged = False
    sweeps = 0
    while sweeps < config.max_sweeps:
        sweeps += 1
        start = obj
        for n in range(order):
            z, beta = block_design(x, factors, n)
            gram = z @ z.T
            gram[np.diag_indices_from(gram)] += alpha * beta * m
            c = z @ y
            res = lasso_cd(gram, c, lam, m, sigma * factors[n], config.cd_tol, config.cd_max_iter)
            if not res.converged:
                cd_failures += 1
            kkt = res.kkt
            s_new = float(np.abs(res.w).sum())
            if s_new == 0:
                zero_obj = float(np.dot(y, y)) / m
                if zero_obj <= obj:
                    trace.append(zero_obj)
                    return AcsResult(UnitRankTerm.zero(dataset.sample_shape), lam, zero_obj, trace, sweeps, True, kkt, cd_failures)
                trace.append(obj)
                continue
            cand = list(factors)
            cand[n] = res.w / s_new
            new_obj = rank_one_objective(dataset, materialize(UnitRankTerm(s_new, tuple(cand))), lam, alpha)
            if new_obj <= obj:
                factors, sigma, obj = cand, s_new, new_obj
            trace.append(obj)
        if start - obj < config.block_tol:
            converged = True
            break
    if not converged:
        log.warning("ACS did not converge at lam=%.4g after %d sweeps", lam, sweeps)
    return AcsResult(UnitRankTerm(sigma, tuple(factors)), lam, obj, trace, sweeps, converged and cd_failures == 0, kkt, cd_failures)


@dataclass
class AcsPath:
    lambdas: np.ndarray
    results: list
    lambda_max: float
    shape: tuple

    def __len__(self):
        return len(self.results)

    def __iter__(self):
        return iter(zip(self.lambdas, (r.term for r in self.results)))

    @property
    def terms(self):
        return [r.term for r in self.results]

    def coef(self, k) -> np.ndarray:
        return materialize(self.results[k].term)

    @property
    def converged(self) -> bool:
        return all(r.converged for r in self.results)


def acs_path(dataset, config: AcsConfig | None = None, init: UnitRankTerm | None = None) -> AcsPath:
    """Solve every grid lambda in decreasing order.

    With ``config.warm_start`` each fit starts from the previous solution
    (falling back to ``init`` while the solution is zero).
    """
    from .solver import lambda_max

    config = config or AcsConfig()
    lmax = lambda_max(dataset)
    grid = config.grid(lmax) if lmax > 0 else (config.lambda_grid if config.lambda_grid is not None else np.zeros(0))
    if init is None:
        init = lemma_init(dataset, config.init_scale) if lmax > 0 else None
    results = []
    prev = None
    for lam in grid:
        if init is None:
            j = float(np.dot(dataset.y, dataset.y)) / dataset.m
            results.append(AcsResult(UnitRankTerm.zero(dataset.sample_shape), float(lam), j, [j]))
            continue
        start = prev if (config.warm_start and prev is not None and prev.sigma > 0) else init
        res = acs_fit(dataset, float(lam), config, start)
        results.append(res)
        prev = res.term
    return AcsPath(np.asarray(grid, dtype=np.float64), results, lmax, tuple(dataset.sample_shape))
