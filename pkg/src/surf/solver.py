"""Stagewise unit-rank tensor factorization (SURF).

Traces the whole regularization path of

    min_W (1/M) sum_m (y_m - <X_m, W>)^2 + lam ||W||_1 + alpha ||W||_F^2,  rank(W) <= 1

with W = sigma * w1 o ... o wN and ||w_n||_1 = 1, by taking +-eps coordinate
steps on one factor at a time while tracking a nonincreasing lam.

Notation used in the code: for mode n, ``z[n]`` is the (I_n, M) contraction
of X with every factor except w_n, ``e`` is the residual y - prediction, and
``beta[n]`` is the product of squared l2 norms of the other factors. The
scaled factor is ``sigma * w[n]``. Moving coordinate i of mode n by s changes
the loss by ``(-2 s g_i + s^2 d_i) / M`` with

    g = z[n] @ e - alpha * beta[n] * M * (sigma * w[n])
    d = rowsum(z[n]**2) + alpha * beta[n] * M

Ties between candidates are broken towards the lowest (mode, index), and a
positive step is preferred over a negative one.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .tensor import UnitRankTerm, contract_all_but, matricize_last_mode, outer_product

log = logging.getLogger(__name__)

_TIE_RTOL = 1e-12


class NullModel(Exception):
    """The all-zero coefficient is optimal for every lam >= 0 (lambda_max == 0)."""


@dataclass
class SurfConfig:
    epsilon: float = 0.1
    xi: float | None = None
    alpha: float = 1.0
    max_steps: int | None = None

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError(f"epsilon must be > 0, got {self.epsilon}")
        if self.xi is None:
            self.xi = self.epsilon ** 2 / 2
        if self.xi < 0:
            raise ValueError(f"xi must be >= 0, got {self.xi}")
        if not self.alpha > 0:
            raise ValueError(f"alpha must be > 0, got {self.alpha}")
        if self.max_steps is not None and self.max_steps < 1:
            raise ValueError("max_steps must be positive")

    def step_cap(self, shape) -> int:
        if self.max_steps is not None:
            return int(self.max_steps)
        return int(math.ceil(10 * sum(shape) / self.epsilon))


@dataclass(frozen=True)
class PathPoint:
    t: int
    lam: float
    step_type: str  # init | forward | backward | terminal
    sigma: float
    support: tuple  # per mode: (indices, values) of the unit-l1 factor
    gamma: float
    j: float
    shape: tuple

    def factors(self):
        out = []
        for (idx, val), size in zip(self.support, self.shape):
            w = np.zeros(size)
            w[idx] = val
            out.append(w)
        return out

    def term(self) -> UnitRankTerm:
        if self.sigma == 0:
            return UnitRankTerm.zero(self.shape)
        return UnitRankTerm(self.sigma, tuple(self.factors()))

    def coef(self) -> np.ndarray:
        if self.sigma == 0:
            return np.zeros(self.shape)
        return self.sigma * outer_product(self.factors())

    def nnz(self):
        return [len(idx) for idx, _ in self.support] if self.sigma > 0 else [0] * len(self.shape)


@dataclass
class SurfPath:
    """Ordered PathPoints plus run metadata."""

    points: list
    lambda_max: float
    shape: tuple
    truncated: bool = False
    config: SurfConfig | None = None

    def __len__(self):
        return len(self.points)

    def __iter__(self):
        return iter(self.points)

    def __getitem__(self, k):
        return self.points[k]

    @property
    def lambdas(self) -> np.ndarray:
        return np.array([p.lam for p in self.points])

    def breakpoints(self):
        """Points whose lam strictly drops at the next point; the path's solutions at their lam.

        The final point is included as the solution at the smallest lam reached.
        """
        pts = self.points
        out = [p for p, q in zip(pts[:-1], pts[1:]) if q.lam < p.lam]
        if pts and pts[-1].sigma > 0 and (not out or out[-1] is not pts[-1]):
            out.append(pts[-1])
        return out

    def at(self, lam: float) -> PathPoint | None:
        """Path solution for penalty ``lam``: the last point with lam_t >= lam.

        Returns None when ``lam`` lies above the first point (zero model).
        """
        lams = self.lambdas
        # lams is nonincreasing; count points with lam_t >= lam
        k = int(np.searchsorted(-lams, -lam, side="right"))
        if k == 0:
            return None
        return self.points[k - 1]


@dataclass
class Candidate:
    mode: int
    index: int
    step: float
    dj: float  # change of J
    domega: float  # change of sigma
    dgamma: float = float("nan")  # change of Gamma at the current lam (backward only)


@dataclass
class SurfState:
    x: np.ndarray
    y: np.ndarray
    alpha: float
    epsilon: float
    sigma: float
    w: list
    lam: float
    z: list = field(default_factory=list)
    e: np.ndarray | None = None
    beta: list = field(default_factory=list)
    active: list = field(default_factory=list)
    t: int = 0
    done: bool = False
    truncated: bool = False

    @property
    def order(self) -> int:
        return self.x.ndim - 1

    @property
    def m(self) -> int:
        return self.x.shape[-1]

    @property
    def shape(self) -> tuple:
        return self.x.shape[:-1]

    def w_hat(self, n) -> np.ndarray:
        return self.sigma * self.w[n]

    def fresh_z(self, n) -> np.ndarray:
        """Z^(-n) contracted from scratch (no cache)."""
        return contract_all_but(self.x, self.w + [None], keep=[n, self.order])

    def refresh(self):
        self.z = [self.fresh_z(n) for n in range(self.order)]
        self._refresh_beta()
        self.e = self.y - self.z[0].T @ self.w_hat(0)

    def _refresh_beta(self):
        sq = [float(np.dot(w, w)) for w in self.w]
        self.beta = [math.prod(sq[:n] + sq[n + 1:]) for n in range(self.order)]

    def loss(self) -> float:
        """J: mean squared residual plus the ridge term."""
        ridge = self.sigma ** 2 * math.prod(float(np.dot(w, w)) for w in self.w)
        return float(np.dot(self.e, self.e)) / self.m + self.alpha * ridge

    def mode_stats(self, n):
        ab = self.alpha * self.beta[n] * self.m
        zn = self.z[n]
        g = zn @ self.e - ab * self.w_hat(n)
        d = np.einsum("ij,ij->i", zn, zn) + ab
        return g, d

    def term(self) -> UnitRankTerm:
        if self.sigma == 0:
            return UnitRankTerm.zero(self.shape)
        return UnitRankTerm(self.sigma, tuple(self.w))

    def snapshot(self, step_type) -> PathPoint:
        j = self.loss()
        support = tuple(
            (np.flatnonzero(w), w[np.flatnonzero(w)].copy()) for w in self.w
        )
        return PathPoint(self.t, self.lam, step_type, self.sigma, support, j + self.lam * self.sigma, j, self.shape)


def _first_min(values, tol_scale=None):
    """Index of the first entry within a relative tolerance of the minimum."""
    values = np.asarray(values)
    vmin = values.min()
    scale = np.abs(values).max() if tol_scale is None else tol_scale
    return int(np.flatnonzero(values <= vmin + _TIE_RTOL * max(scale, 1e-300))[0])


def penalized_loss(state: SurfState, lam: float):
    """Return ``(gamma, j)`` with gamma = j + lam * sigma."""
    j = state.loss()
    return j + lam * state.sigma, j


def lambda_max(dataset) -> float:
    """(2/M) max_i |x_i^T y| over the columns of the last-mode matricization."""
    xm = matricize_last_mode(dataset.x)
    y = np.asarray(dataset.y, dtype=np.float64)
    return float(2.0 / y.size * np.abs(xm @ y).max())


def initialize(dataset, config: SurfConfig):
    """First forward step from zero; returns ``(state, PathPoint)``.

    The step minimises J over every (entry, +-eps) pair, which on standardised
    data picks the entry with the largest |x_i^T y|. Raises NullModel when no
    step lowers J (in particular when lambda_max == 0).
    """
    x = np.asarray(dataset.x, dtype=np.float64)
    y = np.asarray(dataset.y, dtype=np.float64)
    m = y.size
    eps, alpha = config.epsilon, config.alpha
    shape = x.shape[:-1]
    xm = matricize_last_mode(x)
    c = xm @ y
    if not np.any(c != 0):
        raise NullModel("lambda_max is zero")
    # J(s 1_i) - J(0) = (-2 s c_i + s^2 (||x_i||^2 + alpha M)) / M; unit factors give beta = 1
    d = np.einsum("ij,ij->i", xm, xm) + alpha * m
    dj = np.empty(2 * c.size)
    dj[0::2] = (-2 * eps * c + eps ** 2 * d) / m
    dj[1::2] = (2 * eps * c + eps ** 2 * d) / m
    k = _first_min(dj)
    flat, sign = divmod(k, 2)
    sign = 1.0 if sign == 0 else -1.0
    j0 = float(np.dot(y, y)) / m
    lam0 = -dj[k] / eps
    if not lam0 > 0:
        raise NullModel("no single step lowers the loss")
    idx = np.unravel_index(flat, shape)
    w = []
    for n, (i, size) in enumerate(zip(idx, shape)):
        v = np.zeros(size)
        v[i] = sign if n == 0 else 1.0
        w.append(v)
    state = SurfState(x=x, y=y, alpha=alpha, epsilon=eps, sigma=eps, w=w, lam=float(lam0))
    state.active = [{int(i)} for i in idx]
    state.refresh()
    log.debug("init at %s sign %+d, lam0=%.6g (J0=%.6g)", idx, sign, lam0, j0)
    return state, state.snapshot("init")


def forward_candidate(state: SurfState) -> Candidate:
    eps = state.epsilon
    m = state.m
    djs, steps = [], []
    for n in range(state.order):
        g, d = state.mode_stats(n)
        s = np.where(g >= 0, eps, -eps)
        djs.append((-2 * eps * np.abs(g) + eps ** 2 * d) / m)
        steps.append(s)
    dj = np.concatenate(djs)
    k = _first_min(dj)
    n, i = _locate(k, state.shape)
    s = float(steps[n][i])
    a = state.sigma * state.w[n][i]
    return Candidate(n, i, s, float(dj[k]), abs(a + s) - abs(a))


def _locate(k, shape):
    for n, size in enumerate(shape):
        if k < size:
            return n, k
        k -= size
    raise IndexError(k)


def backward_moves(state: SurfState):
    """All moves towards zero on active coordinates, in tie-break order.

    Yields ``(mode, index, step)``. A coordinate larger than eps in magnitude
    moves by eps. A smaller one has two moves: landing exactly on zero
    (listed first) and the full eps step across zero.
    """
    eps = state.epsilon
    for n in range(state.order):
        for i in sorted(state.active[n]):
            a = state.sigma * state.w[n][i]
            if abs(a) > eps:
                yield n, i, -math.copysign(eps, a)
            else:
                yield n, i, -a
                if abs(a) < eps:
                    yield n, i, -math.copysign(eps, a)


def backward_candidate(state: SurfState, lam: float | None = None) -> Candidate | None:
    """Best move towards zero by change of Gamma(.; lam); None if nothing is active.

    With all steps of size eps this coincides with ranking by J alone.
    """
    lam = state.lam if lam is None else lam
    moves = list(backward_moves(state))
    if not moves:
        return None
    stats = [state.mode_stats(n) for n in range(state.order)]
    m = state.m
    rows = []
    for n, i, s in moves:
        g, d = stats[n]
        a = state.sigma * state.w[n][i]
        dj = (-2 * s * g[i] + s * s * d[i]) / m
        domega = abs(a + s) - abs(a)
        rows.append((dj, domega, dj + lam * domega))
    dgam = np.array([r[2] for r in rows])
    k = _first_min(dgam)
    n, i, s = moves[k]
    dj, domega, dgamma = rows[k]
    return Candidate(n, i, float(s), float(dj), float(domega), float(dgamma))


def _apply(state: SurfState, cand: Candidate):
    n_hat, i, s = cand.mode, cand.index, cand.step
    x = state.x
    sigma = state.sigma
    wh = sigma * state.w[n_hat]
    a = wh[i]
    wh[i] = 0.0 if s == -a else a + s
    sigma_new = float(np.abs(wh).sum())
    state.e = state.e - s * state.z[n_hat][i]
    if sigma_new == 0:
        state.sigma = 0.0
        state.active[n_hat].discard(i)
        return
    if state.order > 1:
        sl = np.take(x, i, axis=n_hat)
        others = [w for k, w in enumerate(state.w) if k != n_hat] + [None]
        for n in range(state.order):
            if n == n_hat:
                continue
            pos = n if n < n_hat else n - 1
            part = contract_all_but(sl, others, keep=[pos, len(others) - 1])
            state.z[n] = (sigma * state.z[n] + s * part) / sigma_new
    state.w[n_hat] = wh / sigma_new
    state.sigma = sigma_new
    if wh[i] == 0:
        state.active[n_hat].discard(i)
    else:
        state.active[n_hat].add(i)
    state._refresh_beta()


def step(state: SurfState, config: SurfConfig) -> PathPoint:
    """Advance ``state`` in place by one backward or forward step.

    Returns the PathPoint of the new state; its step_type is ``terminal`` when
    the path ends (no forward step keeps lam positive, sigma collapsed to 0,
    or the step cap was hit), after which ``state.done`` is set.
    """
    if state.done:
        raise RuntimeError("path already terminated")
    if state.t >= config.step_cap(state.shape):
        state.done = state.truncated = True
        return state.snapshot("terminal")
    xi = config.xi
    back = backward_candidate(state)
    if back is not None and back.dgamma <= -xi:
        _apply(state, back)
        state.t += 1
        if state.sigma == 0:
            state.done = True
            return state.snapshot("terminal")
        return state.snapshot("backward")

    fwd = forward_candidate(state)
    gain = -fwd.dj - xi
    if not gain > 0:
        # every forward step would drive lam to <= 0
        state.done = True
        return state.snapshot("terminal")
    lam_new = state.lam
    if fwd.domega > 0:
        lam_new = float(min(state.lam, gain / fwd.domega))
    _apply(state, fwd)
    state.lam = lam_new
    state.t += 1
    if state.sigma == 0:
        state.done = True
        return state.snapshot("terminal")
    return state.snapshot("forward")


def trace_path(dataset, config: SurfConfig | None = None, callback=None) -> SurfPath:
    """Run SURF from zero until lam would reach 0; one PathPoint per step.

    ``callback(state, point)`` is invoked after every step (tests use it to
    audit the live state).
    """
    config = config or SurfConfig()
    shape = tuple(dataset.x.shape[:-1])
    lmax = lambda_max(dataset)
    try:
        state, point = initialize(dataset, config)
    except NullModel:
        support = tuple((np.zeros(0, dtype=np.int64), np.zeros(0)) for _ in shape)
        j = float(np.dot(dataset.y, dataset.y)) / len(dataset.y)
        zero = PathPoint(0, 0.0, "terminal", 0.0, support, j, j, shape)
        return SurfPath([zero], lmax, shape, False, config)
    points = [point]
    if callback is not None:
        callback(state, point)
    while not state.done:
        point = step(state, config)
        points.append(point)
        if callback is not None:
            callback(state, point)
    if state.truncated:
        log.warning("SURF path truncated at %d steps", state.t)
    return SurfPath(points, lmax, shape, state.truncated, config)
