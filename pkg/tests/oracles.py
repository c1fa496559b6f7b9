"""Independent slow reference computations used by the tests.

Everything here works on dense tensors with explicit loops, sharing no code
paths with the solvers beyond the dataset container.
"""
import itertools

import numpy as np

from surf.dataset import TensorDataset

TIE_RTOL = 1e-12


def random_dataset(rng, shape, m, centered=True):
    x = rng.standard_normal(tuple(shape) + (m,))
    y = rng.standard_normal(m)
    if centered:
        y = y - y.mean()
    return TensorDataset(x, y)


def planted_dataset(rng, shape, m, noise=0.1):
    """Sparse rank-1 signal plus noise; y is centered."""
    x = rng.standard_normal(tuple(shape) + (m,))
    w = np.ones(())
    for size in shape:
        v = np.zeros(size)
        k = rng.choice(size, size=max(1, size // 2), replace=False)
        v[k] = rng.standard_normal(k.size)
        w = np.multiply.outer(w, v)
    y = np.einsum(x, list(range(x.ndim)), w, list(range(w.ndim)), [x.ndim - 1]) + noise * rng.standard_normal(m)
    return TensorDataset(x, y - y.mean())


def sample_response(x, w):
    """<X_m, W> for every sample m, by explicit summation over entries."""
    out = np.zeros(x.shape[-1])
    for idx in itertools.product(*(range(s) for s in w.shape)):
        if w[idx] != 0:
            out += w[idx] * x[idx]
    return out


def loss(dataset, w, alpha):
    """J = mean squared residual + alpha ||W||_F^2 (equal to the factored ridge for rank one)."""
    r = dataset.y - sample_response(dataset.x, w)
    return float(np.mean(r ** 2) + alpha * np.sum(w ** 2))


def brute_lambda_max(dataset):
    best = 0.0
    for idx in itertools.product(*(range(s) for s in dataset.sample_shape)):
        best = max(best, abs(float(np.dot(dataset.x[idx], dataset.y))))
    return 2.0 * best / dataset.m


def first_min(values):
    values = np.asarray(values, dtype=np.float64)
    tol = TIE_RTOL * max(np.abs(values).max(), 1e-300)
    return int(np.flatnonzero(values <= values.min() + tol)[0])


def brute_init(dataset, eps, alpha):
    """Best single-entry move from zero: ``(multi_index, sign, lam0)``.

    Candidates are visited in row-major entry order, + before -, and compared
    by their change of J (the same tie rule as the solver).
    """
    j0 = loss(dataset, np.zeros(dataset.sample_shape), alpha)
    cands, deltas = [], []
    for idx in itertools.product(*(range(s) for s in dataset.sample_shape)):
        for sign in (1.0, -1.0):
            w = np.zeros(dataset.sample_shape)
            w[idx] = sign * eps
            cands.append((idx, sign))
            deltas.append(loss(dataset, w, alpha) - j0)
    k = first_min(deltas)
    return cands[k][0], cands[k][1], -deltas[k] / eps


def moved_coef(sigma, factors, n, i, s):
    """Dense W after adding ``s`` to entry i of the scaled factor sigma * w_n, and the new sigma."""
    facs = [np.array(f, dtype=np.float64) for f in factors]
    scaled = sigma * facs[n]
    scaled[i] += s
    facs[n] = scaled
    w = facs[0]
    for f in facs[1:]:
        w = np.multiply.outer(w, f)
    return w, float(np.abs(scaled).sum())


def all_moves(shape, eps):
    for n, size in enumerate(shape):
        for i in range(size):
            for s in (eps, -eps):
                yield n, i, s


def lasso_grid_1d(z, y, lam, lo=-5.0, hi=5.0, step=1e-4):
    """argmin_w (1/m)||y - z w||^2 + lam |w| over a dense grid."""
    grid = np.arange(lo, hi + step / 2, step)
    m = len(y)
    obj = ((y[None, :] - grid[:, None] * z[None, :]) ** 2).sum(axis=1) / m + lam * np.abs(grid)
    return float(grid[np.argmin(obj)])


def audit_trace(dataset, config, check_lemma4=True):
    """Step a SURF trace by hand and check the per-step guarantees.

    Returns ``(n_backward, n_drops, problems, max_cache_err, points)``.
    ``problems`` lists human-readable violations of: the backward decrease
    ``Gamma(t+1; lam_t) <= Gamma(t; lam_t) - xi`` (no tolerance), and, at every
    strict lam decrease, no +-eps single-coordinate move improving
    Gamma(.; lam_t) by more than xi (dense re-evaluation, 1e-10 relative slack
    for rounding between the two evaluations).
    """
    import copy

    from surf.solver import NullModel, initialize, step

    try:
        state, point = initialize(dataset, config)
    except NullModel:
        return 0, 0, [], 0.0, []
    points = [point]
    problems = []
    n_back = n_drop = 0
    cache_err = 0.0
    xi, eps, alpha = config.xi, config.epsilon, config.alpha
    while not state.done:
        before = copy.deepcopy(state)
        prev = points[-1]
        point = step(state, config)
        points.append(point)
        for n in range(state.order):
            if state.sigma > 0:
                fresh = state.fresh_z(n)
                denom = max(np.linalg.norm(fresh), 1e-300)
                cache_err = max(cache_err, float(np.linalg.norm(state.z[n] - fresh) / denom))
        if point.step_type == "backward" or (point.step_type == "terminal" and point.t > prev.t and point.lam == prev.lam
                                              and point.sigma < prev.sigma):
            n_back += 1
            g_new = point.j + prev.lam * point.sigma
            if not g_new <= prev.gamma - xi:
                problems.append(f"t={point.t}: backward Gamma {g_new!r} > {prev.gamma!r} - {xi!r}")
        if point.lam < prev.lam and check_lemma4:
            n_drop += 1
            lam = before.lam
            w0 = before.sigma * outer_product(before.w)
            g0 = loss(dataset, w0, alpha) + lam * before.sigma
            slack = 1e-10 * max(1.0, abs(g0))
            for n, i, s in all_moves(before.shape, eps):
                w1, sig1 = moved_coef(before.sigma, before.w, n, i, s)
                g1 = loss(dataset, w1, alpha) + lam * sig1
                if g1 < g0 - xi - slack:
                    problems.append(f"t={point.t}: move ({n},{i},{s:+g}) improves Gamma by {g0 - g1:.3g} > xi={xi:.3g}")
    return n_back, n_drop, problems, cache_err, points


def outer_product(vs):
    out = np.asarray(vs[0], dtype=np.float64)
    for v in vs[1:]:
        out = np.multiply.outer(out, v)
    return out
