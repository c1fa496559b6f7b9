"""Sequential unit-rank pursuit with cross-validated penalty and rank.

Term r is fitted on the residual left by terms 1..r-1 (fitted on the full
training data), its penalty chosen by k-fold CV along the solver's path, and
the term refitted on all samples at that penalty. Extraction stops at a zero
term, when the CV error stops improving by more than ``MIN_IMPROVEMENT``, or
at the rank cap. CV uses full-data residuals for earlier terms, not
fold-specific ones; the folds are fixed once per fit.
"""
from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .acs import AcsConfig, acs_path
from .dataset import StandardizationRecord
from .solver import SurfConfig, trace_path
from .tensor import UnitRankTerm, cp_sum, materialize, matricize_last_mode

log = logging.getLogger(__name__)

MIN_IMPROVEMENT = 1e-6
SOLVERS = ("surf", "acs")


@dataclass
class CvConfig:
    folds: int = 5
    rank_cap: int = 50
    one_se_rule: bool = False
    seed: int = 0
    threads: int = 1

    def __post_init__(self):
        if self.folds < 2:
            raise ValueError("folds must be >= 2")
        if self.rank_cap < 1:
            raise ValueError("rank_cap must be >= 1")


@dataclass
class TermSelection:
    """CV outcome for one deflation step."""

    rank: int
    lambdas: np.ndarray
    cv_rmse: np.ndarray
    cv_se: np.ndarray
    chosen: int
    baseline_rmse: float
    term: UnitRankTerm
    accepted: bool = False

    @property
    def lam(self) -> float:
        return float(self.lambdas[self.chosen]) if self.chosen >= 0 else float("nan")

    @property
    def best_rmse(self) -> float:
        return float(self.cv_rmse[self.chosen]) if self.chosen >= 0 else self.baseline_rmse

    def to_dict(self):
        return {
            "rank": self.rank,
            "lambda": [float(v) for v in self.lambdas],
            "cv_rmse": [float(v) for v in self.cv_rmse],
            "cv_se": [float(v) for v in self.cv_se],
            "chosen": int(self.chosen),
            "chosen_lambda": self.lam,
            "baseline_rmse": float(self.baseline_rmse),
            "accepted": bool(self.accepted),
        }


@dataclass
class CPModel:
    terms: list
    shape: tuple
    standardization: StandardizationRecord | None = None
    lambdas: list = field(default_factory=list)
    cv_table: list = field(default_factory=list)
    solver: str = "surf"
    config: dict = field(default_factory=dict)

    def __post_init__(self):
        self.shape = tuple(self.shape)
        for r, t in enumerate(self.terms):
            if t.sigma == 0:
                raise ValueError(f"term {r} is zero; zero terms are never stored")
            if t.shape != self.shape:
                raise ValueError(f"term {r} has shape {t.shape}, model shape is {self.shape}")

    @property
    def rank(self) -> int:
        return len(self.terms)

    def coef(self) -> np.ndarray:
        return cp_sum(self.terms, self.shape)

    @property
    def y_mean(self) -> float:
        return self.standardization.y_mean if self.standardization is not None else 0.0


def make_folds(m, k, seed):
    """Disjoint, covering fold index arrays from a seeded permutation."""
    perm = np.random.default_rng(seed).permutation(m)
    return [np.sort(f) for f in np.array_split(perm, k)]


def residualize(y, term: UnitRankTerm, dataset) -> np.ndarray:
    y = np.asarray(y, dtype=np.float64)
    if term.shape != tuple(dataset.sample_shape):
        raise ValueError(f"term shape {term.shape} does not match data {dataset.sample_shape}")
    if term.sigma == 0:
        return y.copy()
    return y - matricize_last_mode(dataset.x).T @ materialize(term).ravel()


def _solver_coefs(train, solver, lambdas, surf_config, acs_config):
    """Coefficient vectors (n_lambdas x prod I) of a path fitted on ``train``."""
    p = int(np.prod(train.sample_shape))
    out = np.zeros((len(lambdas), p))
    if solver == "surf":
        path = trace_path(train, surf_config)
        for k, lam in enumerate(lambdas):
            pt = path.at(lam)
            if pt is not None and pt.sigma > 0:
                out[k] = pt.coef().ravel()
    else:
        cfg = _with_grid(acs_config, lambdas)
        path = acs_path(train, cfg)
        for k in range(len(lambdas)):
            out[k] = path.coef(k).ravel()
    return out


def _with_grid(acs_config, lambdas):
    from dataclasses import replace

    return replace(acs_config, lambda_grid=np.asarray(lambdas, dtype=np.float64))


def _full_path(dataset, solver, surf_config, acs_config):
    if solver == "surf":
        path = trace_path(dataset, surf_config)
        bps = path.breakpoints()
        lambdas = np.array([p.lam for p in bps])
        terms = [p.term() for p in bps]
        return lambdas, terms, path
    path = acs_path(dataset, acs_config)
    return np.asarray(path.lambdas), path.terms, path


def select_term(dataset, solver, folds, cv: CvConfig, surf_config, acs_config, rank=1) -> TermSelection:
    """Pick the penalty for one unit-rank term by k-fold CV and refit on all samples."""
    lambdas, terms, _ = _full_path(dataset, solver, surf_config, acs_config)
    ms = dataset.y ** 2
    baseline = float(np.sqrt(ms.mean()))
    if len(lambdas) == 0:
        zero = UnitRankTerm.zero(dataset.sample_shape)
        return TermSelection(rank, np.zeros(0), np.zeros(0), np.zeros(0), -1, baseline, zero)

    def run_fold(test_idx):
        train_idx = np.setdiff1d(np.arange(dataset.m), test_idx)
        coefs = _solver_coefs(dataset.subset(train_idx), solver, lambdas, surf_config, acs_config)
        xt = matricize_last_mode(dataset.x[..., test_idx])
        resid = dataset.y[test_idx][None, :] - coefs @ xt
        return (resid ** 2).sum(axis=1)

    if cv.threads > 1:
        with ThreadPoolExecutor(cv.threads) as pool:
            sse = list(pool.map(run_fold, folds))
    else:
        sse = [run_fold(f) for f in folds]
    sse = np.array(sse)  # folds x lambdas
    sizes = np.array([len(f) for f in folds], dtype=np.float64)
    rmse = np.sqrt(sse.sum(axis=0) / dataset.m)
    fold_rmse = np.sqrt(sse / sizes[:, None])
    se = fold_rmse.std(axis=0, ddof=1) / np.sqrt(len(folds))
    best = float(rmse.min())
    # lambdas are decreasing, so the first qualifying index is the largest lambda
    tol = 1e-12 * max(best, 1e-300)
    if cv.one_se_rule:
        k_min = int(np.flatnonzero(rmse <= best + tol)[0])
        chosen = int(np.flatnonzero(rmse <= best + se[k_min] + tol)[0])
    else:
        chosen = int(np.flatnonzero(rmse <= best + tol)[0])
    return TermSelection(rank, lambdas, rmse, se, chosen, baseline, terms[chosen])


def sequential_fit(dataset, solver="surf", cv: CvConfig | None = None, surf_config: SurfConfig | None = None,
                   acs_config: AcsConfig | None = None) -> CPModel:
    if solver not in SOLVERS:
        raise ValueError(f"unknown solver {solver!r}; expected one of {SOLVERS}")
    cv = cv or CvConfig()
    surf_config = surf_config or SurfConfig()
    acs_config = acs_config or AcsConfig(alpha=surf_config.alpha)
    folds = make_folds(dataset.m, cv.folds, cv.seed)
    y_r = np.array(dataset.y)
    terms, lambdas, table = [], [], []
    for r in range(1, cv.rank_cap + 1):
        try:
            sel = select_term(dataset.with_response(y_r), solver, folds, cv, surf_config, acs_config, rank=r)
        except Exception as exc:
            raise RuntimeError(f"solver failed while fitting term {r}: {exc}") from exc
        improves = sel.term.sigma > 0 and sel.best_rmse < sel.baseline_rmse - MIN_IMPROVEMENT
        sel.accepted = bool(improves)
        table.append(sel.to_dict())
        log.info("term %d: lambda=%.4g cv_rmse=%.5g baseline=%.5g accepted=%s",
                 r, sel.lam, sel.best_rmse,
                 sel.baseline_rmse, improves)
        if not improves:
            break
        terms.append(sel.term)
        lambdas.append(sel.lam)
        y_r = residualize(y_r, sel.term, dataset)
    config = {"solver": solver, "cv": vars(cv).copy(), "surf": vars(surf_config).copy(),
              "acs": {k: v for k, v in vars(acs_config).items() if k != "lambda_grid"}}
    return CPModel(terms, dataset.sample_shape, dataset.std, lambdas, table, solver, config)


def predict(model: CPModel, raw_x) -> np.ndarray:
    """Predictions on the raw scale for samples stacked along the last mode."""
    raw_x = np.asarray(raw_x, dtype=np.float64)
    if raw_x.shape[:-1] != model.shape:
        raise ValueError(f"sample shape {raw_x.shape[:-1]} does not match model shape {model.shape}")
    if not np.all(np.isfinite(raw_x)):
        raise ValueError("non-finite predictor values")
    x = model.standardization.apply(raw_x) if model.standardization is not None else raw_x
    return matricize_last_mode(x).T @ model.coef().ravel() + model.y_mean


def rmse(y_true, y_pred) -> float:
    y_true = np.asarray(y_true, dtype=np.float64)
    y_pred = np.asarray(y_pred, dtype=np.float64)
    if y_true.shape != y_pred.shape:
        raise ValueError("length mismatch")
    return float(np.sqrt(np.mean((y_true - y_pred) ** 2)))


def sparsity_of_coefficients(model) -> float:
    """Fraction of exactly-zero entries of the materialised coefficient tensor."""
    w = model.coef() if isinstance(model, CPModel) else np.asarray(model)
    return float(np.mean(w == 0))
