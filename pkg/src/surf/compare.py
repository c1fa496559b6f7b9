"""SURF versus ACS at matched penalties.

Both solvers are evaluated on the default ACS grid (log-spaced from
lambda_max). The SURF solution at a grid penalty is the path state holding
there (zero above the first step, the terminal state below the last). ACS at
each penalty starts from that SURF solution, so both land near the same
coordinate-wise minimum when several exist; from the single-entry start when
SURF is still zero.
"""
from __future__ import annotations

import numpy as np

from .acs import AcsConfig, AcsPath, acs_fit, default_grid, lemma_init
from .solver import SurfPath
from .tensor import UnitRankTerm, frobenius_norm, l1_norm, materialize


def matched_grid(surf: SurfPath, n=100, ratio=1e-3):
    return default_grid(surf.lambda_max, n, ratio)


def surf_term_at(surf: SurfPath, lam) -> UnitRankTerm:
    pt = surf.at(lam)
    if pt is None or pt.sigma == 0:
        return UnitRankTerm.zero(surf.shape)
    return pt.term()


def matched_acs(surf: SurfPath, dataset, acs_config: AcsConfig, grid) -> AcsPath:
    results = []
    for lam in grid:
        start = surf_term_at(surf, lam)
        if start.sigma == 0:
            start = lemma_init(dataset, acs_config.init_scale)
        results.append(acs_fit(dataset, float(lam), acs_config, start))
    return AcsPath(np.asarray(grid, dtype=np.float64), results, surf.lambda_max, tuple(surf.shape))


def matched_rows(surf: SurfPath, acs: AcsPath):
    """Frobenius distance between the two solutions at every ACS grid penalty."""
    rows = []
    for k, lam in enumerate(acs.lambdas):
        w_surf = materialize(surf_term_at(surf, lam))
        w_acs = acs.coef(k)
        rows.append({
            "lambda": float(lam),
            "distance": frobenius_norm(w_surf - w_acs),
            "surf_l1": l1_norm(w_surf),
            "acs_l1": l1_norm(w_acs),
            "acs_fro": frobenius_norm(w_acs),
        })
    return rows


def path_distance(surf: SurfPath, dataset, acs_config: AcsConfig | None = None):
    """``(d, rows, acs)``: the max matched distance, the table, and the ACS fits used."""
    acs_config = acs_config or AcsConfig(alpha=surf.config.alpha if surf.config else 1.0)
    if acs_config.lambda_grid is not None:
        grid = acs_config.lambda_grid
    elif surf.lambda_max > 0:
        grid = matched_grid(surf, acs_config.n_lambdas, acs_config.lambda_ratio)
    else:
        return 0.0, [], AcsPath(np.zeros(0), [], 0.0, tuple(surf.shape))
    acs = matched_acs(surf, dataset, acs_config, grid)
    rows = matched_rows(surf, acs)
    d = max((r["distance"] for r in rows), default=0.0)
    return d, rows, acs
