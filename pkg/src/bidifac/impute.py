"""EM-style imputation: alternate a full fit with refilling the missing cells from the fitted signal."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np

from .linked import BlockGrid, PenaltyScheme
from .solver import Decomposition, FitReport, SolverConfig, fit

log = logging.getLogger(__name__)


@dataclass
class ImputeConfig:
    # None means 1e-6 times the number of missing entries
    outer_tol: float | None = None
    max_outer: int = 100
    inner: SolverConfig = field(default_factory=SolverConfig)
    # inner tolerance for the warm-started fits before the final one
    loose_tol: float = 1e-6
    # penalty multipliers (> 1, decreasing) solved in turn before the target
    # penalties; each stage starts from the previous completion
    lambda_path: tuple[float, ...] = ()

    def __post_init__(self):
        if self.outer_tol is not None and not self.outer_tol > 0:
            raise ValueError("outer_tol must be positive")
        if self.max_outer < 1:
            raise ValueError("max_outer must be at least 1")
        if not self.loose_tol > 0:
            raise ValueError("loose_tol must be positive")
        path = tuple(float(v) for v in self.lambda_path)
        if any(not v > 1 for v in path) or any(a <= b for a, b in zip(path, path[1:])):
            raise ValueError("lambda_path must be strictly decreasing multipliers above 1")
        self.lambda_path = path

    def tolerance(self, n_missing: int) -> float:
        return self.outer_tol if self.outer_tol is not None else 1e-6 * max(n_missing, 1)


@dataclass
class ImputeReport:
    outer_iterations: int
    converged: bool
    changes: list[float]
    n_missing: int
    fit: FitReport | None = None

    def to_dict(self) -> dict:
        return {
            "outer_iterations": self.outer_iterations,
            "converged": self.converged,
            "changes": self.changes,
            "n_missing": self.n_missing,
        }


def initial_fill(grid: BlockGrid) -> np.ndarray:
    """Fill each block's missing cells with the observed column mean.

    Columns with no observed entry in the block fall back to the row mean,
    and cells missing in both directions to the block mean.
    """
    data = grid.data.copy()
    if not grid.has_missing:
        return data
    obs = grid.observed_mask()
    for i in range(grid.p):
        for j in range(grid.q):
            r, c = grid.rows(i), grid.cols(j)
            blk, ob = data[r, c], obs[r, c]
            if not ob.any():
                raise ValueError(f"block ({i + 1},{j + 1}) has no observed entries")
            vals = np.where(ob, blk, 0.0)
            block_mean = vals.sum() / ob.sum()
            ncol, nrow = ob.sum(axis=0), ob.sum(axis=1)
            with np.errstate(invalid="ignore", divide="ignore"):
                col_mean = vals.sum(axis=0) / ncol
                row_mean = vals.sum(axis=1) / nrow
            fill = np.broadcast_to(col_mean, blk.shape).copy()
            no_col = ncol == 0
            fill[:, no_col] = np.broadcast_to(row_mean[:, None], blk.shape)[:, no_col]
            fill[~np.isfinite(fill)] = block_mean
            data[r, c] = np.where(ob, blk, fill)
    return data


def impute(
    grid: BlockGrid,
    scheme: PenaltyScheme,
    config: ImputeConfig | None = None,
    frozen=(),
) -> tuple[BlockGrid, Decomposition, ImputeReport]:
    """Complete ``grid`` and fit it jointly.

    Returns the completed grid (no mask), the decomposition of the final
    fit and a report with the per-iteration squared change over the missing
    cells.  Observed entries are copied through unchanged.
    """
    config = config or ImputeConfig()
    if not grid.has_missing:
        theta, rep = fit(grid, scheme, config.inner, frozen=frozen)
        return grid.with_data(grid.data.copy(), None), theta, ImputeReport(0, True, [], 0, rep)

    missing = ~grid.observed_mask()
    n_missing = int(missing.sum())
    eps = config.tolerance(n_missing)
    data = initial_fill(grid)
    full = grid.with_data(data, None)

    theta = config.inner.init
    loose = replace(config.inner, rel_tol=max(config.inner.rel_tol, config.loose_tol))
    changes: list[float] = []
    converged = False
    for mult in (*config.lambda_path, 1.0):
        stage = scheme.scaled(mult) if mult != 1.0 else scheme
        converged = False
        for _ in range(config.max_outer):
            theta, _ = fit(full, stage, replace(loose, init=theta), frozen=frozen)
            new = theta.signal()[missing]
            change = float(np.sum((data[missing] - new) ** 2))
            if not np.isfinite(change):
                raise FloatingPointError("imputed values became non-finite")
            changes.append(change)
            data[missing] = new
            full = grid.with_data(data, None)
            if change < eps:
                converged = True
                break
    if not converged:
        log.warning("imputation stopped after %d outer iterations without converging", config.max_outer)

    # final fit at the caller's tolerance
    theta, rep = fit(full, scheme, replace(config.inner, init=theta), frozen=frozen)
    data[missing] = theta.signal()[missing]
    out = grid.with_data(np.where(missing, data, grid.data), None)
    return out, theta, ImputeReport(len(changes), converged, changes, n_missing, rep)
