"""Evaluation quantities: R^2, reconstruction and imputation errors, SWISS, residual summaries."""
from __future__ import annotations

from typing import Sequence

import numpy as np

from .linalg import DEFAULT_RANK_TOL, numerical_rank


UNDEFINED = None  # rendered as "-" in reports


def r_squared(x, component) -> float:
    """Proportion of variability of ``x`` explained by ``component``."""
    x = np.asarray(x, dtype=float)
    component = np.asarray(component, dtype=float)
    if x.shape != component.shape:
        raise ValueError(f"shape mismatch {x.shape} vs {component.shape}")
    denom = float(np.sum(x * x))
    if denom == 0:
        raise ValueError("R^2 undefined for an all-zero matrix")
    return 1.0 - float(np.sum((x - component) ** 2)) / denom


def _pairs(true_blocks, est_blocks):
    t = [np.asarray(b, dtype=float) for b in _flatten(true_blocks)]
    e = [np.asarray(b, dtype=float) for b in _flatten(est_blocks)]
    if len(t) != len(e) or any(a.shape != b.shape for a, b in zip(t, e)):
        raise ValueError("true and estimated blocks do not match")
    return t, e


def _flatten(blocks):
    if isinstance(blocks, np.ndarray):
        return [blocks]
    out = []
    for b in blocks:
        if isinstance(b, np.ndarray):
            out.append(b)
        else:
            out.extend(_flatten(b))
    return out


def pred_err(true_blocks, est_blocks) -> float | None:
    """Relative squared reconstruction error summed over blocks.

    Returns ``None`` when the true blocks carry no signal (metric undefined).
    """
    t, e = _pairs(true_blocks, est_blocks)
    denom = sum(float(np.sum(a * a)) for a in t)
    if denom == 0:
        return UNDEFINED
    return sum(float(np.sum((a - b) ** 2)) for a, b in zip(t, e)) / denom


def impute_err(true_blocks, est_blocks, missing_masks) -> float:
    """Relative squared error restricted to the missing cells (``True`` = missing)."""
    t, e = _pairs(true_blocks, est_blocks)
    masks = [np.asarray(m, dtype=bool) for m in _flatten(missing_masks)]
    if len(masks) != len(t):
        raise ValueError("one missing mask per block is required")
    if not any(m.any() for m in masks):
        raise ValueError("no missing cells")
    num = sum(float(np.sum((a[m] - b[m]) ** 2)) for a, b, m in zip(t, e, masks))
    den = sum(float(np.sum(a[m] ** 2)) for a, m in zip(t, masks))
    if den == 0:
        raise ValueError("true signal is zero on the missing cells")
    return num / den


def mean_rel_error(true_components: Sequence[np.ndarray], est_components: Sequence[np.ndarray]) -> float:
    """Average of per-component relative squared errors (joint and individual pairs)."""
    if len(true_components) != len(est_components):
        raise ValueError("component lists differ in length")
    errs = []
    for a, b in zip(true_components, est_components):
        a = np.asarray(a, dtype=float)
        den = float(np.sum(a * a))
        if den == 0:
            raise ValueError("zero-norm true component")
        errs.append(float(np.sum((a - np.asarray(b)) ** 2)) / den)
    return float(np.mean(errs))


def swiss(scores, labels) -> float:
    """Standardized within-class sum of squares of the rows of ``scores``."""
    x = np.asarray(scores, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    labels = np.asarray(labels)
    if x.shape[0] < 2 or labels.shape[0] != x.shape[0]:
        raise ValueError("need at least two labelled samples")
    total = float(np.sum((x - x.mean(axis=0)) ** 2))
    if total == 0:
        raise ValueError("total sum of squares is zero")
    within = 0.0
    for k in np.unique(labels):
        grp = x[labels == k]
        within += float(np.sum((grp - grp.mean(axis=0)) ** 2))
    return within / total


def variance_table(grid, theta, tol: float = DEFAULT_RANK_TOL) -> list[dict]:
    """Per-block R^2 of nested component sums, with numerical ranks.

    Columns follow the usual layout: Global, Global+Row, Global+Col,
    Global+Row+Col and Signal.
    """
    rows = []
    for i in range(grid.p):
        for j in range(grid.q):
            x = grid.block(i, j)
            g = theta.block("G", i, j)
            r = theta.block("R", i, j)
            c = theta.block("C", i, j)
            s = theta.block("S", i, j)
            entry = {"block": f"{i + 1}{j + 1}"}
            for name, mat in (
                ("global", g),
                ("global+row", g + r),
                ("global+col", g + c),
                ("global+row+col", g + r + c),
                ("signal", s),
            ):
                ok = np.any(x)
                entry[name] = {
                    "r2": r_squared(x, mat) if ok else None,
                    "rank": numerical_rank(mat, tol) if np.any(mat) else 0,
                }
            rows.append(entry)
    return rows


def format_variance_table(table: list[dict]) -> str:
    cols = ["global", "global+row", "global+col", "global+row+col", "signal"]
    lines = ["block  " + "  ".join(f"{c:>16s}" for c in cols)]
    for entry in table:
        cells = []
        for c in cols:
            r2 = entry[c]["r2"]
            txt = "-" if r2 is None else f"{r2:.2f}"
            cells.append(f"{txt + ' (' + str(entry[c]['rank']) + ')':>16s}")
        lines.append(f"{entry['block']:>5s}  " + "  ".join(cells))
    return "\n".join(lines)


def residual_diagnostics(grid, theta, scale_info=None, bins: int = 50, width: float = 4.0) -> list[dict]:
    """Residual summaries per block, compared against the preprocessing noise estimate.

    Residuals are taken on observed entries of ``grid``.  With ``scale_info``
    the sigma estimate and the residuals are reported on the original scale
    (the grid and components are assumed to be in the scaled space).
    """
    out = []
    for i in range(grid.p):
        for j in range(grid.q):
            obs = grid.block_mask(i, j)
            res = (grid.block(i, j) - theta.block("S", i, j))[obs]
            sigma_hat = 1.0
            if scale_info is not None:
                sigma_hat = float(scale_info.sigma_hat[i, j])
                res = res * sigma_hat
            mean = float(res.mean())
            sd = float(res.std(ddof=1)) if res.size > 1 else 0.0
            span = width * sd if sd > 0 else 1.0
            edges = np.linspace(mean - span, mean + span, bins + 1)
            clipped = np.clip(res, edges[0], edges[-1])
            counts, _ = np.histogram(clipped, bins=edges)
            out.append({
                "block": f"{i + 1}{j + 1}",
                "n": int(res.size),
                "mean": mean,
                "sd": sd,
                "sigma_hat_mad": sigma_hat,
                "sd_over_sigma_hat": sd / sigma_hat,
                "bin_edges": edges.tolist(),
                "counts": counts.tolist(),
            })
    return out


def component_rank(a, tol: float = DEFAULT_RANK_TOL) -> int:
    return numerical_rank(a, tol) if np.any(a) else 0
