"""Bidimensionally linked block grids, noise-scale estimation, preprocessing and penalties."""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from functools import lru_cache
from typing import Sequence

import numpy as np
from scipy import integrate

from .linalg import thin_svd


def _offsets(dims: Sequence[int]) -> np.ndarray:
    return np.concatenate([[0], np.cumsum(dims)]).astype(int)


@dataclass
class BlockGrid:
    """A p x q grid of blocks stored as one concatenated matrix.

    ``data[rows(i), cols(j)]`` is block ``X_ij`` (zero-based ``i, j`` here,
    one-based in block names).  ``mask`` is True where an entry is observed;
    missing entries hold NaN and are never read by the numeric kernels.
    """

    data: np.ndarray
    row_dims: tuple[int, ...]
    col_dims: tuple[int, ...]
    mask: np.ndarray | None = None

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=float)
        self.row_dims = tuple(int(m) for m in self.row_dims)
        self.col_dims = tuple(int(n) for n in self.col_dims)
        if any(m < 1 for m in self.row_dims) or any(n < 1 for n in self.col_dims):
            raise ValueError("block dimensions must be positive")
        if self.data.shape != (sum(self.row_dims), sum(self.col_dims)):
            raise ValueError(
                f"data shape {self.data.shape} does not match dims {self.row_dims} x {self.col_dims}"
            )
        if self.mask is not None:
            self.mask = np.asarray(self.mask, dtype=bool)
            if self.mask.shape != self.data.shape:
                raise ValueError("mask shape does not match data")
            if self.mask.all():
                self.mask = None
            else:
                self.data = self.data.copy()
                self.data[~self.mask] = np.nan
        if self.mask is None and not np.all(np.isfinite(self.data)):
            raise ValueError("unmasked data must be finite")
        self._ro = _offsets(self.row_dims)
        self._co = _offsets(self.col_dims)

    @classmethod
    def from_blocks(cls, blocks, mask_blocks=None) -> "BlockGrid":
        blocks = [[np.asarray(b, dtype=float) for b in row] for row in blocks]
        p, q = len(blocks), len(blocks[0])
        if any(len(row) != q for row in blocks):
            raise ValueError("ragged block grid")
        row_dims = [blocks[i][0].shape[0] for i in range(p)]
        col_dims = [blocks[0][j].shape[1] for j in range(q)]
        for i in range(p):
            for j in range(q):
                if blocks[i][j].shape != (row_dims[i], col_dims[j]):
                    raise ValueError(
                        f"block ({i + 1},{j + 1}) has shape {blocks[i][j].shape}, "
                        f"expected {(row_dims[i], col_dims[j])}"
                    )
        data = np.block(blocks)
        mask = None
        if mask_blocks is not None:
            mask = np.block([[np.asarray(b, dtype=bool) for b in row] for row in mask_blocks])
        return cls(data, tuple(row_dims), tuple(col_dims), mask)

    @property
    def p(self) -> int:
        return len(self.row_dims)

    @property
    def q(self) -> int:
        return len(self.col_dims)

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape

    @property
    def has_missing(self) -> bool:
        return self.mask is not None

    def rows(self, i: int) -> slice:
        return slice(self._ro[i], self._ro[i + 1])

    def cols(self, j: int) -> slice:
        return slice(self._co[j], self._co[j + 1])

    def block(self, i: int, j: int) -> np.ndarray:
        return self.data[self.rows(i), self.cols(j)]

    def block_mask(self, i: int, j: int) -> np.ndarray:
        if self.mask is None:
            return np.ones((self.row_dims[i], self.col_dims[j]), dtype=bool)
        return self.mask[self.rows(i), self.cols(j)]

    def blocks(self) -> list[list[np.ndarray]]:
        return [[self.block(i, j) for j in range(self.q)] for i in range(self.p)]

    def observed_mask(self) -> np.ndarray:
        return np.ones(self.shape, dtype=bool) if self.mask is None else self.mask

    def with_data(self, data: np.ndarray, mask=None) -> "BlockGrid":
        return BlockGrid(data, self.row_dims, self.col_dims, mask)


def assemble_concat(grid: BlockGrid, which: str = "full", index: int | None = None) -> np.ndarray:
    """Concatenated view: ``full`` (A_00), ``row`` block i (A_i0) or ``col`` block j (A_0j).

    Indices are one-based as in the block names.
    """
    if which == "full":
        return grid.data.copy()
    if index is None:
        raise ValueError(f"{which!r} concatenation needs an index")
    if which == "row":
        if not 1 <= index <= grid.p:
            raise IndexError(f"row block {index} out of range 1..{grid.p}")
        return grid.data[grid.rows(index - 1), :].copy()
    if which == "col":
        if not 1 <= index <= grid.q:
            raise IndexError(f"column block {index} out of range 1..{grid.q}")
        return grid.data[:, grid.cols(index - 1)].copy()
    raise ValueError(f"unknown concatenation {which!r}")


# --- Marcenko-Pastur --------------------------------------------------------

def _mp_edges(beta: float) -> tuple[float, float]:
    return (1 - np.sqrt(beta)) ** 2, (1 + np.sqrt(beta)) ** 2


def _mp_angle_density(theta: float, beta: float) -> float:
    # density after x = a + (b - a)(1 - cos t)/2, which removes the edge singularities
    a, b = _mp_edges(beta)
    half = (b - a) / 2
    x = a + half * (1 - np.cos(theta))
    if x <= 0:
        return half / (np.pi * beta)
    return half * half * np.sin(theta) ** 2 / (2 * np.pi * beta * x)


def _angle_of(x: float, beta: float) -> float:
    a, b = _mp_edges(beta)
    c = 1 - 2 * (x - a) / (b - a)
    return float(np.arccos(np.clip(c, -1.0, 1.0)))


def mp_cdf(x: float, beta: float) -> float:
    """Marcenko-Pastur distribution function (unit variance, aspect ratio ``beta``)."""
    _check_beta(beta)
    a, b = _mp_edges(beta)
    if x <= a:
        return 0.0
    if x >= b:
        return 1.0
    val, _ = integrate.quad(_mp_angle_density, 0.0, _angle_of(x, beta), args=(beta,), epsabs=1e-12, epsrel=1e-12)
    return float(val)


def _check_beta(beta: float) -> None:
    if not (0 < beta <= 1):
        raise ValueError(f"aspect ratio beta must lie in (0, 1], got {beta}")


@lru_cache(maxsize=256)
def mp_median(beta: float, tol: float = 1e-10) -> float:
    """Median of the Marcenko-Pastur law, found by bisection on its CDF."""
    _check_beta(beta)
    lo, hi = _mp_edges(beta)
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if mp_cdf(mid, beta) < 0.5:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def estimate_sigma_mad(x) -> float:
    """Noise standard deviation from the median singular value.

    sigma = median(singular values) / sqrt(max(m, n) * mu_beta), with mu_beta
    the Marcenko-Pastur median for beta = min(m, n) / max(m, n).
    """
    x = np.asarray(x, dtype=float)
    m, n = x.shape
    if min(m, n) < 2:
        raise ValueError(f"need at least a 2x2 matrix to estimate noise, got {m}x{n}")
    d = thin_svd(x).singular_values
    beta = min(m, n) / max(m, n)
    return float(np.median(d) / np.sqrt(max(m, n) * mp_median(beta)))


# --- preprocessing ----------------------------------------------------------

class Centering(str, Enum):
    OVERALL = "overall"
    ROWWISE = "row-wise-across-grid"
    NONE = "none"


@dataclass
class ScaleInfo:
    """Per-block centering offsets and noise scales needed to undo preprocessing.

    ``center_offsets[i][j]`` broadcasts against block (i, j): a scalar for
    overall centering, an ``m_i x 1`` column for row-wise centering.
    """

    center_offsets: list[list[np.ndarray]]
    sigma_hat: np.ndarray
    centering_mode: Centering = Centering.OVERALL

    def to_dict(self) -> dict:
        return {
            "centering_mode": self.centering_mode.value,
            "sigma_hat": self.sigma_hat.tolist(),
            "center_offsets": [[np.asarray(o).tolist() for o in row] for row in self.center_offsets],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ScaleInfo":
        return cls(
            [[np.asarray(o, dtype=float) for o in row] for row in d["center_offsets"]],
            np.asarray(d["sigma_hat"], dtype=float),
            Centering(d["centering_mode"]),
        )


def _mean_filled(block: np.ndarray, observed: np.ndarray) -> np.ndarray:
    out = block.copy()
    if not observed.all():
        out[~observed] = block[observed].mean()
    return out


def preprocess(
    grid: BlockGrid,
    mode: Centering | str = Centering.OVERALL,
    sigma: np.ndarray | float | None = None,
) -> tuple[BlockGrid, ScaleInfo]:
    """Center each block and divide it by its estimated noise scale.

    Missing entries are left out of the means; noise scales are estimated on
    a mean-filled copy.  A fixed ``sigma`` (scalar or p x q) skips estimation.
    """
    mode = Centering(mode)
    p, q = grid.p, grid.q
    obs = grid.observed_mask()
    for i in range(p):
        for j in range(q):
            if not grid.block_mask(i, j).any():
                raise ValueError(f"block ({i + 1},{j + 1}) has no observed entries")

    offsets: list[list[np.ndarray]] = [[np.zeros(()) for _ in range(q)] for _ in range(p)]
    if mode is Centering.OVERALL:
        for i in range(p):
            for j in range(q):
                offsets[i][j] = np.asarray(grid.block(i, j)[grid.block_mask(i, j)].mean())
    elif mode is Centering.ROWWISE:
        for i in range(p):
            rows = grid.data[grid.rows(i)]
            ob = obs[grid.rows(i)]
            cnt = ob.sum(axis=1)
            tot = np.where(ob, rows, 0.0).sum(axis=1)
            fallback = rows[ob].mean()
            mu = np.where(cnt > 0, tot / np.maximum(cnt, 1), fallback)[:, None]
            for j in range(q):
                offsets[i][j] = mu

    centered = grid.data.copy()
    for i in range(p):
        for j in range(q):
            centered[grid.rows(i), grid.cols(j)] -= offsets[i][j]

    if sigma is None:
        sig = np.empty((p, q))
        for i in range(p):
            for j in range(q):
                blk = centered[grid.rows(i), grid.cols(j)]
                sig[i, j] = estimate_sigma_mad(_mean_filled(blk, grid.block_mask(i, j)))
    else:
        sig = np.broadcast_to(np.asarray(sigma, dtype=float), (p, q)).copy()
    if np.any(~(sig > 0)):
        raise ValueError("noise scale estimates must be positive")

    scaled = centered
    for i in range(p):
        for j in range(q):
            scaled[grid.rows(i), grid.cols(j)] /= sig[i, j]
    return grid.with_data(scaled, grid.mask), ScaleInfo(offsets, sig, mode)


def back_transform(grid: BlockGrid, info: ScaleInfo) -> BlockGrid:
    """Undo :func:`preprocess` (multiply by sigma, add the offsets back)."""
    out = grid.data.copy()
    for i in range(grid.p):
        for j in range(grid.q):
            r, c = grid.rows(i), grid.cols(j)
            out[r, c] = out[r, c] * info.sigma_hat[i, j] + info.center_offsets[i][j]
    return grid.with_data(out, grid.mask)


def rescale_blocks(mat: np.ndarray, grid: BlockGrid, factors: np.ndarray) -> np.ndarray:
    """Multiply block (i, j) of a full-size matrix by ``factors[i, j]``."""
    out = np.array(mat, dtype=float, copy=True)
    for i in range(grid.p):
        for j in range(grid.q):
            out[grid.rows(i), grid.cols(j)] *= factors[i, j]
    return out


# --- penalties --------------------------------------------------------------

@dataclass
class PenaltyScheme:
    """Penalty factors indexed like the components.

    ``lam[0, 0]`` is the global penalty, ``lam[i, 0]`` row-shared,
    ``lam[0, j]`` column-shared and ``lam[i, j]`` individual (one-based i, j).
    """

    lam: np.ndarray

    def __post_init__(self):
        self.lam = np.array(self.lam, dtype=float)
        if self.lam.ndim != 2 or min(self.lam.shape) < 2:
            raise ValueError("penalty array must be (p+1) x (q+1)")
        if np.any(self.lam < 0) or not np.all(np.isfinite(self.lam)):
            raise ValueError("penalties must be finite and nonnegative")

    @property
    def p(self) -> int:
        return self.lam.shape[0] - 1

    @property
    def q(self) -> int:
        return self.lam.shape[1] - 1

    @property
    def global_(self) -> float:
        return float(self.lam[0, 0])

    def row(self, i: int) -> float:
        return float(self.lam[i, 0])

    def col(self, j: int) -> float:
        return float(self.lam[0, j])

    def indiv(self, i: int, j: int) -> float:
        return float(self.lam[i, j])

    def scaled(self, factor: float) -> "PenaltyScheme":
        return PenaltyScheme(self.lam * factor)

    def copy(self) -> "PenaltyScheme":
        return PenaltyScheme(self.lam.copy())


def default_penalties(row_dims: Sequence[int], col_dims: Sequence[int]) -> PenaltyScheme:
    """sqrt(m_i) + sqrt(n_j), with m_0 and n_0 the total dimensions."""
    m = np.concatenate([[sum(row_dims)], row_dims]).astype(float)
    n = np.concatenate([[sum(col_dims)], col_dims]).astype(float)
    if np.any(m <= 0) or np.any(n <= 0):
        raise ValueError("dimensions must be positive")
    return PenaltyScheme(np.sqrt(m)[:, None] + np.sqrt(n)[None, :])


@dataclass(frozen=True)
class Violation:
    inequality: str
    component: str

    def __str__(self) -> str:
        return f"{self.component} forced to zero: {self.inequality} fails"


def validate_penalties(scheme: PenaltyScheme, p: int | None = None, q: int | None = None) -> list[Violation]:
    """Check the strict inequalities a scheme needs for every component to be able to be nonzero.

    Each violation names the inequality and the component that the
    violation forces to zero at every minimizer.
    """
    lam = scheme.lam
    p = scheme.p if p is None else p
    q = scheme.q if q is None else q
    if lam.shape != (p + 1, q + 1):
        raise ValueError(f"scheme shape {lam.shape} does not match a {p}x{q} grid")
    out: list[Violation] = []
    for i in range(1, p + 1):
        for j in range(1, q + 1):
            if not lam[i, j] < lam[i, 0]:
                out.append(Violation(f"max_j lambda_{i}j < lambda_{i}0 (lambda_{i}{j} >= lambda_{i}0)", f"I_{i}{j}"))
        if not lam[i, 0] < lam[i, 1:].sum():
            out.append(Violation(f"lambda_{i}0 < sum_j lambda_{i}j", f"R_{i}0"))
    for j in range(1, q + 1):
        for i in range(1, p + 1):
            if not lam[i, j] < lam[0, j]:
                out.append(Violation(f"max_i lambda_i{j} < lambda_0{j} (lambda_{i}{j} >= lambda_0{j})", f"I_{i}{j}"))
        if not lam[0, j] < lam[1:, j].sum():
            out.append(Violation(f"lambda_0{j} < sum_i lambda_i{j}", f"C_0{j}"))
    for i in range(1, p + 1):
        if not lam[i, 0] < lam[0, 0]:
            out.append(Violation(f"max_i lambda_i0 < lambda_00 (lambda_{i}0 >= lambda_00)", f"R_{i}0"))
    if not lam[0, 0] < lam[1:, 0].sum():
        out.append(Violation("lambda_00 < sum_i lambda_i0", "G_00"))
    for j in range(1, q + 1):
        if not lam[0, j] < lam[0, 0]:
            out.append(Violation(f"max_j lambda_0j < lambda_00 (lambda_0{j} >= lambda_00)", f"C_0{j}"))
    if not lam[0, 0] < lam[0, 1:].sum():
        out.append(Violation("lambda_00 < sum_j lambda_0j", "G_00"))
    return out
