"""Synthetic linked data with known global, row-shared, column-shared and individual structure."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .linked import BlockGrid
from .solver import Decomposition

NOISELESS_SCENARIOS = {
    "d100_n100": (100, 100),
    "d500_n100": (500, 100),
    "d100_n500": (100, 500),
    "d500_n500": (500, 500),
}


def make_rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def replicate_rng(seed: int, *stream) -> np.random.Generator:
    """Counter-based generator for replicate ``stream`` of a run seeded with ``seed``.

    Philox keyed by the seed sequence of ``(seed, *stream)``; results depend
    only on those integers, never on worker scheduling.
    """
    ss = np.random.SeedSequence([int(seed), *[int(s) for s in stream]])
    return np.random.Generator(np.random.Philox(ss))


@dataclass
class SimParams:
    design: str = "design2"
    row_dims: tuple[int, ...] = (100, 100)
    col_dims: tuple[int, ...] = (100, 100)
    total_rank: int = 10
    # a positive number, or "mixed" for per-block Uniform(snr_range)
    snr: float | str = 1.0
    snr_range: tuple[float, float] = (0.5, 2.0)
    seed: int | None = 0

    def __post_init__(self):
        if self.design not in ("design1", "design2"):
            raise ValueError(f"unknown design {self.design!r}")
        if self.snr != "mixed" and not float(self.snr) > 0:
            raise ValueError("snr must be positive or 'mixed'")
        if self.total_rank < 0:
            raise ValueError("total_rank must be nonnegative")
        if self.total_rank > min(min(m, n) for m in self.row_dims for n in self.col_dims):
            raise ValueError("total_rank exceeds a block dimension")
        lo, hi = self.snr_range
        if not 0 < lo <= hi:
            raise ValueError("invalid snr_range")

    @property
    def p(self) -> int:
        return len(self.row_dims)

    @property
    def q(self) -> int:
        return len(self.col_dims)


@dataclass
class GroundTruth:
    theta: Decomposition
    sigma: np.ndarray
    ranks: dict = field(default_factory=dict)
    snr: np.ndarray | None = None

    def signal_blocks(self) -> list[list[np.ndarray]]:
        th = self.theta
        return [[th.block("S", i, j) for j in range(th.q)] for i in range(th.p)]


def rank_split(total: int, k: int, seed=None) -> np.ndarray:
    """Split ``total`` across ``k`` terms with a uniform multinomial draw."""
    if total < 0:
        raise ValueError("total must be nonnegative")
    if k < 1:
        raise ValueError("k must be positive")
    rng = make_rng(seed)
    return rng.multinomial(total, np.full(k, 1.0 / k))


def _orthonormal(rng: np.random.Generator, n: int, k: int) -> np.ndarray:
    if k == 0:
        return np.zeros((n, 0))
    q, r = np.linalg.qr(rng.standard_normal((n, k)))
    return q * np.sign(np.diag(r))


def _feasible(ranks: dict, row_dims, col_dims) -> bool:
    p, q = len(row_dims), len(col_dims)
    for n in col_dims:
        if ranks["G"] + ranks["C"] + p * (ranks["R"] + ranks["I"]) > n:
            return False
    for m in row_dims:
        if ranks["G"] + ranks["R"] + q * (ranks["C"] + ranks["I"]) > m:
            return False
    return True


def generate_design(params: SimParams) -> tuple[BlockGrid, GroundTruth]:
    """Draw one data set from simulation design 1 or 2.

    Design 1 has only column-shared and individual structure; design 2 has
    all four terms.  Every component uses its own slice of an orthonormal
    basis per row block and per column block, so distinct terms are
    orthogonal both within a block and across blocks.  Shared terms reuse
    loadings/scores across blocks with singular values permuted per block.
    Each block's signal is scaled to unit Frobenius norm before noise with
    sd ``1 / (snr * sqrt(m_i n_j))`` is added.
    """
    rng = make_rng(params.seed)
    row_dims, col_dims = params.row_dims, params.col_dims
    p, q = params.p, params.q
    kinds = ("C", "I") if params.design == "design1" else ("G", "R", "C", "I")

    for _ in range(1000):
        draw = rank_split(params.total_rank, len(kinds), rng)
        ranks = {"G": 0, "R": 0, "C": 0, "I": 0}
        ranks.update(dict(zip(kinds, (int(v) for v in draw))))
        if _feasible(ranks, row_dims, col_dims):
            break
    else:
        raise ValueError("could not draw a feasible rank split for these dimensions")
    rG, rR, rC, rI = ranks["G"], ranks["R"], ranks["C"], ranks["I"]

    # score bases per column block, loading bases per row block
    Vg, Vc, Vr, Vi = [], [], [[None] * q for _ in range(p)], [[None] * q for _ in range(p)]
    for j, n in enumerate(col_dims):
        basis = _orthonormal(rng, n, rG + rC + p * (rR + rI))
        Vg.append(basis[:, :rG])
        Vc.append(basis[:, rG:rG + rC])
        off = rG + rC
        for i in range(p):
            Vr[i][j] = basis[:, off:off + rR]
            Vi[i][j] = basis[:, off + rR:off + rR + rI]
            off += rR + rI
    Ug, Ur, Uc, Ui = [], [], [[None] * q for _ in range(p)], [[None] * q for _ in range(p)]
    for i, m in enumerate(row_dims):
        basis = _orthonormal(rng, m, rG + rR + q * (rC + rI))
        Ug.append(basis[:, :rG])
        Ur.append(basis[:, rG:rG + rR])
        off = rG + rR
        for j in range(q):
            Uc[i][j] = basis[:, off:off + rC]
            Ui[i][j] = basis[:, off + rC:off + rC + rI]
            off += rC + rI

    def top_singular_values(m, n, k):
        if k == 0:
            return np.zeros(0)
        d = np.linalg.svd(rng.standard_normal((m, n)), compute_uv=False)
        return d[:k]

    # global term: singular values a_i * b_j keep G_00 at rank rG
    g = np.sqrt(top_singular_values(row_dims[0], col_dims[0], rG))
    a = [rng.permutation(g) for _ in range(p)]
    b = [rng.permutation(g) for _ in range(q)]

    blocks = {k: [[None] * q for _ in range(p)] for k in "GRCI"}
    for i, m in enumerate(row_dims):
        for j, n in enumerate(col_dims):
            d = rng.permutation(top_singular_values(m, n, rR + rC + rI))
            dR, dC, dI = d[:rR], d[rR:rR + rC], d[rR + rC:]
            blocks["G"][i][j] = (Ug[i] * (a[i] * b[j])) @ Vg[j].T
            blocks["R"][i][j] = (Ur[i] * dR) @ Vr[i][j].T
            blocks["C"][i][j] = (Uc[i][j] * dC) @ Vc[j].T
            blocks["I"][i][j] = (Ui[i][j] * dI) @ Vi[i][j].T
            s = sum(blocks[k][i][j] for k in "GRCI")
            norm = np.linalg.norm(s)
            if norm > 0:
                for k in "GRCI":
                    blocks[k][i][j] = blocks[k][i][j] / norm

    theta = Decomposition(
        np.block(blocks["G"]),
        [np.hstack(blocks["R"][i]) for i in range(p)],
        [np.vstack([blocks["C"][i][j] for i in range(p)]) for j in range(q)],
        [[blocks["I"][i][j] for j in range(q)] for i in range(p)],
        row_dims,
        col_dims,
    )

    if params.snr == "mixed":
        snr = rng.uniform(*params.snr_range, size=(p, q))
    else:
        snr = np.full((p, q), float(params.snr))
    sigma = np.empty((p, q))
    data = theta.signal().copy()
    for i, m in enumerate(row_dims):
        for j, n in enumerate(col_dims):
            sigma[i, j] = 1.0 / (snr[i, j] * np.sqrt(m * n))
            data[theta.rows(i), theta.cols(j)] += sigma[i, j] * rng.standard_normal((m, n))
    grid = BlockGrid(data, row_dims, col_dims)
    return grid, GroundTruth(theta, sigma, ranks, snr)


def generate_noiseless_unifac(
    scenario: str | tuple[int, int] = "d100_n100",
    r: int = 10,
    r1: int | None = None,
    r2: int | None = None,
    seed=None,
) -> tuple[BlockGrid, GroundTruth]:
    """Two vertically stacked blocks ``X_i = U_i^C V^T + U_i^I V_i^T`` without noise.

    All factor entries are independent standard normal; the joint and
    individual terms are independent but not orthogonal.
    """
    d, n = NOISELESS_SCENARIOS[scenario] if isinstance(scenario, str) else scenario
    r1 = r if r1 is None else r1
    r2 = r if r2 is None else r2
    if max(r, r1, r2) > min(d, n):
        raise ValueError("ranks exceed the matrix dimensions")
    rng = make_rng(seed)
    V = rng.standard_normal((n, r))
    joint = [rng.standard_normal((d, r)) @ V.T for _ in range(2)]
    indiv = []
    for ri in (r1, r2):
        indiv.append(rng.standard_normal((d, ri)) @ rng.standard_normal((n, ri)).T)
    theta = Decomposition(
        np.zeros((2 * d, n)),
        [np.zeros((d, n)), np.zeros((d, n))],
        [np.vstack(joint)],
        [[indiv[0]], [indiv[1]]],
        (d, d),
        (n,),
    )
    grid = BlockGrid(theta.signal(), (d, d), (n,))
    return grid, GroundTruth(theta, np.zeros((2, 1)), {"C": r, "I": (r1, r2)})


def missing_mask(row_dims, col_dims, kind: str, count: int, seed=None) -> np.ndarray:
    """Observation mask (True = observed) for one of the missingness scenarios.

    ``cells``: ``count`` random cells per block.  ``columns``: ``count``
    whole columns per block, never the same column in two blocks of one
    column block.  ``rows``: the same for rows within a row block.
    """
    rng = make_rng(seed)
    p, q = len(row_dims), len(col_dims)
    ro = np.concatenate([[0], np.cumsum(row_dims)])
    co = np.concatenate([[0], np.cumsum(col_dims)])
    mask = np.ones((ro[-1], co[-1]), dtype=bool)
    if count < 0:
        raise ValueError("count must be nonnegative")
    if kind == "cells":
        for i in range(p):
            for j in range(q):
                m, n = row_dims[i], col_dims[j]
                if count > m * n:
                    raise ValueError("more missing cells than block entries")
                flat = rng.choice(m * n, size=count, replace=False)
                blk = np.ones(m * n, dtype=bool)
                blk[flat] = False
                mask[ro[i]:ro[i + 1], co[j]:co[j + 1]] = blk.reshape(m, n)
    elif kind == "columns":
        for j in range(q):
            n = col_dims[j]
            if p * count > n:
                raise ValueError("not enough columns for non-overlapping missingness")
            picks = rng.choice(n, size=p * count, replace=False)
            for i in range(p):
                cols = co[j] + picks[i * count:(i + 1) * count]
                mask[ro[i]:ro[i + 1], cols] = False
    elif kind == "rows":
        for i in range(p):
            m = row_dims[i]
            if q * count > m:
                raise ValueError("not enough rows for non-overlapping missingness")
            picks = rng.choice(m, size=q * count, replace=False)
            for j in range(q):
                rows = ro[i] + picks[j * count:(j + 1) * count]
                mask[rows, co[j]:co[j + 1]] = False
    else:
        raise ValueError(f"unknown missingness kind {kind!r}")
    return mask
