"""Minimizers of the structured nuclear-norm objective.

Components follow the block naming of the model: one global matrix ``G``
(m_0 x n_0), row-shared ``R[i]`` (m_i x n_0), column-shared ``C[j]``
(m_0 x n_j) and individual ``I[i][j]`` (m_i x n_j).  Indices are zero-based
in code; penalties use the ``(p+1) x (q+1)`` layout of
:class:`~bidifac.linked.PenaltyScheme`.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .linalg import DEFAULT_RANK_TOL, numerical_rank, range_basis, thin_svd
from .linked import BlockGrid, PenaltyScheme, _offsets

log = logging.getLogger(__name__)

COMPONENTS = ("G", "R", "C", "I")


class NonFiniteObjectiveError(FloatingPointError):
    pass


@dataclass
class Decomposition:
    G: np.ndarray
    R: list[np.ndarray]
    C: list[np.ndarray]
    I: list[list[np.ndarray]]
    row_dims: tuple[int, ...]
    col_dims: tuple[int, ...]

    def __post_init__(self):
        self.row_dims = tuple(int(m) for m in self.row_dims)
        self.col_dims = tuple(int(n) for n in self.col_dims)
        m0, n0 = sum(self.row_dims), sum(self.col_dims)
        p, q = len(self.row_dims), len(self.col_dims)
        if self.G.shape != (m0, n0):
            raise ValueError(f"G has shape {self.G.shape}, expected {(m0, n0)}")
        if len(self.R) != p or any(r.shape != (m, n0) for r, m in zip(self.R, self.row_dims)):
            raise ValueError("row-shared components do not match the grid")
        if len(self.C) != q or any(c.shape != (m0, n) for c, n in zip(self.C, self.col_dims)):
            raise ValueError("column-shared components do not match the grid")
        if len(self.I) != p or any(len(row) != q for row in self.I):
            raise ValueError("individual components do not match the grid")
        for i, m in enumerate(self.row_dims):
            for j, n in enumerate(self.col_dims):
                if self.I[i][j].shape != (m, n):
                    raise ValueError(f"I[{i}][{j}] has shape {self.I[i][j].shape}, expected {(m, n)}")
        self._ro = _offsets(self.row_dims)
        self._co = _offsets(self.col_dims)

    @classmethod
    def zeros(cls, row_dims: Sequence[int], col_dims: Sequence[int]) -> "Decomposition":
        m0, n0 = sum(row_dims), sum(col_dims)
        return cls(
            np.zeros((m0, n0)),
            [np.zeros((m, n0)) for m in row_dims],
            [np.zeros((m0, n)) for n in col_dims],
            [[np.zeros((m, n)) for n in col_dims] for m in row_dims],
            tuple(row_dims),
            tuple(col_dims),
        )

    @property
    def p(self) -> int:
        return len(self.row_dims)

    @property
    def q(self) -> int:
        return len(self.col_dims)

    def rows(self, i: int) -> slice:
        return slice(self._ro[i], self._ro[i + 1])

    def cols(self, j: int) -> slice:
        return slice(self._co[j], self._co[j + 1])

    def copy(self) -> "Decomposition":
        return Decomposition(
            self.G.copy(),
            [r.copy() for r in self.R],
            [c.copy() for c in self.C],
            [[x.copy() for x in row] for row in self.I],
            self.row_dims,
            self.col_dims,
        )

    # full-size (m_0 x n_0) views of each component type
    def G_full(self) -> np.ndarray:
        return self.G

    def R_full(self) -> np.ndarray:
        return np.vstack(self.R)

    def C_full(self) -> np.ndarray:
        return np.hstack(self.C)

    def I_full(self) -> np.ndarray:
        return np.block(self.I)

    def full(self, kind: str) -> np.ndarray:
        return {"G": self.G_full, "R": self.R_full, "C": self.C_full, "I": self.I_full}[kind]()

    def signal(self) -> np.ndarray:
        return self.G + self.R_full() + self.C_full() + self.I_full()

    def block(self, kind: str, i: int, j: int) -> np.ndarray:
        """Block (i, j) of a component type (``G``, ``R``, ``C``, ``I`` or ``S``)."""
        r, c = self.rows(i), self.cols(j)
        if kind == "G":
            return self.G[r, c]
        if kind == "R":
            return self.R[i][:, c]
        if kind == "C":
            return self.C[j][r, :]
        if kind == "I":
            return self.I[i][j]
        if kind == "S":
            return self.G[r, c] + self.R[i][:, c] + self.C[j][r, :] + self.I[i][j]
        raise ValueError(f"unknown component {kind!r}")

    def scale_blocks(self, factors: np.ndarray) -> "Decomposition":
        """Multiply every component's block (i, j) by ``factors[i, j]``."""
        out = self.copy()
        for i in range(self.p):
            for j in range(self.q):
                f = factors[i, j]
                r, c = self.rows(i), self.cols(j)
                out.G[r, c] *= f
                out.R[i][:, c] *= f
                out.C[j][r, :] *= f
                out.I[i][j] *= f
        return out

    def named_components(self) -> dict[str, np.ndarray]:
        out = {"G_00": self.G}
        out.update({f"R_{i + 1}0": r for i, r in enumerate(self.R)})
        out.update({f"C_0{j + 1}": c for j, c in enumerate(self.C)})
        for i in range(self.p):
            for j in range(self.q):
                out[f"I_{i + 1}{j + 1}"] = self.I[i][j]
        return out


def compose_signal(theta: Decomposition) -> list[list[np.ndarray]]:
    """Per-block signal ``S_ij = G_ij + R_ij + C_ij + I_ij``."""
    return [[theta.block("S", i, j) for j in range(theta.q)] for i in range(theta.p)]


@dataclass
class SolverConfig:
    rel_tol: float = 1e-8
    max_iter: int = 500
    solver: str = "issvt"
    init: Decomposition | None = None
    rank_caps: np.ndarray | None = None
    # FISTA-style extrapolation of the shared blocks with monotone restart
    accelerate: bool = False
    # fit inside the row/column spaces spanned by the data (exact, see _Compression)
    compress: bool = True
    # drop terms that are redundant when p == 1 or q == 1
    suppress_redundant: bool = True
    track_updates: bool = False

    def __post_init__(self):
        if not self.rel_tol > 0:
            raise ValueError("rel_tol must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be at least 1")
        if self.solver not in ("issvt", "als"):
            raise ValueError(f"unknown solver {self.solver!r}")


@dataclass
class FitReport:
    objective_trace: list[float]
    iterations: int
    converged: bool
    component_ranks: dict[str, int] = field(default_factory=dict)
    variance_explained: list[dict] = field(default_factory=list)
    update_trace: list[float] = field(default_factory=list)
    restarts: int = 0
    solver: str = "issvt"

    def to_dict(self) -> dict:
        return {
            "solver": self.solver,
            "iterations": self.iterations,
            "converged": self.converged,
            "final_objective": self.objective_trace[-1] if self.objective_trace else None,
            "objective_trace": self.objective_trace,
            "component_ranks": self.component_ranks,
            "variance_explained": self.variance_explained,
            "restarts": self.restarts,
        }


def objective_f2(theta: Decomposition, grid: BlockGrid, scheme: PenaltyScheme) -> float:
    """Penalized least-squares objective; masked entries are left out of the residual."""
    if theta.row_dims != grid.row_dims or theta.col_dims != grid.col_dims:
        raise ValueError("decomposition and grid shapes differ")
    if scheme.lam.shape != (grid.p + 1, grid.q + 1):
        raise ValueError("penalty scheme does not match the grid")
    resid = grid.data - theta.signal()
    if grid.mask is not None:
        resid = np.where(grid.mask, resid, 0.0)
    val = 0.5 * float(np.sum(resid**2))
    lam = scheme.lam
    val += _penalty(lam[0, 0], theta.G)
    for i in range(grid.p):
        val += _penalty(lam[i + 1, 0], theta.R[i])
    for j in range(grid.q):
        val += _penalty(lam[0, j + 1], theta.C[j])
    for i in range(grid.p):
        for j in range(grid.q):
            val += _penalty(lam[i + 1, j + 1], theta.I[i][j])
    return val


def _penalty(lam: float, a: np.ndarray) -> float:
    if lam == 0 or not np.any(a):
        return 0.0
    return lam * float(np.sum(thin_svd(a).singular_values))


def _svt(target: np.ndarray, lam: float, cap: int | None) -> tuple[np.ndarray, float, int]:
    svd = thin_svd(target)
    d = np.maximum(svd.singular_values - lam, 0.0)
    k = int(np.count_nonzero(d > 0))
    if cap is not None:
        k = min(k, cap)
    if k == 0:
        return np.zeros_like(target), 0.0, 0
    return (svd.U[:, :k] * d[:k]) @ svd.V[:, :k].T, float(d[:k].sum()), k


# --- block structure shared by both solvers ---------------------------------

class _Layout:
    """Row/column slices of every update block of the objective."""

    def __init__(self, row_dims, col_dims, active: Iterable[str]):
        self.row_dims = tuple(row_dims)
        self.col_dims = tuple(col_dims)
        self.p, self.q = len(row_dims), len(col_dims)
        ro, co = _offsets(row_dims), _offsets(col_dims)
        self.rs = [slice(ro[i], ro[i + 1]) for i in range(self.p)]
        self.cs = [slice(co[j], co[j + 1]) for j in range(self.q)]
        full = slice(None)
        active = set(active)
        blocks = []
        # update order: G, R (i ascending), C (j ascending), I (row-major)
        if "G" in active:
            blocks.append(("G", None, (full, full), (0, 0)))
        if "R" in active:
            blocks += [("R", i, (self.rs[i], full), (i + 1, 0)) for i in range(self.p)]
        if "C" in active:
            blocks += [("C", j, (full, self.cs[j]), (0, j + 1)) for j in range(self.q)]
        if "I" in active:
            blocks += [
                ("I", (i, j), (self.rs[i], self.cs[j]), (i + 1, j + 1))
                for i in range(self.p)
                for j in range(self.q)
            ]
        self.blocks = blocks

    def shape_of(self, idx) -> tuple[int, int]:
        kind, key, (r, c), _ = self.blocks[idx]
        m = sum(self.row_dims) if r == slice(None) else r.stop - r.start
        n = sum(self.col_dims) if c == slice(None) else c.stop - c.start
        return m, n


def _active_components(p: int, q: int, config: SolverConfig, frozen: Iterable[str]) -> list[str]:
    active = [c for c in COMPONENTS if c not in set(frozen)]
    if config.suppress_redundant:
        if q == 1:
            active = [c for c in active if c not in ("G", "R")]
        if p == 1:
            active = [c for c in active if c not in ("G", "C")]
    return active


def _to_state(theta: Decomposition, layout: _Layout) -> list[np.ndarray]:
    state = []
    for kind, key, _, _ in layout.blocks:
        if kind == "G":
            state.append(theta.G.copy())
        elif kind == "R":
            state.append(theta.R[key].copy())
        elif kind == "C":
            state.append(theta.C[key].copy())
        else:
            state.append(theta.I[key[0]][key[1]].copy())
    return state


def _from_state(state: list[np.ndarray], layout: _Layout) -> Decomposition:
    theta = Decomposition.zeros(layout.row_dims, layout.col_dims)
    for (kind, key, _, _), a in zip(layout.blocks, state):
        if kind == "G":
            theta.G = a
        elif kind == "R":
            theta.R[key] = a
        elif kind == "C":
            theta.C[key] = a
        else:
            theta.I[key[0]][key[1]] = a
    return theta


def _residual(x: np.ndarray, state, layout: _Layout) -> np.ndarray:
    e = x.copy()
    for (_, _, sl, _), a in zip(layout.blocks, state):
        e[sl] -= a
    return e


# --- exact subspace compression ---------------------------------------------

class _Compression:
    """Restrict the problem to the spans of the data.

    With P = blockdiag(P_i) spanning the columns of each row concatenation
    X_i0 and Q = blockdiag(Q_j) spanning the rows of each column
    concatenation X_0j, replacing every component A by P P^T A Q Q^T never
    increases a nuclear norm or the residual, so some minimizer lies in the
    compressed space and its objective value is unchanged.
    """

    def __init__(self, grid_data: np.ndarray, row_dims, col_dims, tol: float = 1e-10):
        ro, co = _offsets(row_dims), _offsets(col_dims)
        self.P = [range_basis(grid_data[ro[i]:ro[i + 1], :], tol) for i in range(len(row_dims))]
        self.Q = [range_basis(grid_data[:, co[j]:co[j + 1]].T, tol) for j in range(len(col_dims))]
        self.row_dims = tuple(row_dims)
        self.col_dims = tuple(col_dims)
        self.small_rows = tuple(b.shape[1] for b in self.P)
        self.small_cols = tuple(b.shape[1] for b in self.Q)
        self.useful = (
            min(self.small_rows + self.small_cols) > 0
            and (self.small_rows != self.row_dims or self.small_cols != self.col_dims)
        )

    def _left(self) -> np.ndarray:
        return _blockdiag(self.P)

    def _right(self) -> np.ndarray:
        return _blockdiag(self.Q)

    def reduce(self, x: np.ndarray) -> np.ndarray:
        return self._left().T @ x @ self._right()

    def reduce_theta(self, theta: Decomposition) -> Decomposition:
        L, Rt = self._left(), self._right()
        return Decomposition(
            L.T @ theta.G @ Rt,
            [P.T @ r @ Rt for P, r in zip(self.P, theta.R)],
            [L.T @ c @ Q for Q, c in zip(self.Q, theta.C)],
            [[self.P[i].T @ theta.I[i][j] @ self.Q[j] for j in range(len(self.Q))] for i in range(len(self.P))],
            self.small_rows,
            self.small_cols,
        )

    def expand_theta(self, theta: Decomposition) -> Decomposition:
        L, Rt = self._left(), self._right()
        return Decomposition(
            L @ theta.G @ Rt.T,
            [P @ r @ Rt.T for P, r in zip(self.P, theta.R)],
            [L @ c @ Q.T for Q, c in zip(self.Q, theta.C)],
            [[self.P[i] @ theta.I[i][j] @ self.Q[j].T for j in range(len(self.Q))] for i in range(len(self.P))],
            self.row_dims,
            self.col_dims,
        )


def _blockdiag(mats: Sequence[np.ndarray]) -> np.ndarray:
    rows = sum(m.shape[0] for m in mats)
    cols = sum(m.shape[1] for m in mats)
    out = np.zeros((rows, cols))
    r = c = 0
    for m in mats:
        out[r:r + m.shape[0], c:c + m.shape[1]] = m
        r += m.shape[0]
        c += m.shape[1]
    return out


# --- ISSVT ------------------------------------------------------------------

class _Issvt:
    def __init__(self, x: np.ndarray, layout: _Layout, lam: np.ndarray, caps, track: bool):
        self.x = x
        self.layout = layout
        self.lam = [lam[pos] for (_, _, _, pos) in layout.blocks]
        self.caps = [None if caps is None else int(caps[pos]) for (_, _, _, pos) in layout.blocks]
        self.track = track
        self.update_trace: list[float] = []

    def objective(self, e: np.ndarray, nuc: list[float]) -> float:
        return 0.5 * float(np.sum(e * e)) + float(np.dot(self.lam, nuc))

    def nuclear(self, state) -> list[float]:
        return [0.0 if not np.any(a) else float(thin_svd(a).singular_values.sum()) for a in state]

    def update(self, k: int, state, e: np.ndarray, nuc: list[float]) -> None:
        sl = self.layout.blocks[k][2]
        target = e[sl] + state[k]
        new, nn, _ = _svt(target, self.lam[k], self.caps[k])
        e[sl] = target - new
        state[k] = new
        nuc[k] = nn
        if self.track:
            self.update_trace.append(self.objective(e, nuc))

    def sweep(self, state, e, nuc, order) -> None:
        for k in order:
            self.update(k, state, e, nuc)


def _fit_issvt(x, layout: _Layout, lam, config: SolverConfig, init_state) -> tuple[list, FitReport]:
    eng = _Issvt(x, layout, lam, config.rank_caps, config.track_updates)
    nblocks = len(layout.blocks)
    order = list(range(nblocks))
    shared = [k for k, b in enumerate(layout.blocks) if b[0] != "I"]
    indiv = [k for k, b in enumerate(layout.blocks) if b[0] == "I"]

    state = [a.copy() for a in init_state]
    nuc = eng.nuclear(state)
    e = _residual(x, state, layout)
    f = eng.objective(e, nuc)
    if eng.track:
        eng.update_trace.append(f)
    trace = [f]
    converged = False
    restarts = 0
    accelerate = config.accelerate and bool(shared)
    prev_shared = [state[k].copy() for k in shared]
    t = 1.0
    it = 0
    for it in range(1, config.max_iter + 1):
        if accelerate and t > 1.0:
            t_next = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
            beta = (t - 1.0) / t_next
            trial = [a.copy() for a in state]
            for slot, k in enumerate(shared):
                trial[k] = state[k] + beta * (state[k] - prev_shared[slot])
            te = _residual(x, trial, layout)
            tnuc = list(nuc)
            saved_track = eng.track
            eng.track = False
            # individual blocks are re-solved at the extrapolated point before the sweep
            eng.sweep(trial, te, tnuc, indiv + order)
            eng.track = saved_track
            f_trial = eng.objective(te, tnuc)
            if f_trial <= f:
                prev_shared = [state[k] for k in shared]
                state, e, nuc = trial, te, tnuc
                if eng.track:
                    eng.update_trace.append(f_trial)
                t = t_next
                f_new = f_trial
            else:
                restarts += 1
                t = 1.0
                prev_shared = [state[k].copy() for k in shared]
                eng.sweep(state, e, nuc, order)
                f_new = eng.objective(e, nuc)
        else:
            prev_shared = [state[k].copy() for k in shared]
            eng.sweep(state, e, nuc, order)
            f_new = eng.objective(e, nuc)
            if accelerate:
                t = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
        # resynchronize the residual to keep rounding from accumulating
        e = _residual(x, state, layout)
        f_new = eng.objective(e, nuc)
        if not np.isfinite(f_new):
            raise NonFiniteObjectiveError(f"objective became non-finite at iteration {it}")
        trace.append(f_new)
        decrease = f - f_new
        f = f_new
        if decrease <= config.rel_tol * f_new:
            converged = True
            break
    report = FitReport(trace, it, converged, update_trace=eng.update_trace, restarts=restarts, solver="issvt")
    return state, report


# --- ALS --------------------------------------------------------------------

def _fit_als(x, layout: _Layout, lam, config: SolverConfig, init_theta_state) -> tuple[list, FitReport]:
    """Alternating ridge regressions on the factor form of the objective.

    The reported trace is half the factorized objective, which upper-bounds
    the nuclear-norm objective of the assembled components and matches it at
    a minimizer.
    """
    lams = [float(lam[pos]) for (_, _, _, pos) in layout.blocks]
    caps = []
    for k, (_, _, _, pos) in enumerate(layout.blocks):
        m, n = layout.shape_of(k)
        cap = min(m, n)
        if config.rank_caps is not None:
            cap = min(cap, int(config.rank_caps[pos]))
        caps.append(cap)

    nact = max(len(layout.blocks), 1)
    factors = []
    for k, (_, _, sl, _) in enumerate(layout.blocks):
        if init_theta_state is not None:
            base = init_theta_state[k]
        else:
            base = x[sl] / nact
        svd = thin_svd(base)
        r = caps[k]
        d = np.zeros(r)
        kk = min(r, svd.singular_values.size)
        d[:kk] = np.sqrt(svd.singular_values[:kk])
        U = np.zeros((svd.U.shape[0], r))
        V = np.zeros((svd.V.shape[0], r))
        U[:, :kk] = svd.U[:, :kk] * d[:kk]
        V[:, :kk] = svd.V[:, :kk] * d[:kk]
        factors.append([U, V])

    def f1_half(e):
        pen = sum(l * 0.5 * (np.sum(U * U) + np.sum(V * V)) for l, (U, V) in zip(lams, factors))
        return 0.5 * float(np.sum(e * e)) + pen

    state = [U @ V.T for U, V in factors]
    e = _residual(x, state, layout)
    f = f1_half(e)
    trace = [f]
    converged = False
    it = 0
    for it in range(1, config.max_iter + 1):
        for k, (_, _, sl, _) in enumerate(layout.blocks):
            U, V = factors[k]
            r = U.shape[1]
            target = e[sl] + U @ V.T
            eye = lams[k] * np.eye(r)
            U = np.linalg.solve(V.T @ V + eye, V.T @ target.T).T if lams[k] > 0 else target @ np.linalg.pinv(V.T)
            V = np.linalg.solve(U.T @ U + eye, U.T @ target).T if lams[k] > 0 else target.T @ np.linalg.pinv(U.T)
            factors[k] = [U, V]
            prod = U @ V.T
            e[sl] = target - prod
        state = [U @ V.T for U, V in factors]
        e = _residual(x, state, layout)
        f_new = f1_half(e)
        if not np.isfinite(f_new):
            raise NonFiniteObjectiveError(f"objective became non-finite at iteration {it}")
        trace.append(f_new)
        decrease = f - f_new
        f = f_new
        if decrease <= config.rel_tol * f_new:
            converged = True
            break
    return state, FitReport(trace, it, converged, solver="als")


# --- public entry points ----------------------------------------------------

def _summarize(theta: Decomposition, grid_data: np.ndarray, report: FitReport, layout_row, layout_col):
    from .metrics import variance_table  # local import: metrics depends on this module's types

    report.component_ranks = {
        name: (numerical_rank(a, DEFAULT_RANK_TOL) if np.any(a) else 0)
        for name, a in theta.named_components().items()
    }
    grid = BlockGrid(grid_data, layout_row, layout_col)
    report.variance_explained = variance_table(grid, theta)


def fit(
    grid: BlockGrid,
    scheme: PenaltyScheme,
    config: SolverConfig | None = None,
    frozen: Iterable[str] = (),
) -> tuple[Decomposition, FitReport]:
    """Fit the decomposition with the solver named in ``config``."""
    config = config or SolverConfig()
    if grid.has_missing:
        raise ValueError("grid has missing entries; use bidifac.impute.impute")
    if scheme.lam.shape != (grid.p + 1, grid.q + 1):
        raise ValueError(f"penalty scheme of shape {scheme.lam.shape} does not fit a {grid.p}x{grid.q} grid")
    active = _active_components(grid.p, grid.q, config, frozen)
    x = grid.data
    init = config.init

    comp = None
    if config.compress and config.solver == "issvt":
        comp = _Compression(x, grid.row_dims, grid.col_dims)
        if not comp.useful:
            comp = None
    if comp is not None:
        x_work = comp.reduce(x)
        row_dims, col_dims = comp.small_rows, comp.small_cols
        init = comp.reduce_theta(init) if init is not None else None
    else:
        x_work = x
        row_dims, col_dims = grid.row_dims, grid.col_dims
    layout = _Layout(row_dims, col_dims, active)

    if config.solver == "issvt":
        init_theta = init if init is not None else Decomposition.zeros(row_dims, col_dims)
        state, report = _fit_issvt(x_work, layout, scheme.lam, config, _to_state(init_theta, layout))
    else:
        init_state = _to_state(init, layout) if init is not None else None
        state, report = _fit_als(x_work, layout, scheme.lam, config, init_state)

    theta = _from_state(state, layout)
    if comp is not None:
        theta = comp.expand_theta(theta)
        # the part of the data outside the compressed spaces is a constant residual
        lost = x - comp._left() @ x_work @ comp._right().T
        const = 0.5 * float(np.sum(lost * lost))
        report.objective_trace = [v + const for v in report.objective_trace]
        report.update_trace = [v + const for v in report.update_trace]
    if not report.converged:
        log.warning("solver stopped after %d iterations without converging", report.iterations)
    _summarize(theta, x, report, grid.row_dims, grid.col_dims)
    return theta, report


def issvt_fit(grid: BlockGrid, scheme: PenaltyScheme, config: SolverConfig | None = None):
    """Iterative soft singular value thresholding (blockwise exact minimization)."""
    config = config or SolverConfig()
    if config.solver != "issvt":
        config = _replace(config, solver="issvt")
    return fit(grid, scheme, config)


def als_fit(grid: BlockGrid, scheme: PenaltyScheme, config: SolverConfig | None = None):
    """Alternating penalized least squares on the loading/score factors."""
    config = _replace(config or SolverConfig(), solver="als")
    return fit(grid, scheme, config)


def unifac_fit(grids, scheme: PenaltyScheme | None = None, config: SolverConfig | None = None):
    """Vertical-only special case: global and row-shared terms held at zero.

    ``grids`` is a :class:`BlockGrid` (each column block is then fit on its
    own, since nothing couples them) or a list of matrices sharing columns.
    """
    from .linked import default_penalties

    if not isinstance(grids, BlockGrid):
        grids = BlockGrid.from_blocks([[np.asarray(b)] for b in grids])
    if scheme is None:
        scheme = default_penalties(grids.row_dims, grids.col_dims)
    config = config or SolverConfig()
    return fit(grids, scheme, config, frozen=("G", "R"))


def _replace(config: SolverConfig, **changes) -> SolverConfig:
    from dataclasses import replace

    return replace(config, **changes)
