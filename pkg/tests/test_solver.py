import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bidifac.linalg import soft_threshold_svd
from bidifac.linked import BlockGrid, PenaltyScheme, default_penalties
from bidifac.solver import (
    Decomposition,
    SolverConfig,
    als_fit,
    compose_signal,
    fit,
    issvt_fit,
    objective_f2,
    unifac_fit,
)


def nuc(a):
    return np.linalg.norm(a, "nuc") if a.size else 0.0


def hand_objective(theta, x_blocks, lam, rd, cd):
    # independent evaluation through per-block slicing of the stored concatenations
    ro, co = np.cumsum([0, *rd]), np.cumsum([0, *cd])
    val = 0.0
    for i in range(len(rd)):
        for j in range(len(cd)):
            r, c = slice(ro[i], ro[i + 1]), slice(co[j], co[j + 1])
            s = theta.G[r, c] + theta.R[i][:, c] + theta.C[j][r, :] + theta.I[i][j]
            val += 0.5 * np.sum((x_blocks[i][j] - s) ** 2) + lam[i + 1, j + 1] * nuc(theta.I[i][j])
    val += lam[0, 0] * nuc(theta.G)
    val += sum(lam[i + 1, 0] * nuc(theta.R[i]) for i in range(len(rd)))
    val += sum(lam[0, j + 1] * nuc(theta.C[j]) for j in range(len(cd)))
    return val


def random_theta(r, rd, cd, scale=1.0):
    m0, n0 = sum(rd), sum(cd)
    return Decomposition(
        scale * r.standard_normal((m0, n0)),
        [scale * r.standard_normal((m, n0)) for m in rd],
        [scale * r.standard_normal((m0, n)) for n in cd],
        [[scale * r.standard_normal((m, n)) for n in cd] for m in rd],
        rd,
        cd,
    )


def lowrank_grid(seed, rd=(12, 9), cd=(10, 14), rank=3, noise=1.0):
    r = np.random.default_rng(seed)
    x = r.standard_normal((sum(rd), rank)) @ r.standard_normal((rank, sum(cd))) * 2
    x += noise * r.standard_normal(x.shape)
    return BlockGrid(x, rd, cd)


def test_objective_zero_theta(rng):
    g = BlockGrid(rng.standard_normal((7, 9)), (3, 4), (5, 4))
    sc = default_penalties(g.row_dims, g.col_dims)
    assert objective_f2(Decomposition.zeros(g.row_dims, g.col_dims), g, sc) == pytest.approx(0.5 * np.sum(g.data**2))


def test_objective_exact_components(rng):
    rd, cd = (3, 4), (5, 2)
    theta = random_theta(rng, rd, cd)
    g = BlockGrid(theta.signal(), rd, cd)
    assert objective_f2(theta, g, PenaltyScheme(np.zeros((3, 3)))) == pytest.approx(0.0, abs=1e-20)


@given(st.integers(0, 10_000))
def test_objective_matches_hand_formula(seed):
    r = np.random.default_rng(seed)
    rd = tuple(int(v) for v in r.integers(1, 6, size=r.integers(1, 4)))
    cd = tuple(int(v) for v in r.integers(1, 6, size=r.integers(1, 4)))
    theta = random_theta(r, rd, cd)
    blocks = [[r.standard_normal((m, n)) for n in cd] for m in rd]
    g = BlockGrid.from_blocks(blocks)
    lam = r.uniform(0, 3, size=(len(rd) + 1, len(cd) + 1))
    got = objective_f2(theta, g, PenaltyScheme(lam))
    want = hand_objective(theta, blocks, lam, rd, cd)
    assert abs(got - want) <= 1e-10 * max(1.0, abs(want))


def test_objective_excludes_masked(rng):
    rd, cd = (3, 3), (4,)
    x = rng.standard_normal((6, 4))
    mask = np.ones_like(x, dtype=bool)
    mask[1, 2] = False
    g = BlockGrid(x, rd, cd, mask)
    zero = Decomposition.zeros(rd, cd)
    assert objective_f2(zero, g, default_penalties(rd, cd)) == pytest.approx(0.5 * np.sum(x[mask] ** 2))


def test_objective_shape_mismatch(rng):
    g = BlockGrid(rng.standard_normal((4, 4)), (2, 2), (2, 2))
    with pytest.raises(ValueError):
        objective_f2(Decomposition.zeros((1, 3), (2, 2)), g, default_penalties((2, 2), (2, 2)))
    with pytest.raises(ValueError):
        objective_f2(Decomposition.zeros((2, 2), (2, 2)), g, default_penalties((4,), (4,)))


def test_compose_signal(rng):
    rd, cd = (2, 3), (4, 1)
    zero = Decomposition.zeros(rd, cd)
    assert all(not np.any(b) for row in compose_signal(zero) for b in row)
    only_i = Decomposition.zeros(rd, cd)
    only_i.I = [[rng.standard_normal((m, n)) for n in cd] for m in rd]
    s = compose_signal(only_i)
    assert all(np.array_equal(s[i][j], only_i.I[i][j]) for i in range(2) for j in range(2))
    theta = random_theta(rng, rd, cd)
    s = compose_signal(theta)
    assembled = theta.G + np.vstack(theta.R) + np.hstack(theta.C) + np.block(theta.I)
    assert np.max(np.abs(np.block(s) - assembled)) < 1e-12


def test_decomposition_shape_checks():
    z = Decomposition.zeros((2, 3), (4,))
    with pytest.raises(ValueError):
        Decomposition(np.zeros((5, 3)), z.R, z.C, z.I, (2, 3), (4,))
    assert set(z.named_components()) == {"G_00", "R_10", "R_20", "C_01", "I_11", "I_21"}


def test_single_block_is_svt(rng):
    x = 3 * rng.standard_normal((30, 20))
    g = BlockGrid(x, (30,), (20,))
    sc = default_penalties((30,), (20,))
    want, _ = soft_threshold_svd(x, sc.indiv(1, 1))
    for solver in ("issvt", "als"):
        theta, rep = fit(g, sc, SolverConfig(solver=solver, rel_tol=1e-12, max_iter=5000))
        assert np.linalg.norm(theta.signal() - want) < 1e-6
        assert not np.any(theta.G) and not any(np.any(r) for r in theta.R) and not any(np.any(c) for c in theta.C)


def test_zero_data_gives_zero():
    g = BlockGrid(np.zeros((10, 12)), (4, 6), (5, 7))
    sc = default_penalties(g.row_dims, g.col_dims)
    for f in (issvt_fit, als_fit):
        theta, rep = f(g, sc)
        assert not np.any(theta.signal())
        assert rep.converged


@pytest.mark.parametrize("seed", range(20))
def test_pure_noise_zero_iff_kkt(seed):
    # zero is a minimizer exactly when every concatenation's spectral norm is within its penalty
    r = np.random.default_rng(seed)
    x = r.standard_normal((200, 200))
    rd = cd = (100, 100)
    g = BlockGrid(x, rd, cd)
    sc = default_penalties(rd, cd)
    opn = lambda a: np.linalg.norm(a, 2)
    kkt = opn(x) <= sc.global_
    for i in range(2):
        kkt &= opn(x[g.rows(i)]) <= sc.row(i + 1)
        kkt &= opn(x[:, g.cols(i)]) <= sc.col(i + 1)
        for j in range(2):
            kkt &= opn(g.block(i, j)) <= sc.indiv(i + 1, j + 1)
    theta, _ = fit(g, sc)
    assert (not np.any(theta.signal())) == bool(kkt)


def _random_valid_scheme(r, rd, cd):
    from bidifac.linked import validate_penalties

    base = default_penalties(rd, cd).lam
    while True:
        lam = base * r.uniform(0.8, 1.2, size=base.shape)
        if not validate_penalties(PenaltyScheme(lam)):
            return PenaltyScheme(lam)


@pytest.mark.parametrize("seed", range(4))
def test_issvt_als_agree(seed):
    r = np.random.default_rng(seed)
    rd = tuple(int(v) for v in r.integers(5, 30, 2))
    cd = tuple(int(v) for v in r.integers(5, 30, 2))
    g = lowrank_grid(seed, rd, cd)
    sc = _random_valid_scheme(r, rd, cd)
    a, _ = issvt_fit(g, sc, SolverConfig(rel_tol=1e-10, max_iter=20000))
    b, rb = als_fit(g, sc, SolverConfig(rel_tol=1e-10, max_iter=20000))
    fa, fb = objective_f2(a, g, sc), objective_f2(b, g, sc)
    assert abs(fa - fb) / fa < 1e-4
    # the factored objective bounds the nuclear-norm objective from above
    assert rb.objective_trace[-1] >= fb - 1e-8 * fb


def test_per_update_descent():
    g = lowrank_grid(3)
    sc = default_penalties(g.row_dims, g.col_dims)
    for compress in (True, False):
        _, rep = fit(g, sc, SolverConfig(track_updates=True, compress=compress, rel_tol=1e-10, max_iter=300))
        tr = np.asarray(rep.update_trace)
        assert len(tr) > 9
        assert np.all(np.diff(tr) <= 1e-12 * tr[0])


@pytest.mark.parametrize("accelerate", [False, True])
def test_trace_nonincreasing(accelerate):
    g = lowrank_grid(5, noise=0.3)
    sc = default_penalties(g.row_dims, g.col_dims)
    _, rep = fit(g, sc, SolverConfig(accelerate=accelerate, rel_tol=1e-10, max_iter=2000))
    tr = np.asarray(rep.objective_trace)
    assert np.all(np.diff(tr) <= 1e-12 * tr[0])


def test_trace_starts_at_initial_objective():
    g = lowrank_grid(6)
    sc = default_penalties(g.row_dims, g.col_dims)
    theta, rep = fit(g, sc)
    assert rep.objective_trace[0] == pytest.approx(0.5 * np.sum(g.data**2), rel=1e-12)
    assert rep.objective_trace[-1] == pytest.approx(objective_f2(theta, g, sc), rel=1e-9)


def test_converged_flag_and_max_iter():
    g = lowrank_grid(7)
    sc = default_penalties(g.row_dims, g.col_dims)
    _, rep = fit(g, sc, SolverConfig(max_iter=1))
    assert rep.iterations == 1 and not rep.converged
    _, rep = fit(g, sc, SolverConfig(max_iter=5000))
    assert rep.converged
    tr = rep.objective_trace
    assert tr[-2] - tr[-1] <= 1e-8 * tr[-1]


@pytest.mark.parametrize("seed", range(3))
def test_initialization_robustness(seed):
    r = np.random.default_rng(seed)
    g = lowrank_grid(seed + 10)
    sc = default_penalties(g.row_dims, g.col_dims)
    cfg = SolverConfig(rel_tol=1e-12, max_iter=20000)
    a, _ = fit(g, sc, cfg)
    init = random_theta(r, g.row_dims, g.col_dims, scale=0.5)
    b, _ = fit(g, sc, SolverConfig(rel_tol=1e-12, max_iter=20000, init=init))
    fa, fb = objective_f2(a, g, sc), objective_f2(b, g, sc)
    assert abs(fa - fb) / fa < 1e-6


def test_compression_and_acceleration_do_not_change_optimum():
    g = lowrank_grid(11, rd=(15, 8), cd=(6, 20), rank=2, noise=0.0)
    sc = default_penalties(g.row_dims, g.col_dims).scaled(0.05)
    vals = []
    for compress in (True, False):
        for acc in (True, False):
            th, _ = fit(g, sc, SolverConfig(compress=compress, accelerate=acc, rel_tol=1e-13, max_iter=50000))
            vals.append(objective_f2(th, g, sc))
    assert max(vals) - min(vals) < 1e-6 * min(vals)


@pytest.mark.parametrize("seed", range(3))
def test_random_perturbations_never_lower_objective(seed):
    g = lowrank_grid(seed + 20)
    sc = default_penalties(g.row_dims, g.col_dims)
    theta, _ = fit(g, sc, SolverConfig(rel_tol=1e-12, max_iter=20000))
    f0 = objective_f2(theta, g, sc)
    r = np.random.default_rng(seed)
    for _ in range(100):
        pert = theta.copy()
        kind = r.choice(list("GRCI"))
        if kind == "G":
            pert.G = pert.G + 1e-2 * r.standard_normal(pert.G.shape)
        elif kind == "R":
            i = r.integers(2)
            pert.R[i] = pert.R[i] + 1e-2 * r.standard_normal(pert.R[i].shape)
        elif kind == "C":
            j = r.integers(2)
            pert.C[j] = pert.C[j] + 1e-2 * r.standard_normal(pert.C[j].shape)
        else:
            i, j = r.integers(2, size=2)
            pert.I[i][j] = pert.I[i][j] + 1e-2 * r.standard_normal(pert.I[i][j].shape)
        assert objective_f2(pert, g, sc) >= f0


def test_unifac_is_restricted_issvt():
    g = lowrank_grid(30)
    sc = default_penalties(g.row_dims, g.col_dims)
    a, _ = unifac_fit(g, sc)
    b, _ = fit(g, sc, frozen=("G", "R"))
    assert not np.any(a.G) and not any(np.any(r) for r in a.R)
    np.testing.assert_array_equal(a.signal(), b.signal())


def test_unifac_grid_equals_separate_column_fits():
    # nothing couples the column blocks: the joint objective splits into the separate ones
    g = lowrank_grid(31)
    sc = default_penalties(g.row_dims, g.col_dims)
    cfg = SolverConfig(rel_tol=1e-13, max_iter=50000)
    joint, _ = unifac_fit(g, sc, cfg)
    total = 0.0
    for j in range(2):
        sub = BlockGrid.from_blocks([[g.data[g.rows(i), g.cols(j)]] for i in range(2)])
        sub_sc = default_penalties(sub.row_dims, sub.col_dims)
        sep, _ = unifac_fit(sub, sub_sc, cfg)
        total += objective_f2(sep, sub, sub_sc)
        np.testing.assert_allclose(sep.signal(), joint.signal()[:, g.cols(j)], atol=1e-4)
    zero_gr = PenaltyScheme(sc.lam.copy())
    assert objective_f2(joint, g, zero_gr) == pytest.approx(total, rel=1e-8)


def test_redundant_terms_suppressed():
    r = np.random.default_rng(0)
    g = BlockGrid(r.standard_normal((20, 8)) * 5, (10, 10), (8,))
    theta, rep = fit(g, default_penalties(g.row_dims, g.col_dims))
    assert not np.any(theta.G) and not any(np.any(x) for x in theta.R)


def test_frozen_components_stay_zero():
    g = lowrank_grid(32)
    theta, _ = fit(g, default_penalties(g.row_dims, g.col_dims), frozen=("I",))
    assert not any(np.any(x) for row in theta.I for x in row)


def test_rank_caps():
    g = lowrank_grid(33, rank=6, noise=0.1)
    sc = default_penalties(g.row_dims, g.col_dims).scaled(0.2)
    caps = np.ones((3, 3), dtype=int)
    theta, rep = fit(g, sc, SolverConfig(rank_caps=caps, compress=False))
    assert all(v <= 1 for v in rep.component_ranks.values())


def test_missing_grid_rejected(rng):
    mask = np.ones((4, 4), dtype=bool)
    mask[0, 0] = False
    g = BlockGrid(rng.standard_normal((4, 4)), (2, 2), (2, 2), mask)
    with pytest.raises(ValueError):
        fit(g, default_penalties((2, 2), (2, 2)))


def test_report_contents():
    g = lowrank_grid(34)
    theta, rep = fit(g, default_penalties(g.row_dims, g.col_dims))
    d = rep.to_dict()
    assert d["final_objective"] == rep.objective_trace[-1]
    assert set(rep.component_ranks) == set(theta.named_components())
    assert len(rep.variance_explained) == 4


def test_config_validation():
    with pytest.raises(ValueError):
        SolverConfig(rel_tol=0)
    with pytest.raises(ValueError):
        SolverConfig(max_iter=0)
    with pytest.raises(ValueError):
        SolverConfig(solver="newton")


@settings(max_examples=15)
@given(st.integers(0, 10_000))
def test_fit_deterministic(seed):
    g = lowrank_grid(seed, rd=(6, 5), cd=(4, 7))
    sc = default_penalties(g.row_dims, g.col_dims)
    a, ra = fit(g, sc)
    b, rb = fit(g, sc)
    assert np.array_equal(a.signal(), b.signal()) and ra.objective_trace == rb.objective_trace
