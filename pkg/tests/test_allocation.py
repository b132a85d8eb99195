import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from sais_awareness.allocation import (AllocationConvergenceError, CostModel, CostModelError,
                                       InfeasibleTargetError, SingularTransformError,
                                       assemble_sdp, certify, charnes_cooper, eval_cost,
                                       fit_cost_params, kappa_from_y, oracle_grid_solve,
                                       recover_kappa, solve_allocation, y_from_kappa, y_range)
from sais_awareness.dynamics import SaisParams, build_stability_matrix, spectral_margin
from sais_awareness.graph import Graph, generate

from conftest import random_instance

positive = st.floats(0.01, 10.0)
unit = st.floats(0.01, 0.99)


# -- cost model ---------------------------------------------------------------------

def test_fit_reference_values():
    c, s = fit_cost_params(1.0, 0.0, 0.024, 0.5, 7.4e-3)
    assert s == pytest.approx(0.5 * (0.0074 + 0.024) / 0.024, rel=1e-14)
    assert s == pytest.approx(0.6541667, abs=1e-7)
    assert c == pytest.approx(0.0, abs=1e-17)
    model = CostModel.fit(1.0, 0.0, 0.024, 0.5, 7.4e-3)
    assert eval_cost(model, 0.024) == pytest.approx(1.0, rel=1e-14)
    assert eval_cost(model, 0.012) == pytest.approx(0.80928, abs=5e-6)


@settings(max_examples=200)
@given(positive, st.floats(0, 5), st.floats(0.01, 5), unit, positive)
def test_fit_endpoints_and_monotone(C_bar, kl, width, r, beta):
    model = CostModel.fit(C_bar, kl, kl + width, r, beta)
    assert eval_cost(model, kl) == pytest.approx(0.0, abs=1e-12 * C_bar)
    assert eval_cost(model, kl + width) == pytest.approx(C_bar, rel=1e-12)
    grid = np.linspace(kl, kl + width, 100)
    assert np.all(np.diff(eval_cost(model, grid)) >= -1e-12 * C_bar)
    assert np.all(model.s >= C_bar * r * (1 - 1e-12))


def test_degenerate_range():
    with pytest.raises(CostModelError):
        fit_cost_params(1.0, 0.5, 0.5, 0.5, 1.0)


def test_decreasing_cost_rejected():
    with pytest.raises(CostModelError):
        CostModel(c=2.0, s=0.1, C_bar=1.0, kappa_lower=0.0, kappa_upper=1.0, r=0.5, beta=1.0)


def test_eval_cost_domain():
    model = CostModel.fit(1.0, 0.1, 1.0, 0.5, 1.0)
    with pytest.raises(ValueError):
        eval_cost(model, 0.05)
    with pytest.raises(ValueError):
        eval_cost(model, 1.5)


def test_half_cbar_rule_is_only_flagged():
    # r = 0.25 satisfies s >= C_bar r but not the stricter s > C_bar / 2
    model = CostModel.fit(1.0, 0.0, 1.0, 0.25, 1.0)
    assert not model.meets_half_cbar_rule.any()
    assert np.all(np.diff(eval_cost(model, np.linspace(0, 1, 50))) > 0)


# -- transforms ---------------------------------------------------------------------

def test_y_kappa_examples():
    p = SaisParams.create(1, 1.0, 1.0, 0.0, 0.25)
    assert kappa_from_y(p, 1.0) == pytest.approx(0.0, abs=1e-15)
    assert kappa_from_y(p, 2.0) == pytest.approx(0.5, rel=1e-14)
    assert y_from_kappa(p, 0.5) == pytest.approx(2.0, rel=1e-14)
    with pytest.raises(InfeasibleTargetError) as exc:
        kappa_from_y(SaisParams.create(1, 1.0, 1.0, 0.0, 0.5), 2.0)
    assert exc.value.high == pytest.approx(2.0)


def test_y_bounds_follow_the_forward_map():
    p = SaisParams.create(2, [1.0, 2.0], [1.0, 0.5], 0.0, [0.25, 0.5])
    lo, hi = y_range(p)
    assert np.allclose(lo, y_from_kappa(p, 0.0))
    assert np.all(y_from_kappa(p, 1e9) < hi)


@settings(max_examples=300)
@given(positive, positive, unit, st.floats(0.001, 0.999))
def test_y_round_trip(beta, delta, r, frac):
    p = SaisParams.create(1, beta, delta, 0.0, r)
    lo, hi = y_range(p)
    y = lo + frac * (hi - lo)
    kappa = kappa_from_y(p, y)
    assert y_from_kappa(p, kappa) == pytest.approx(y, rel=1e-9)


@settings(max_examples=200)
@given(positive, positive, unit, st.floats(0, 50), st.floats(0, 50))
def test_y_strictly_increasing(beta, delta, r, k1, k2):
    assume(abs(k1 - k2) > 1e-6 * (1 + k1))
    p = SaisParams.create(1, beta, delta, 0.0, r)
    lo, hi = sorted((k1, k2))
    assert y_from_kappa(p, lo)[0] < y_from_kappa(p, hi)[0]


def test_charnes_cooper_k3_values():
    p = SaisParams.create(1, 1.0, 1.0, 0.0, 0.25)
    u, w = charnes_cooper(p, np.array([0.5]))
    assert u[0] == pytest.approx(4 / 3, rel=1e-15) and w[0] == pytest.approx(8 / 3, rel=1e-15)
    assert 0.25 * w[0] + 0.25 * u[0] == pytest.approx(1.0, abs=1e-15)
    u0, w0 = charnes_cooper(p, np.array([0.0]))
    assert u0[0] == 0 and w0[0] == 4.0


@settings(max_examples=300)
@given(positive, unit, st.floats(0, 100))
def test_charnes_cooper_round_trip(beta, r, kappa):
    p = SaisParams.create(1, beta, 1.0, 0.0, r)
    u, w = charnes_cooper(p, np.array([kappa]))
    assert recover_kappa(u, w)[0] == pytest.approx(kappa, rel=1e-12, abs=1e-12)
    assert r * beta * w[0] + r * u[0] == pytest.approx(1.0, abs=1e-12)


def test_singular_transform():
    with pytest.raises(SingularTransformError):
        recover_kappa([1.0], [0.0])


# -- assembly -----------------------------------------------------------------------

def test_assembly_k3(k3_instance):
    g, params, cost = k3_instance
    inst = assemble_sdp(g, params, cost)
    assert np.allclose(inst.F, 0.25) and np.allclose(inst.G, 1.0)
    u, w = charnes_cooper(params, np.full(3, 0.5))
    # reduced and full diagonals coincide on the equality
    assert np.allclose(inst.diagonal(u), inst.diagonal(u, w), atol=1e-14)
    assert np.allclose(inst.diagonal(u), 2.0)


def test_assembly_single_node():
    params = SaisParams.create(1, 1.0, 1.0)
    inst = assemble_sdp(Graph.from_edges(1, []), params, CostModel.for_params(params, 1.0, 0.0, 1.0))
    u, w = charnes_cooper(params, np.array([0.3]))
    assert inst.diagonal(u, w)[0] > 0


def test_assembly_rejects_foreign_cost():
    params = SaisParams.create(3, 1.0, 1.0)
    other = CostModel.fit(1.0, 0.0, 1.0, 0.25, 1.0)
    with pytest.raises(ValueError):
        assemble_sdp(generate("path", 3), params, other)


# -- solving ------------------------------------------------------------------------

@pytest.mark.parametrize("form", ["reduced", "full"])
@pytest.mark.parametrize("method", ["barrier", "cutting_plane"])
def test_k3_canonical(k3_instance, form, method):
    g, params, cost = k3_instance
    res = solve_allocation(assemble_sdp(g, params, cost), form=form, method=method)
    assert res.solved and res.status == "marginal"
    assert np.allclose(res.kappa_star, 0.5, atol=1e-3 if method == "cutting_plane" else 1e-6)
    assert np.allclose(res.y_star, 2.0, atol=1e-3)
    assert res.total_cost == pytest.approx(3 * eval_cost(cost, np.array([0.5] * 3))[0], rel=1e-3)
    assert abs(res.margin) <= 1e-6


def test_k3_infeasible():
    g = generate("complete", 3)
    params = SaisParams.create(3, 1.0, 1.0, 0.0, 0.5)
    cost = CostModel.for_params(params, 1.0, 0.0, 1.0)
    res = solve_allocation(assemble_sdp(g, params, cost))
    assert res.status == "infeasible" and not res.solved
    assert res.attainable["y_upper"] == pytest.approx([1.5] * 3)
    assert oracle_grid_solve(g, params, cost).status == "infeasible"


def test_empty_graph_costs_nothing():
    params = SaisParams.create(4, 1.0, 1.0, 0.0, 0.5)
    cost = CostModel.for_params(params, 1.0, 0.1, 1.0)
    g = Graph.from_edges(4, [])
    res = solve_allocation(assemble_sdp(g, params, cost))
    assert res.solved
    assert np.array_equal(res.kappa_star, cost.kappa_lower)
    assert res.total_cost == pytest.approx(0.0, abs=1e-15)
    assert np.array_equal(oracle_grid_solve(g, params, cost, 21).kappa_star, cost.kappa_lower)


def test_isolated_nodes_stay_cheap():
    g = Graph.from_edges(5, [(0, 1), (1, 2), (0, 2)])
    params = SaisParams.create(5, 1.0, 1.0, 0.0, 0.25)
    cost = CostModel.for_params(params, 1.0, 0.0, 1.0)
    res = solve_allocation(assemble_sdp(g, params, cost))
    assert np.allclose(res.kappa_star[:3], 0.5, atol=1e-6)
    assert np.all(res.kappa_star[3:] == 0)


@pytest.mark.parametrize("seed", range(8))
def test_result_invariants(seed):
    g, params, cost, inst = random_instance(seed, n=20, p=0.25)
    res = solve_allocation(inst)
    if not res.solved:
        pytest.skip("infeasible draw")
    tol = 1e-9
    assert np.all(res.kappa_star >= cost.kappa_lower - tol)
    assert np.all(res.kappa_star <= cost.kappa_upper + tol)
    assert res.total_cost == pytest.approx(eval_cost(cost, res.kappa_star).sum(), abs=1e-9)
    assert res.total_cost == pytest.approx(np.sum(cost.c * res.w_star + cost.s * res.u_star), abs=1e-9)
    assert res.lower_bound <= res.total_cost + 1e-8
    # boundary activity: kappa_lower is unsafe, so the constraint binds
    assert spectral_margin(g, params.with_kappa(cost.kappa_lower)).margin > 0
    assert abs(res.margin) <= 1e-6
    # certify is monotone in kappa
    up, _ = certify(g, params.with_kappa(cost.kappa_upper))
    assert up <= res.margin + 1e-12


@pytest.mark.parametrize("seed", range(5))
def test_reduced_and_full_forms_agree(seed):
    _, _, _, inst = random_instance(100 + seed, n=25, p=0.2)
    a = solve_allocation(inst, form="reduced")
    b = solve_allocation(inst, form="full")
    if a.solved:
        assert np.abs(a.kappa_star - b.kappa_star).max() <= 1e-6
    else:
        assert a.status == b.status == "infeasible"


@pytest.mark.parametrize("seed", range(3))
def test_cutting_plane_close_to_barrier(seed):
    _, _, _, inst = random_instance(200 + seed, n=10, p=0.4)
    a = solve_allocation(inst)
    if not a.solved:
        pytest.skip("infeasible draw")
    b = solve_allocation(inst, method="cutting_plane")
    assert b.total_cost == pytest.approx(a.total_cost, rel=1e-3)
    assert b.margin <= 1e-6


def test_iteration_cap_reports_best():
    _, _, _, inst = random_instance(3, n=30)
    with pytest.raises(AllocationConvergenceError) as exc:
        solve_allocation(inst, method="cutting_plane", max_iter=2)
    assert np.isfinite(exc.value.best.margin)


def test_epsilon_backoff_gives_strict_margin(k3_instance):
    g, params, cost = k3_instance
    res = solve_allocation(assemble_sdp(g, params, cost), epsilon=1e-3)
    assert res.status == "optimal" and res.margin < -1e-6
    assert np.all(res.kappa_star > 0.5)


@pytest.mark.parametrize("seed", range(3))
def test_every_iterate_meets_the_equality(seed):
    _, params, _, inst = random_instance(300 + seed, n=15, p=0.3)
    for form in ("reduced", "full"):
        res = solve_allocation(inst, form=form)
        assert res.history
        for it in res.history:
            assert np.abs(params.r * params.beta * it.w + params.r * it.u - 1).max() <= 1e-12
            u, w = charnes_cooper(params, it.kappa)
            assert np.abs(params.r * params.beta * w + params.r * u - 1).max() <= 1e-12


def test_unknown_options(k3_instance):
    inst = assemble_sdp(*k3_instance)
    with pytest.raises(ValueError):
        solve_allocation(inst, form="dual")
    with pytest.raises(ValueError):
        solve_allocation(inst, method="simplex")


def test_diagonal_test_matches_stability_matrix():
    rng = np.random.default_rng(0)
    for seed in range(30):
        n = int(rng.integers(2, 25))
        g = generate("erdos_renyi", n, seed, p=0.3)
        params = SaisParams.create(n, rng.uniform(0.1, 2, n), rng.uniform(0.1, 2, n),
                                   rng.uniform(0, 3, n), rng.uniform(0.05, 0.95, n))
        a = np.linalg.eigvals(build_stability_matrix(g, params)).real.max()
        b = np.linalg.eigvalsh(g.adjacency() - np.diag(y_from_kappa(params, params.kappa)))[-1]
        if min(abs(a), abs(b)) > 1e-8:
            assert np.sign(a) == np.sign(b)


# -- oracle -------------------------------------------------------------------------

def test_oracle_k3(k3_instance):
    res = oracle_grid_solve(*k3_instance, grid_points=201)
    assert np.all(np.abs(res.kappa_star - 0.5) <= 0.005)


def test_oracle_size_limit():
    params = SaisParams.create(5, 1.0, 1.0)
    with pytest.raises(ValueError):
        oracle_grid_solve(generate("path", 5), params, CostModel.for_params(params, 1.0, 0.0, 1.0))


@pytest.mark.parametrize("kind,n,seed", [("complete", 2, 0), ("path", 3, 1), ("complete", 3, 2),
                                         ("star", 3, 3)])
def test_solver_matches_oracle(kind, n, seed):
    rng = np.random.default_rng(seed)
    g = generate(kind, n)
    lam = np.linalg.eigvalsh(g.adjacency())[-1]
    delta = rng.uniform(0.5, 1.5, n)
    params = SaisParams.create(n, rng.uniform(1.3, 1.8, n) * delta / lam, delta, 0.0,
                               rng.uniform(0.2, 0.4, n))
    cost = CostModel.for_params(params, rng.uniform(0.5, 2, n), 0.0, 6 * params.beta)
    res = solve_allocation(assemble_sdp(g, params, cost))
    grid = 201
    oracle = oracle_grid_solve(g, params, cost, grid)
    assert res.solved and oracle.status != "infeasible"
    resolution = float(np.max(cost.kappa_upper - cost.kappa_lower)) / (grid - 1)
    assert res.total_cost <= oracle.total_cost + 1e-9
    assert oracle.total_cost - res.total_cost <= resolution * n * cost.max_slope()


# -- independent conic cross-check --------------------------------------------------

@pytest.mark.parametrize("seed", range(2))
def test_matches_generic_conic_solver(seed):
    cp = pytest.importorskip("cvxpy")
    g, params, cost, inst = random_instance(400 + seed, n=12, p=0.35)
    res = solve_allocation(inst)
    if not res.solved:
        pytest.skip("infeasible draw")
    n = g.n
    u, w = cp.Variable(n), cp.Variable(n)
    lmi = g.adjacency() - cp.diag(cp.multiply(inst.F, w) + cp.multiply(inst.G, u))
    cons = [(lmi + lmi.T) / 2 << 0, w >= 0,
            u >= cp.multiply(cost.kappa_lower, w), u <= cp.multiply(cost.kappa_upper, w),
            cp.multiply(params.r * params.beta, w) + cp.multiply(params.r, u) == 1]
    prob = cp.Problem(cp.Minimize(cost.c @ w + cost.s @ u), cons)
    prob.solve(solver="CLARABEL")
    assert prob.status == "optimal"
    assert res.total_cost == pytest.approx(prob.value, rel=1e-5)
