import numpy as np
import pytest
from numpy import testing as t

from msddp.algorithms import (BoundsTrace, SolveResult, Status, StochasticConfig, StopRule, TraceRow,
                              compute_over_value, ddp_deterministic, ddp_stochastic, estimate_policy_cost,
                              nested_decomposition, sample_paths)
from msddp.approx import OverApprox
from msddp.errors import BadConfig, BadParams, EmptyOverApprox
from msddp.instances import (brute_force_value_functions, example_convex_nonlipschitz,
                             example_milp_discontinuous, finite_state_instance)
from msddp.model import recombine
from msddp.oracles import ForwardSolution, make_grid_oracles

from .conftest import linear_leaf_tree


def _monotone(trace: BoundsTrace):
    lbs, ubs = trace.lower_bounds, trace.upper_bounds
    assert all(b >= a - 1e-12 for a, b in zip(lbs, lbs[1:]))
    assert all(b <= a + 1e-12 for a, b in zip(ubs, ubs[1:]))


def test_trace_row_gap():
    assert TraceRow(1, 0.0, np.inf, 0, 0.0, 0).gap == np.inf
    assert TraceRow(1, 0.5, 2.0, 0, 0.0, 0).gap == 1.5


def test_stop_rules():
    stall = StopRule.lb_stall(window=2, tol=1e-3)
    assert not stall.should_stop([0.0, 1.0])
    assert not stall.should_stop([0.0, 1.0, 2.0])
    assert stall.should_stop([0.0, 1.0, 1.0, 1.0])
    assert StopRule.fixed_iterations(3).should_stop([0, 0, 0])
    with pytest.raises(BadConfig):
        StochasticConfig(samples=0)
    with pytest.raises(BadConfig):
        StochasticConfig(max_iters=0)


def test_over_value_requires_points():
    tree = linear_leaf_tree()
    sol = ForwardSolution(x=np.array([0.0]), y=np.zeros(0), z=np.array([0.5]), objective=1.0)
    with pytest.raises(EmptyOverApprox):
        compute_over_value(sol, [0.5], OverApprox(1, 1.0), tree.node('l').data)
    leaf_over = OverApprox(1, 0.0, leaf=True)
    assert compute_over_value(sol, [0.75], leaf_over, tree.node('l').data) == pytest.approx(1.0 + 3.0 * 0.25)


def test_negative_eps_rejected():
    tree = linear_leaf_tree()
    with pytest.raises(BadParams):
        nested_decomposition(tree, make_grid_oracles(tree), -1.0)


def test_nested_linear_leaf():
    tree = linear_leaf_tree()
    rows = []
    result = nested_decomposition(tree, make_grid_oracles(tree), 1e-6, sink=rows.append)
    assert isinstance(result, SolveResult)
    assert result.status is Status.CONVERGED
    assert result.objective == pytest.approx(1.0)
    assert result.gap <= 1e-6 + 1e-9
    assert len(rows) == result.iterations == len(result.trace)
    assert result.oracle_calls > 0
    _monotone(result.trace)


def test_nested_convex_nonlipschitz():
    tree, meta = example_convex_nonlipschitz(h=1e-4)
    result = nested_decomposition(tree, make_grid_oracles(tree), 1e-3)
    assert result.status is Status.CONVERGED
    assert result.iterations == 1
    assert result.gap <= 1e-3 + 1e-9
    t.assert_allclose(result.x, [0.0])
    assert abs(result.objective - meta.optimal_value) <= 1e-3 + 1e-2


@pytest.mark.parametrize('sigma', [2.0, 5.0])
def test_nested_milp_discontinuous(sigma):
    tree, meta = example_milp_discontinuous(sigma=sigma, h=1e-3)
    result = nested_decomposition(tree, make_grid_oracles(tree), 1e-3, max_iters=200)
    assert result.status is Status.CONVERGED
    assert abs(result.objective - meta.shift - meta.optimal_value) <= 1e-3 + 1e-2
    assert abs(result.x[0] - 1.0) <= 1e-2
    _monotone(result.trace)


def test_iteration_cap():
    tree, _ = example_milp_discontinuous(sigma=5.0, h=1e-3)
    result = nested_decomposition(tree, make_grid_oracles(tree), 0.0, max_iters=2)
    assert result.status is Status.ITERATION_CAP
    assert result.iterations == 2


def test_iteration_cap_must_be_positive():
    tree = linear_leaf_tree()
    with pytest.raises(BadConfig):
        nested_decomposition(tree, make_grid_oracles(tree), 0.0, max_iters=0)
    with pytest.raises(BadConfig):
        ddp_deterministic(recombine(tree), make_grid_oracles(tree), 0.0, max_iters=0)


def test_ddp_deterministic_finite_state_exact():
    tree, _ = finite_state_instance(T=2, K=3, seed=4, branching=2)
    table = brute_force_value_functions(tree)
    result = ddp_deterministic(recombine(tree), make_grid_oracles(tree), 0.0)
    assert result.status is Status.CONVERGED
    assert result.lower_bound == pytest.approx(table.v_prim, abs=1e-6)
    assert result.gap <= 1e-6
    row = result.trace.rows[0]
    assert len(row.stage_gaps) == 1 and row.selected[0] == int(np.argmax(row.stage_gaps[0]))


def test_ddp_deterministic_matches_nested_on_chain():
    tree, _ = finite_state_instance(T=3, K=3, seed=1)
    a = nested_decomposition(tree, make_grid_oracles(tree), 0.0)
    b = ddp_deterministic(recombine(tree), make_grid_oracles(tree), 0.0)
    assert a.lower_bound == pytest.approx(b.lower_bound)


def test_sample_paths():
    tree, _ = finite_state_instance(T=2, K=2, seed=0, branching=3)
    rtree = recombine(tree)
    paths = sample_paths(rtree, 50, np.random.default_rng(0))
    assert paths.shape == (50, 2)
    assert paths.min() >= 0 and paths.max() <= 2
    t.assert_array_equal(paths, sample_paths(rtree, 50, 0))
    with pytest.raises(BadConfig):
        sample_paths(rtree, 0, 0)


def test_ddp_stochastic_lower_bound_valid():
    tree, _ = finite_state_instance(T=2, K=3, seed=2, branching=3)
    v_reg = brute_force_value_functions(tree).v_reg
    cfg = StochasticConfig(samples=2, seed=1, max_iters=30, stop_rule=None)
    rtree = recombine(tree)
    oracles = make_grid_oracles(tree)
    result = ddp_stochastic(rtree, oracles, cfg)
    assert result.status is Status.ITERATION_CAP
    assert np.isinf(result.upper_bound)
    assert all(lb <= v_reg + 1e-9 for lb in result.trace.lower_bounds)
    _monotone(result.trace)
    estimate = estimate_policy_cost(rtree, oracles, result, samples=20, seed=3)
    assert estimate.samples == 20 and np.isfinite(estimate.mean)


def test_ddp_stochastic_stop_rule():
    tree, _ = finite_state_instance(T=2, K=3, seed=2)
    cfg = StochasticConfig(samples=1, seed=0, max_iters=500, stop_rule=StopRule.lb_stall(window=3, tol=0.0))
    result = ddp_stochastic(recombine(tree), make_grid_oracles(tree), cfg)
    assert result.status is Status.STOPPED
    assert result.iterations < 500


def test_threads_do_not_change_results():
    tree, _ = finite_state_instance(T=2, K=3, seed=5, branching=2)
    a = nested_decomposition(tree, make_grid_oracles(tree), 0.0, threads=1)
    b = nested_decomposition(tree, make_grid_oracles(tree), 0.0, threads=3)
    assert a.trace.lower_bounds == b.trace.lower_bounds
    assert a.trace.upper_bounds == b.trace.upper_bounds


@pytest.mark.parametrize('threads', [1, 3])
def test_ddp_stochastic_same_seed_same_trace(threads):
    tree, _ = finite_state_instance(T=2, K=3, seed=2, branching=3)
    rtree = recombine(tree)
    cfg = StochasticConfig(samples=2, seed=9, max_iters=15, stop_rule=None)
    runs = [ddp_stochastic(rtree, make_grid_oracles(tree), cfg, threads=threads) for _ in range(2)]
    first, second = ([(r.iteration, r.lower, r.cuts, r.oracle_calls) for r in run.trace.rows] for run in runs)
    assert first == second
    t.assert_array_equal(runs[0].x, runs[1].x)
