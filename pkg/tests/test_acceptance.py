"""End-to-end checks of the drivers against brute-force value functions and iteration bounds."""
import math

import numpy as np
import pytest

from msddp.algorithms import (Status, StochasticConfig, compute_cut_constants, ddp_deterministic, ddp_stochastic,
                              nested_decomposition)
from msddp.approx import UnderApprox
from msddp.bounds import BoundParams, evaluate_bounds
from msddp.instances import (brute_force_value_functions, example_convex_nonlipschitz, example_milp_discontinuous,
                             finite_state_instance, lipschitz_chain)
from msddp.model import recombine
from msddp.oracles import backward_solve, make_grid_oracles

from .conftest import linear_leaf_tree


def _tolerance(values):
    return 1e-6 * (1.0 + np.abs(values))


SANDWICH_CASES = {
    'convex-nonlipschitz': lambda: example_convex_nonlipschitz(h=0.05)[0],
    'milp-sigma5': lambda: example_milp_discontinuous(sigma=5.0, h=0.05)[0],
    'milp-sigma2': lambda: example_milp_discontinuous(sigma=2.0, h=0.05)[0],
    **{f'finite-{seed}': (lambda seed=seed: finite_state_instance(T=2, K=3, seed=seed, branching=2)[0])
       for seed in range(5)},
}


def _check_sandwich(table, nodes, under, over):
    for node in nodes:
        X = table.state_grid[node.id]
        feasible = ~np.ma.getmaskarray(table.expected[node.id]) & ~np.ma.getmaskarray(table.expected_reg[node.id])
        exact = np.ma.getdata(table.expected[node.id])[feasible]
        exact_reg = np.ma.getdata(table.expected_reg[node.id])[feasible]
        assert np.all(under(node).evaluate_many(X)[feasible] <= exact + _tolerance(exact))
        assert np.all(over(node).evaluate_many(X)[feasible] >= exact_reg - _tolerance(exact_reg))


@pytest.mark.parametrize('algorithm', ['nbd', 'ddp-det'])
@pytest.mark.parametrize('case', list(SANDWICH_CASES))
def test_under_and_over_sandwich_the_value_function(case, algorithm):
    tree = SANDWICH_CASES[case]()
    table = brute_force_value_functions(tree)
    inner = [node for node in tree if node.children]
    lower, upper = [], []
    for iterations in (1, 2, 3):
        if algorithm == 'nbd':
            result = nested_decomposition(tree, make_grid_oracles(tree), 0.0, max_iters=iterations)
            _check_sandwich(table, inner, lambda n: result.approximations[n.id],
                            lambda n: result.over_approximations[n.id])
        else:
            result = ddp_deterministic(recombine(tree), make_grid_oracles(tree), 0.0, max_iters=iterations)
            _check_sandwich(table, inner, lambda n: result.approximations[n.stage],
                            lambda n: result.over_approximations[n.stage])
        assert result.lower_bound <= table.v_reg + 1e-9
        if np.isfinite(result.upper_bound):
            assert table.v_reg <= result.upper_bound + 1e-9
        lower.append(result.lower_bound)
        upper.append(result.upper_bound)
    assert all(b >= a - 1e-12 for a, b in zip(lower, lower[1:]))
    assert all(b <= a + 1e-12 for a, b in zip(upper, upper[1:]))


@pytest.mark.parametrize('seed', range(4))
@pytest.mark.parametrize('K', [3, 5])
@pytest.mark.parametrize('T', [2, 3, 4])
def test_finite_state_exact_within_tk_iterations(T, K, seed):
    tree, _ = finite_state_instance(T=T, K=K, seed=seed)
    v = brute_force_value_functions(tree).v_prim
    result = ddp_deterministic(recombine(tree), make_grid_oracles(tree), 0.0)
    assert result.status is Status.CONVERGED
    assert result.iterations <= T * K
    assert result.gap <= 1e-9
    assert result.lower_bound == pytest.approx(v, abs=1e-9)


@pytest.mark.parametrize('samples', [1, 3])
def test_stochastic_lower_bound_valid_and_converging(samples):
    tree, _ = finite_state_instance(T=2, K=3, seed=8, branching=3)
    v = brute_force_value_functions(tree).v_reg
    rtree = recombine(tree)
    reached = 0
    for seed in range(1, 6):
        cfg = StochasticConfig(samples=samples, seed=seed, max_iters=200, stop_rule=None)
        result = ddp_stochastic(rtree, make_grid_oracles(tree), cfg)
        assert all(lb <= v + 1e-9 for lb in result.trace.lower_bounds)
        reached += result.lower_bound >= v - 1e-3
    assert reached >= 4


@pytest.mark.parametrize('seed', range(5))
def test_certified_sigma_keeps_the_optimal_value(seed):
    tree, meta = finite_state_instance(T=3, K=4, seed=seed, branching=2)
    assert meta.sigma_certified
    table = brute_force_value_functions(tree)
    assert table.v_reg == pytest.approx(table.v_prim, abs=1e-9)
    for node in tree:
        if node.parent is not None:
            assert np.all(table.QR[node.id] <= table.Q[node.id] + 1e-9)


@pytest.mark.parametrize('T', [2, 3])
def test_lipschitz_chain_regularization_close(T):
    tree, meta = lipschitz_chain(T=T, d=1, D=1.0, L=1.0, eps=0.1)
    table = brute_force_value_functions(tree)
    allowance = 2 * meta.h * (meta.sigma + meta.extra['L'])
    for node in tree:
        if node.parent is not None:
            gap = np.ma.abs(table.QR[node.id] - table.Q[node.id])
            assert float(gap.max()) <= allowance


def _cut_values(sol, x_hat, theta, data, X):
    constant = compute_cut_constants(sol, x_hat, theta, data)
    return constant + (X - x_hat) @ sol.lam - sol.rho * data.penalty.norm.norm(x_hat[None, :] - X)


@pytest.mark.parametrize('tree_of', [
    lambda: finite_state_instance(T=2, K=4, seed=2, branching=2)[0],
    lambda: example_milp_discontinuous(sigma=5.0, h=0.05)[0],
    lambda: example_convex_nonlipschitz(h=0.05)[0],
    lambda: linear_leaf_tree(),
])
def test_cuts_are_valid_and_tight_at_leaves(tree_of):
    tree = tree_of()
    table = brute_force_value_functions(tree)
    oracles = make_grid_oracles(tree)
    for node in tree:
        if node.parent is None:
            continue
        X = table.parent_grid[node.id]
        Q, QR = table.Q[node.id], table.QR[node.id]
        feasible = ~np.ma.getmaskarray(Q)
        theta = UnderApprox(node.data.dim)
        for a in np.flatnonzero(feasible):
            x_hat = X[a]
            sol = backward_solve(oracles, node.id, x_hat, theta)
            values = np.ma.getdata(Q)[feasible]
            # any dual pair gives a cut below Q, whatever Theta underestimates
            assert np.all(_cut_values(sol, x_hat, theta, node.data, X[feasible]) <= values + _tolerance(values))
            if not node.children:
                exact = float(QR[a])
                assert sol.saddle_value >= exact - 1e-6 * (1.0 + abs(exact))


@pytest.mark.slow
def test_lipschitz_chain_needs_linear_iterations():
    for T in (2, 4, 8):
        tree, meta = lipschitz_chain(T=T, d=1, D=1.0, L=1.0, eps=0.1)
        oracles = make_grid_oracles(tree, adversarial=True)
        result = nested_decomposition(tree, oracles, 0.1, max_iters=2000)
        assert result.status is Status.CONVERGED
        assert abs(result.upper_bound - meta.optimal_value) <= 0.1 + 1e-9
        lower = evaluate_bounds(BoundParams(eps=0.1, T=T, d=1, D=1.0, L=1.0)).lipschitz_lower.value
        assert lower == pytest.approx(2.5 * T)
        assert result.iterations >= math.ceil(lower)
