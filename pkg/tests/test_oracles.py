import numpy as np
import pytest
from numpy import testing as t

from msddp import config
from msddp.algorithms import compute_cut_constants
from msddp.approx import UnderApprox
from msddp.errors import BadParams, GridTooLarge, InfeasibleNode
from msddp.instances import example_convex_nonlipschitz, example_milp_discontinuous
from msddp.model import Box, FiniteSet
from msddp.oracles import (CapLeafOracle, CoverLeafOracle, GridOracle, backward_solve, forward_solve,
                           make_analytic_oracles, make_grid_oracles, root_solve)

from .conftest import linear_leaf_tree, node_data


def test_forward_linear_leaf():
    tree = linear_leaf_tree()
    oracles = make_grid_oracles(tree)
    sol = forward_solve(oracles, 'l', [0.5], UnderApprox(1))
    assert sol.objective == pytest.approx(1.0)
    t.assert_allclose(sol.z, [0.5])
    assert sol.model_error == pytest.approx(0.25 * (2.0 + 3.0))


def test_backward_convex_recovers_slope():
    tree = linear_leaf_tree()
    oracles = make_grid_oracles(tree)
    theta = UnderApprox(1)
    sol = backward_solve(oracles, 'l', [0.5], theta)
    t.assert_allclose(sol.lam, [2.0])
    assert sol.rho == 0.0
    assert sol.saddle_value == pytest.approx(1.0)
    assert compute_cut_constants(sol, [0.5], theta, tree.node('l').data) == pytest.approx(1.0)


def test_backward_nonconvex_uses_rho_bound():
    tree = linear_leaf_tree(convex=False)
    sol = backward_solve(make_grid_oracles(tree), 'l', [0.5], UnderApprox(1))
    t.assert_allclose(sol.lam, [0.0])
    assert sol.rho == 3.0
    assert sol.saddle_value == pytest.approx(1.0)


def test_root_solve():
    oracles = make_grid_oracles(linear_leaf_tree())
    sol = root_solve(oracles, UnderApprox(1, [1.0], [oracles['l'].data.dual_bounds]))
    t.assert_allclose(sol.x, [1.0])
    assert sol.objective == pytest.approx(0.0)
    assert oracles.calls == 1


def test_lexicographic_and_adversarial_ties():
    data = node_data('constant', space=Box((0.0,), (1.0,), 0.25))
    plain = GridOracle('r', data, FiniteSet(((),)))
    assert [float(plain.root(UnderApprox(1)).x[0]) for _ in range(3)] == [0.0, 0.0, 0.0]

    adversarial = GridOracle('r', data, FiniteSet(((),)), adversarial=True)
    picks = [float(adversarial.root(UnderApprox(1)).x[0]) for _ in range(3)]
    assert picks == [0.0, 1.0, 0.5]


def test_infeasible_node():
    data = node_data('table', {'z_points': [[0.0]], 'x_points': [[0.0]], 'values': [[None]]})
    oracle = GridOracle('n', data, FiniteSet(((0.0,),)))
    with pytest.raises(InfeasibleNode):
        oracle.forward([0.0], UnderApprox(1))


def test_grid_too_large(monkeypatch):
    monkeypatch.setattr(config, 'MAX_GRID_POINTS', 50)
    data = node_data('constant', space=Box((0.0,), (1.0,), 0.01))
    with pytest.raises(GridTooLarge):
        GridOracle('n', data, FiniteSet(((),)))


def test_cap_leaf_closed_form():
    tree, _ = example_convex_nonlipschitz()
    leaf = tree.node('n1')
    oracle = CapLeafOracle('n1', leaf.data, tree.parent_space('n1'))
    fwd = oracle.forward([1.0], UnderApprox(1))
    t.assert_allclose(fwd.z, [0.8], atol=1e-12)
    assert fwd.objective == pytest.approx(2.0 / 3.0)
    back = oracle.backward([1.0], UnderApprox(1))
    t.assert_allclose(back.lam, [4.0 / 3.0])
    assert back.saddle_value == pytest.approx(2.0 / 3.0)


def test_cover_leaf_closed_form():
    tree, _ = example_milp_discontinuous(sigma=5.0)
    leaf = tree.node('n1')
    oracle = CoverLeafOracle('n1', leaf.data, tree.parent_space('n1'))
    assert oracle.forward([0.5], UnderApprox(1)).objective == pytest.approx(1.0)
    assert oracle.forward([0.1], UnderApprox(1)).objective == pytest.approx(0.5)
    back = oracle.backward([1.0], UnderApprox(1))
    assert back.saddle_value == pytest.approx(1.0)
    assert back.rho == 5.0
    with pytest.raises(BadParams):
        CapLeafOracle('n1', leaf.data, tree.parent_space('n1'))


def test_grid_and_closed_form_agree_on_grid_points():
    tree, _ = example_milp_discontinuous(sigma=2.0, h=0.05)
    grid = make_grid_oracles(tree)
    analytic = make_analytic_oracles(tree, 'milp-discontinuous')
    for xp in (0.0, 0.25, 0.5, 1.0):
        a = grid.backward('n1', [xp], UnderApprox(1)).saddle_value
        b = analytic.backward('n1', [xp], UnderApprox(1)).saddle_value
        assert a == pytest.approx(b)
    with pytest.raises(BadParams):
        make_analytic_oracles(tree, 'unknown')


def test_shared_grids():
    tree, _ = example_convex_nonlipschitz(h=0.1)
    oracles = make_grid_oracles(tree)
    assert oracles['n1'].grid.z.shape == (11, 1)
    assert oracles['n0'].grid.x.shape == (11, 1)
