import numpy as np
import pytest
from numpy import testing as t

from msddp.errors import (BadDualBounds, BadProbability, DuplicateNodeId, GridTooLarge, InconsistentPenalty,
                          ModelError, NegativeCost, NotStagewiseIndependent, OrphanNode)
from msddp.model import Ball, Box, DualBounds, FeasibleSet, FiniteSet, NormKind, PenaltySpec, build_tree, recombine

from .conftest import describe_nodes, node_data


def test_box_grid():
    grid = Box((0.0,), (1.0,), 0.25).grid
    t.assert_allclose(grid[:, 0], [0.0, 0.25, 0.5, 0.75, 1.0])
    assert Box((0.0, 0.0), (1.0, 2.0), 0.5).grid.shape == (15, 2)


def test_ball_grid():
    ball = Ball((0.0, 0.0), 1.0, 0.5)
    assert ball.grid.shape == (13, 2)
    assert np.all(np.linalg.norm(ball.grid, axis=1) <= 1.0 + 1e-12)
    with_extra = Ball((0.0, 0.0), 1.0, 0.5, extra=((0.6, 0.8),))
    assert with_extra.grid.shape == (14, 2)


def test_finite_set_sorted_unique():
    space = FiniteSet(((1.0,), (0.0,), (1.0,)))
    t.assert_allclose(space.grid[:, 0], [0.0, 1.0])
    assert space.is_finite and space.cardinality == 2


def test_grid_guard(monkeypatch):
    from msddp import config
    monkeypatch.setattr(config, 'MAX_GRID_POINTS', 10)
    with pytest.raises(GridTooLarge):
        Box((0.0,), (1.0,), 0.01).grid


def test_space_validation():
    with pytest.raises(ModelError):
        Box((1.0,), (0.0,), 0.1)
    with pytest.raises(ModelError):
        FiniteSet(())
    with pytest.raises(ModelError):
        PenaltySpec(NormKind.L1, 0.0)


def test_feasible_pairs():
    fg = FeasibleSet(pairs=(((0.0,), (1.0,)), ((1.0,), (1.0,)), ((1.0,), (0.0,)))).enumerate(None)
    t.assert_allclose(fg.x[:, 0], [0.0, 1.0])
    t.assert_allclose(fg.y[:, 0], [0.0, 1.0])
    t.assert_array_equal(fg.allowed, [[False, True], [True, True]])


def test_norms():
    v = np.array([3.0, -4.0])
    assert NormKind.L1.norm(v) == 7.0
    assert NormKind.L2.norm(v) == 5.0
    assert NormKind.LINF.norm(v) == 4.0
    assert NormKind.L1.dual is NormKind.LINF


def test_dual_bounds_check():
    with pytest.raises(BadDualBounds):
        DualBounds(0.0, 1.0).check(PenaltySpec(NormKind.L1, 2.0), convex=False)
    with pytest.raises(BadDualBounds):
        DualBounds(2.0, 1.0).check(PenaltySpec(NormKind.L1, 2.0), convex=True)
    DualBounds(2.0, 0.0).check(PenaltySpec(NormKind.L1, 2.0), convex=True)


def _two_stage(probs=(0.5, 0.5), leaf_cost=None):
    data = {'root': node_data('constant', {'value': 0.0}),
            'leaf': leaf_cost or node_data('constant', {'value': 1.0})}
    nodes = [('r', None, 1.0, 'root')] + [(f"c{i}", 'r', p, 'leaf') for i, p in enumerate(probs)]
    return describe_nodes(nodes, data)


def test_build_tree():
    tree = build_tree(_two_stage())
    assert tree.horizon == 1 and len(tree) == 3
    assert [n.id for n in tree.nodes_at(1)] == ['c0', 'c1']
    assert tree.node('c1').prob == pytest.approx(0.5)
    assert tree.parent_space('r').dim == 0


def test_build_tree_errors():
    with pytest.raises(BadProbability):
        build_tree(_two_stage((0.5, 0.4)))
    with pytest.raises(NegativeCost):
        build_tree(_two_stage(leaf_cost=node_data('constant', {'value': -1.0})))

    data = {'d': node_data('constant')}
    with pytest.raises(DuplicateNodeId):
        build_tree(describe_nodes([('r', None, 1.0, 'd'), ('r', 'r', 1.0, 'd')], data))
    with pytest.raises(OrphanNode):
        build_tree(describe_nodes([('r', None, 1.0, 'd'), ('a', 'x', 1.0, 'd')], data))
    with pytest.raises(ModelError):
        build_tree(describe_nodes([('r', None, 1.0, 'missing')], data))


def test_inconsistent_penalty():
    data = {'root': node_data('constant'), 'a': node_data('constant', norm='l1'),
            'b': node_data('constant', norm='l2')}
    with pytest.raises(InconsistentPenalty):
        build_tree(describe_nodes([('r', None, 1.0, 'root'), ('a', 'r', 0.5, 'a'), ('b', 'r', 0.5, 'b')], data))


def test_recombine():
    data = {'root': node_data('constant'), 'A': node_data('constant', {'value': 1.0}),
            'B': node_data('constant', {'value': 2.0})}
    nodes = [('r', None, 1.0, 'root')]
    for i in range(2):
        key = 'AB'[i]
        nodes.append((f"{i}", 'r', 0.5, key))
        for j in range(2):
            nodes.append((f"{i}{j}", f"{i}", 0.5, 'AB'[j]))
    rtree = recombine(build_tree(describe_nodes(nodes, data)))
    assert rtree.counts == [1, 2, 2]
    assert [m.klass for m in rtree.templates(2)] == ['A', 'B']
    t.assert_allclose(rtree.probabilities(2), [0.5, 0.5])
    assert rtree.templates(2)[1].node_ids == ('01', '11')


def test_recombine_rejects_dependent_tree():
    data = {'root': node_data('constant'), 'A': node_data('constant'), 'B': node_data('constant'),
            'C': node_data('constant', {'value': 1.0}), 'D': node_data('constant', {'value': 2.0})}
    nodes = [('r', None, 1.0, 'root'), ('a', 'r', 0.5, 'A'), ('b', 'r', 0.5, 'B'),
             ('c', 'a', 1.0, 'C'), ('d', 'b', 1.0, 'D')]
    with pytest.raises(NotStagewiseIndependent):
        recombine(build_tree(describe_nodes(nodes, data)))


def test_regridded():
    data = {'root': node_data('constant', space=Box((0.0,), (1.0,), 0.5)), 'leaf': node_data('constant')}
    tree = build_tree(describe_nodes([('r', None, 1.0, 'root'), ('l', 'r', 1.0, 'leaf')], data))
    assert tree.parent_space('l').grid.shape[0] == 3
    assert tree.regridded(0.25).parent_space('l').grid.shape[0] == 5
