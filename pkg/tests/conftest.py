import numpy as np
import pytest

from msddp import config
from msddp.costs import make_cost
from msddp.instance_io import InstanceDescription, InstanceMeta, NodeSpec
from msddp.model import (Box, DualBounds, FeasibleSet, FiniteSet, NodeData, NormKind, PenaltySpec,
                         build_tree)


def node_data(family, params=None, space=None, sigma=1.0, norm='l1', convex=False, internal=None,
              l_lambda=None, l_rho=None):
    """NodeData with dual bounds matching sigma unless given."""
    if convex:
        bounds = DualBounds(sigma if l_lambda is None else l_lambda, 0.0)
    else:
        bounds = DualBounds(0.0 if l_lambda is None else l_lambda, sigma if l_rho is None else l_rho)
    return NodeData(cost=make_cost(family, params or {}),
                    state_space=space if space is not None else FiniteSet(((0.0,),)),
                    penalty=PenaltySpec(NormKind(norm), sigma), dual_bounds=bounds,
                    feasible=FeasibleSet(internal=internal), convex=convex)


def describe_nodes(nodes, data, name='test'):
    """Description from (id, parent, prob, data key[, class]) tuples."""
    return InstanceDescription(meta=InstanceMeta(name=name), nodes=[NodeSpec(*n) for n in nodes],
                               node_data=data)


def linear_leaf_tree(h=0.25, sigma=3.0, convex=True):
    """Root cost 1 - x on [0, 1]; one leaf with Q(z) = 2z."""
    data = {
        'root': node_data('affine', {'constant': 1.0, 'x': [-1.0]}, Box((0.0,), (1.0,), h), sigma),
        'leaf': node_data('affine', {'z': [2.0]}, sigma=sigma, convex=convex),
    }
    return build_tree(describe_nodes([('r', None, 1.0, 'root'), ('l', 'r', 1.0, 'leaf')], data))


@pytest.fixture
def no_timing(monkeypatch):
    """Traces with ms = 0 so runs are byte-reproducible."""
    monkeypatch.setattr(config, 'TRACE_TIMING', False)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
