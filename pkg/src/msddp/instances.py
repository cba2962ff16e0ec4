"""Instance generators and the brute-force grid value function oracle.

Every generator has a ``describe_*`` counterpart returning the
:class:`~msddp.instance_io.InstanceDescription` it builds, so instances can
be written to disk with :func:`~msddp.instance_io.emit_instance`.
"""
import logging
import math
from dataclasses import dataclass, replace
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import config
from .approx import ConjugacyCut, EnvelopeMode, OverApprox, OverPoint, UnderApprox, pairwise_distances
from .bounds import cap_count_bound
from .costs import make_cost
from .errors import (BadDepth, BadParams, CandidateSetTooSparse, GridTooLarge, InfeasibleNode,
                     ModelError, NotFiniteState)
from .instance_io import InstanceDescription, InstanceMeta, NodeSpec, OracleSpec
from .model import (Ball, Box, DualBounds, FeasibleSet, FiniteSet, NodeData, NormKind, PenaltySpec,
                    ScenarioTree, StateSpace, build_tree)

logger = logging.getLogger(__name__)

__all__ = [
    'InstanceMeta', 'ValueTable', 'SphericalCapSet', 'LipschitzWitness',
    'example_convex_nonlipschitz', 'example_milp_discontinuous', 'lipschitz_chain',
    'spherical_cap_points', 'convex_worstcase', 'finite_state_instance', 'exact_sigma_finite',
    'with_certified_sigma', 'brute_force_value_functions', 'lipschitz_witness', 'leave_one_out_gaps',
    'describe', 'GENERATORS',
]


def _positive(**values):
    for name, value in values.items():
        if not value > 0:
            raise BadParams(f"{name} must be positive, got {value}")


def _data(cost, space, norm, sigma, l_lambda, l_rho, convex=False, internal=None) -> NodeData:
    return NodeData(cost=cost, state_space=space, penalty=PenaltySpec(NormKind(norm), sigma),
                    dual_bounds=DualBounds(l_lambda, l_rho), feasible=FeasibleSet(internal=internal),
                    convex=convex)


def _chain(keys: Sequence[str]) -> List[NodeSpec]:
    return [NodeSpec(id=f"n{t}", parent=None if t == 0 else f"n{t - 1}", prob=1.0, data=key,
                     klass=f"stage{t}") for t, key in enumerate(keys)]


def _build(description: InstanceDescription) -> Tuple[ScenarioTree, InstanceMeta]:
    return build_tree(description), description.meta


# Two-stage examples

def describe_convex_nonlipschitz(h: float = 1e-3, sigma: float = 4.0 / 3.0) -> InstanceDescription:
    """min x + Q(x) on [0, 1] with Q(x) = 1 - sqrt(1 - x^2) from a quadratic cap."""
    _positive(h=h, sigma=sigma)
    root = _data(make_cost('affine', {'x': [1.0]}), Box((0.0,), (1.0,), h), 'l2', sigma, sigma, 0.0,
                 convex=True)
    leaf = _data(make_cost('quadratic_cap', {'center': 1.0, 'radius': 1.0}), FiniteSet(((0.0,),)),
                 'l2', sigma, sigma, 0.0, convex=True, internal=Box((0.0,), (1.0,), h))
    meta = InstanceMeta(name='convex-nonlipschitz', convex=True, optimal_value=0.0,
                        provenance='closed form Q(x) = 1 - sqrt(1 - x^2), optimum x = 0',
                        sigma=sigma, norm='l2', l_lambda=sigma, l_rho=0.0, h=h)
    return InstanceDescription(meta=meta, nodes=_chain(['root', 'leaf']),
                               node_data={'root': root, 'leaf': leaf})


def example_convex_nonlipschitz(h: float = 1e-3, sigma: float = 4.0 / 3.0):
    return _build(describe_convex_nonlipschitz(h, sigma))


def describe_milp_discontinuous(sigma: float = 5.0, h: float = 1e-3,
                                finite_states: bool = False) -> InstanceDescription:
    """min 1 - 2x + z with z >= x, x in [0, 1], z binary; costs shifted by +1."""
    _positive(h=h, sigma=sigma)
    space = FiniteSet(((0.0,), (1.0,))) if finite_states else Box((0.0,), (1.0,), h)
    root = _data(make_cost('affine', {'constant': 2.0, 'x': [-2.0]}), space, 'l1', sigma, 0.0, sigma)
    leaf = _data(make_cost('integer_cover', {'weights': [1.0]}), FiniteSet(((0.0,),)), 'l1', sigma, 0.0,
                 sigma, internal=FiniteSet(((0.0,), (1.0,))))
    meta = InstanceMeta(name='milp-discontinuous', optimal_value=0.0,
                        provenance='enumeration: optimum (x, z) = (1, 1)', shift=1.0, sigma=sigma,
                        norm='l1', l_lambda=0.0, l_rho=sigma, h=None if finite_states else h)
    description = InstanceDescription(meta=meta, nodes=_chain(['root', 'leaf']),
                                      node_data={'root': root, 'leaf': leaf})
    # the certificate comes from the {0, 1} restriction of the root state
    finite = description if finite_states else describe_milp_discontinuous(sigma, h, finite_states=True)
    sigmas = exact_sigma_finite(build_tree(finite))
    description.meta = replace(meta, certified_sigma=sigmas['n1'])
    return description


def example_milp_discontinuous(sigma: float = 5.0, h: float = 1e-3, finite_states: bool = False):
    return _build(describe_milp_discontinuous(sigma, h, finite_states))


# Lower-bound families

def describe_lipschitz_chain(T: int, d: int, D: float, L: float, eps: float,
                             h: Optional[float] = None) -> InstanceDescription:
    """Chain with constant stage costs 3 beta / 2, beta = eps / T, on balls of diameter D."""
    if T < 1 or d < 1:
        raise BadParams(f"need T >= 1 and d >= 1, got T={T}, d={d}")
    _positive(D=D, L=L, eps=eps)
    beta = eps / T
    h = h or min(D / 16, beta / 2)
    ball = Ball((0.0,) * d, D / 2, h)
    origin = FiniteSet(((0.0,) * d,))
    stage_cost = make_cost('constant', {'value': 1.5 * beta})
    node_data = {
        'root': _data(make_cost('constant', {'value': 0.0}), ball, 'l2', L, 0.0, L),
        'stage': _data(stage_cost, ball, 'l2', L, 0.0, L),
        'leaf': _data(stage_cost, origin, 'l2', L, 0.0, L),
    }
    keys = ['root'] + ['stage'] * (T - 1) + ['leaf']
    meta = InstanceMeta(name='lipschitz_chain', optimal_value=1.5 * eps, provenance='sum of constant stage costs',
                        sigma=L, norm='l2', l_lambda=0.0, l_rho=L, h=h, adversarial=True,
                        extra={'T': T, 'd': d, 'D': D, 'L': L, 'eps': eps, 'beta': beta})
    return InstanceDescription(meta=meta, nodes=_chain(keys), node_data=node_data,
                               oracle=OracleSpec(adversarial=True))


def lipschitz_chain(T: int, d: int, D: float, L: float, eps: float, h: Optional[float] = None):
    return _build(describe_lipschitz_chain(T, d, D, L, eps, h))


@dataclass(frozen=True, eq=False)
class SphericalCapSet:
    """Points on the d-sphere of radius R, none inside another's cap of depth beta."""
    d: int
    radius: float
    beta: float
    points: np.ndarray

    @property
    def count(self) -> int:
        return self.points.shape[0]

    @property
    def bound(self) -> float:
        return cap_count_bound(self.d, self.radius, self.beta)

    def separated(self) -> bool:
        """Pairwise <w_j - w_k, w_k> < -beta R for all j != k."""
        gram = self.points @ self.points.T
        lhs = gram - np.diag(gram)[None, :]
        np.fill_diagonal(lhs, -np.inf)
        return bool(np.all(lhs < -self.beta * self.radius))


def _sphere_candidates(d: int, n: int, seed: int) -> np.ndarray:
    """Quasi-uniform unit vectors in R^(d+1)."""
    if d == 2:
        i = np.arange(n) + 0.5
        z = 1.0 - 2.0 * i / n
        r = np.sqrt(1.0 - z * z)
        phi = np.pi * (3.0 - np.sqrt(5.0)) * i
        pts = np.stack([r * np.cos(phi), r * np.sin(phi), z], axis=1)
    else:
        pts = np.random.default_rng(seed).standard_normal((n, d + 1))
    return pts / np.linalg.norm(pts, axis=1, keepdims=True)


def spherical_cap_points(d: int, R: float, beta: float, n_candidates: int = config.SPHERE_CANDIDATES,
                         seed: int = 0, check_bound: bool = True) -> SphericalCapSet:
    """Greedy maximal cap packing over a dense candidate set."""
    if d < 2:
        raise BadDepth(f"cap packings need a sphere of dimension >= 2, got {d}")
    _positive(R=R, beta=beta)
    if beta >= (1.0 - math.sqrt(2.0) / 2.0) * R:
        raise BadDepth(f"depth {beta} must stay below (1 - sqrt(2)/2) R = {(1 - math.sqrt(2) / 2) * R:.6g}")
    remaining = R * _sphere_candidates(d, n_candidates, seed)
    threshold = R * R - beta * R
    chosen = []
    while remaining.shape[0]:
        w = remaining[0]
        chosen.append(w)
        remaining = remaining[remaining @ w < threshold]
    caps = SphericalCapSet(d, float(R), float(beta), np.array(chosen))
    if check_bound and caps.count < caps.bound:
        raise CandidateSetTooSparse(f"{caps.count} caps from {n_candidates} candidates, "
                                    f"at least {caps.bound:.3f} required")
    logger.debug(f"Packed {caps.count} caps of depth {beta} on the {d}-sphere")
    return caps


def stage_levels(T: int, L: float) -> List[float]:
    """Lipschitz constants L = L_1 > ... > L_T = L / 2."""
    return [L * (1.0 - (t - 1) / (2.0 * (T - 1))) for t in range(1, T + 1)]


def describe_convex_worstcase(T: int, d: int, D: float, L: float, eps: float, seed: int = 0,
                              h: Optional[float] = None,
                              n_candidates: int = config.SPHERE_CANDIDATES) -> InstanceDescription:
    """Stagewise independent convex instance whose templates sit on cap packings."""
    if T < 2 or d < 3:
        raise BadParams(f"need T >= 2 and d >= 3, got T={T}, d={d}")
    _positive(D=D, L=L, eps=eps)
    R = D / 2
    h = h or R / 5
    levels = stage_levels(T, L)
    rng = np.random.default_rng(seed)
    lo, hi = eps / (2 * T - 2), eps / (T - 1)
    anchors, values = [], []
    for t in range(1, T):
        caps = spherical_cap_points(d - 1, R, eps / ((T - 1) * levels[t]), n_candidates, seed + t)
        anchors.append(caps.points)
        values.append(rng.uniform(lo + 1e-9, hi - 1e-9, caps.count))

    extra = tuple(tuple(float(v) for v in w) for pts in anchors for w in pts)
    ball = Ball((0.0,) * d, R, h, extra=extra)
    origin = FiniteSet(((0.0,) * d,))

    def envelope(t):
        # F_t, Lipschitz with constant L_{t+1}
        return {'anchors': anchors[t - 1].tolist(), 'values': values[t - 1].tolist(),
                'slope': levels[t] / R}

    node_data = {'root': _data(make_cost('cap_envelope', {}), ball, 'l2', levels[0], levels[0], 0.0,
                               convex=True)}
    stages: List[List[str]] = [['root']]
    for t in range(1, T):
        keys = []
        for k, w in enumerate(anchors[t - 1]):
            params = {'target': w.tolist(), 'weight': levels[t - 1]}
            if t > 1:
                params.update(envelope(t - 1))
            key = f"s{t}k{k}"
            node_data[key] = _data(make_cost('cap_envelope', params), ball, 'l2', levels[t - 1],
                                   levels[t - 1], 0.0, convex=True)
            keys.append(key)
        stages.append(keys)
    node_data['leaf'] = _data(make_cost('cap_envelope', envelope(T - 1)), origin, 'l2', levels[T - 1],
                              levels[T - 1], 0.0, convex=True)
    stages.append(['leaf'])

    nodes = [NodeSpec('r', None, 1.0, 'root', 'root')]
    frontier = ['r']
    for keys in stages[1:]:
        nxt = []
        for parent in frontier:
            for k, key in enumerate(keys):
                nid = f"{parent}.{k}"
                nodes.append(NodeSpec(nid, parent, 1.0 / len(keys), key, key))
                nxt.append(nid)
        frontier = nxt

    meta = InstanceMeta(name='convex_worstcase', convex=True, provenance='cap packing construction',
                        sigma=L, norm='l2', l_lambda=L, l_rho=0.0, h=h,
                        extra={'T': T, 'd': d, 'D': D, 'L': L, 'eps': eps, 'seed': seed, 'levels': levels,
                               'anchors': [a.tolist() for a in anchors],
                               'values': [v.tolist() for v in values]})
    return InstanceDescription(meta=meta, nodes=nodes, node_data=node_data)


def convex_worstcase(T: int, d: int, D: float, L: float, eps: float, seed: int = 0,
                     h: Optional[float] = None, n_candidates: int = config.SPHERE_CANDIDATES):
    return _build(describe_convex_worstcase(T, d, D, L, eps, seed, h, n_candidates))


def leave_one_out_gaps(anchors, values, lipschitz: float) -> np.ndarray:
    """Q_over(w_l) - Q_under(w_l) with anchor l left out of both envelopes.

    The under-envelope uses the gradients (L / R) w_k of the cap function, the
    over-envelope is the convex hull of the cones v_k + L ||x - w_k||.
    """
    anchors = np.asarray(anchors, dtype=float)
    values = np.asarray(values, dtype=float)
    K, d = anchors.shape
    radius = float(np.linalg.norm(anchors[0]))
    grads = lipschitz / radius * anchors
    gaps = np.empty(K)
    for l in range(K):
        others = np.arange(K) != l
        under = np.max(np.r_[0.0, values[others] + np.sum(grads[others] * (anchors[l] - anchors[others]), axis=1)])
        over = OverApprox(d, lipschitz, NormKind.L2, EnvelopeMode.CONVEX_HULL)
        for w, v in zip(anchors[others], values[others]):
            over.add_point(OverPoint(w, float(v), lipschitz))
        gaps[l] = over.evaluate(anchors[l]) - under
    return gaps


@dataclass(frozen=True, eq=False)
class LipschitzWitness:
    points: np.ndarray
    values: np.ndarray
    under: UnderApprox
    over: OverApprox
    grid: np.ndarray
    beta: float


def lipschitz_witness(d: int, D: float, L: float, beta: float, K: int, seed: int = 0,
                      h: Optional[float] = None) -> LipschitzWitness:
    """Envelopes from K < (DL / 4 beta)^d anchors with values in (beta, 2 beta)."""
    _positive(D=D, L=L, beta=beta)
    if K < 1 or K >= (D * L / (4 * beta)) ** d:
        raise BadParams(f"K must lie in [1, (DL/4beta)^d) = [1, {(D * L / (4 * beta)) ** d:.3f})")
    rng = np.random.default_rng(seed)
    ball = Ball((0.0,) * d, D / 2, h or D / 20)
    grid = ball.grid
    points = grid[rng.choice(grid.shape[0], size=K, replace=False)]
    values = rng.uniform(beta * (1 + 1e-6), 2 * beta * (1 - 1e-6), K)
    penalty = PenaltySpec(NormKind.L2, L)
    under = UnderApprox(d, [1.0], [DualBounds(0.0, L)])
    over = OverApprox(d, L, NormKind.L2)
    for w, v in zip(points, values):
        under.add_bundle([ConjugacyCut(w.copy(), np.zeros(d), L, float(v), penalty)])
        over.add_point(OverPoint(w.copy(), float(v), L))
    return LipschitzWitness(points, values, under, over, grid, beta)


# Finite-state instances

def _table(rng, rows: int, cols: int) -> List[List[Optional[float]]]:
    values = rng.integers(0, 10, size=(rows, cols)).astype(float)
    infeasible = rng.random((rows, cols)) < 0.25
    for i in range(rows):
        if infeasible[i].all():
            infeasible[i, rng.integers(cols)] = False
    return [[None if infeasible[i, j] else float(values[i, j]) for j in range(cols)] for i in range(rows)]


def describe_finite_state(T: int, K: int, seed: int = 0, branching: int = 1,
                          certify: bool = True) -> InstanceDescription:
    """Random integer table costs on K states per stage, ``branching`` templates per stage."""
    if T < 1 or K < 1 or branching < 1:
        raise BadParams(f"need T, K, branching >= 1, got {T}, {K}, {branching}")
    rng = np.random.default_rng(seed)
    states = [[float(k)] for k in range(K)]
    space = FiniteSet(tuple((float(k),) for k in range(K)))
    node_data = {'root': _data(make_cost('table', {'z_points': [[]], 'x_points': states,
                                                   'values': _table(rng, 1, K)}), space, 'l1', 1.0, 0.0, 1.0)}
    keys_by_stage = [['root']]
    for t in range(1, T + 1):
        keys = []
        for m in range(branching):
            key = f"s{t}m{m}"
            node_data[key] = _data(make_cost('table', {'z_points': states, 'x_points': states,
                                                       'values': _table(rng, K, K)}), space, 'l1', 1.0, 0.0, 1.0)
            keys.append(key)
        keys_by_stage.append(keys)

    nodes = [NodeSpec('r', None, 1.0, 'root', 'root')]
    frontier = ['r']
    for keys in keys_by_stage[1:]:
        nxt = []
        for parent in frontier:
            for m, key in enumerate(keys):
                nid = f"{parent}.{m}"
                nodes.append(NodeSpec(nid, parent, 1.0 / len(keys), key, key))
                nxt.append(nid)
        frontier = nxt

    meta = InstanceMeta(name='finite_state', provenance='exhaustive enumeration', norm='l1', l_lambda=0.0,
                        extra={'T': T, 'K': K, 'seed': seed, 'branching': branching})
    description = InstanceDescription(meta=meta, nodes=nodes, node_data=node_data)
    return _certify(description) if certify else description


def finite_state_instance(T: int, K: int, seed: int = 0, branching: int = 1):
    return _build(describe_finite_state(T, K, seed, branching))


def _certify(description: InstanceDescription) -> InstanceDescription:
    """Replace every node's sigma by the certified exact penalty factor of its data key."""
    tree = build_tree(description)
    sigmas = exact_sigma_finite(tree)
    per_key: Dict[str, float] = {}
    for spec in description.nodes:
        if spec.parent is not None:
            per_key[spec.data] = max(per_key.get(spec.data, 1.0), sigmas[spec.id])
    node_data = dict(description.node_data)
    for key, sigma in per_key.items():
        node_data[key] = _with_sigma(node_data[key], sigma)
    worst = max(per_key.values(), default=1.0)
    meta = replace(description.meta, sigma=worst, l_rho=worst, sigma_certified=True, certified_sigma=worst,
                   extra={**description.meta.extra, 'sigma': per_key})
    return replace(description, node_data=node_data, meta=meta)


def _with_sigma(data: NodeData, sigma: float) -> NodeData:
    bounds = data.dual_bounds
    if data.convex:
        bounds = DualBounds(max(bounds.l_lambda, sigma), 0.0)
    else:
        bounds = DualBounds(bounds.l_lambda, max(bounds.l_rho, sigma))
    return replace(data, penalty=PenaltySpec(data.penalty.norm, sigma), dual_bounds=bounds)


def exact_sigma_finite(tree: ScenarioTree) -> Dict[str, float]:
    """Exact penalty factors 1 + (v_prim - c) / (p_n d_n) for finite state spaces.

    ``c`` is the optimal value with the coupling z_n = x_parent dropped and
    ``d_n`` the smallest penalty distance between two parent states.
    """
    for node in tree:
        if not node.data.state_space.is_finite:
            raise NotFiniteState(f"node {node.id!r} has a continuous state space")
    table = brute_force_value_functions(tree)
    relaxed = 0.0
    for node in tree:
        Z = tree.parent_space(node.id).grid
        reduced = node.data.cost.reduce(Z, node.data.feasible.enumerate(node.data.state_space))
        relaxed += node.prob * float(reduced.values().min())
    gap = max(table.v_prim - relaxed, 0.0)
    sigmas = {}
    for node in tree:
        Z = tree.parent_space(node.id).grid
        if Z.shape[0] < 2:
            sigmas[node.id] = 1.0
            continue
        dist = pairwise_distances(Z, Z, node.data.penalty.norm)
        np.fill_diagonal(dist, np.inf)
        sigmas[node.id] = 1.0 + gap / (node.prob * float(dist.min()))
    logger.debug(f"Certified sigma: v_prim={table.v_prim}, relaxed={relaxed}")
    return sigmas


def with_certified_sigma(tree: ScenarioTree) -> ScenarioTree:
    """Tree whose sigma (and matching dual bound) is certified exact, per node class."""
    sigmas = exact_sigma_finite(tree)
    per_class: Dict[str, float] = {}
    for node in tree:
        if node.parent is not None:
            per_class[node.klass] = max(per_class.get(node.klass, 1.0), sigmas[node.id])
    return tree.with_data({node.id: _with_sigma(node.data, per_class[node.klass])
                           for node in tree if node.parent is not None})


# Brute-force dynamic programming

@dataclass(frozen=True, eq=False)
class ValueTable:
    """Grid value functions of every node.

    ``Q``/``QR`` live on the parent grid ``parent_grid[n]``; the expected
    cost-to-go ``expected``/``expected_reg`` live on the state grid
    ``state_grid[n]``.
    """
    parent_grid: Dict[str, np.ndarray]
    state_grid: Dict[str, np.ndarray]
    Q: Dict[str, np.ma.MaskedArray]
    QR: Dict[str, np.ma.MaskedArray]
    expected: Dict[str, np.ma.MaskedArray]
    expected_reg: Dict[str, np.ma.MaskedArray]
    v_prim: float
    v_reg: float
    h: Optional[float] = None


def _state_index(grid: np.ndarray, X: np.ndarray) -> np.ndarray:
    if X.shape == grid.shape and np.array_equal(X, grid):
        return np.arange(X.shape[0])
    lookup = {tuple(row): i for i, row in enumerate(grid)}
    try:
        return np.array([lookup[tuple(row)] for row in X], dtype=int)
    except KeyError as e:
        raise ModelError(f"feasible state {e.args[0]} is not a point of the state space grid") from None


def _inf_convolution(G: np.ma.MaskedArray, Z: np.ndarray, penalty: PenaltySpec) -> np.ma.MaskedArray:
    """min over z of G(z) + sigma * psi(x - z) for every grid point x."""
    valid = ~np.ma.getmaskarray(G)
    out = np.ma.masked_all(Z.shape[0])
    if not valid.any():
        return out
    Zv, Gv = Z[valid], np.ma.getdata(G)[valid]
    block = max(1, config.CHUNK_ELEMENTS // Zv.shape[0])
    for start in range(0, Z.shape[0], block):
        dist = pairwise_distances(Z[start:start + block], Zv, penalty.norm)
        out[start:start + block] = (Gv[None, :] + penalty.sigma * dist).min(axis=1)
    return out


def brute_force_value_functions(tree: ScenarioTree, h: Optional[float] = None) -> ValueTable:
    """Primal and regularized value functions by backward recursion on the grids."""
    if h is not None:
        tree = tree.regridded(h)
    Q, QR, EQ, EQR, parents, states = {}, {}, {}, {}, {}, {}
    cache = {}
    for t in range(tree.horizon, -1, -1):
        for node in tree.nodes_at(t):
            space = tree.parent_space(node.id)
            Z = space.grid
            feasible = node.data.feasible.enumerate(node.data.state_space)
            X = feasible.x
            if Z.shape[0] * X.shape[0] > config.MAX_GRID_POINTS:
                raise GridTooLarge(f"node {node.id}: {Z.shape[0]} x {X.shape[0]} table")
            key = (node.data, space)
            if key not in cache:
                cache[key] = node.data.cost.reduce(Z, feasible).values()
            R = cache[key]
            kids = tree.children(node.id)
            if kids:
                idx = _state_index(node.data.state_space.grid, X)
                eq = sum(c.trans_prob * Q[c.id][idx] for c in kids)
                eqr = sum(c.trans_prob * QR[c.id][idx] for c in kids)
            else:
                eq = eqr = np.ma.MaskedArray(np.zeros(X.shape[0]), mask=False)
            EQ[node.id], EQR[node.id] = eq, eqr
            Q[node.id] = (R + eq[None, :]).min(axis=1)
            G = (R + eqr[None, :]).min(axis=1)
            QR[node.id] = G if node.parent is None else _inf_convolution(G, Z, node.data.penalty)
            parents[node.id], states[node.id] = Z, X
    root = tree.root
    if np.ma.count(Q[root]) == 0:
        raise InfeasibleNode("the instance has no feasible solution on the grid")
    v_prim, v_reg = float(Q[root][0]), float(QR[root][0])
    logger.debug(f"Brute-force DP: v_prim={v_prim:.9g}, v_reg={v_reg:.9g}")
    return ValueTable(parents, states, Q, QR, EQ, EQR, v_prim, v_reg, h)


# Registry used by the command line and the sweep harness

GENERATORS: Dict[str, Callable[..., InstanceDescription]] = {
    'convex-nonlipschitz': describe_convex_nonlipschitz,
    'milp-discontinuous': describe_milp_discontinuous,
    'lipschitz_chain': describe_lipschitz_chain,
    'convex_worstcase': describe_convex_worstcase,
    'finite_state': describe_finite_state,
}


def describe(family: str, **params) -> InstanceDescription:
    try:
        generator = GENERATORS[family]
    except KeyError:
        raise BadParams(f"unknown instance family {family!r}; choose from {sorted(GENERATORS)}") from None
    try:
        return generator(**params)
    except TypeError as e:
        raise BadParams(f"{family}: {e}") from None
