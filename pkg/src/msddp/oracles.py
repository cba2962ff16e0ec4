"""Subproblem oracles for the forward (F), backward (B) and root (R) problems.

Grid oracles solve every problem by enumeration over the node's grids:

    (F)  min  f(z, y, x) + sigma * psi(x_parent - z) + Theta(x)
    (B)  max_{lam, rho} min  f(z, y, x) + <lam, x_parent - z> + rho * psi(x_parent - z) + Theta(x)
    (R)  min  f_root(y, x) + Theta(x)

The minimum over the internal decision y is taken once per node through
:meth:`msddp.costs.NodalCost.reduce`; every call then only scans the
(parent state, state) grid. Ties go to the lexicographically smallest state;
in adversarial mode tied states are chosen farthest from the anchors the
oracle returned before.
"""
import logging
import threading
from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Dict, Optional

import numpy as np
from scipy.spatial.distance import cdist

from . import config
from .approx import UnderApprox
from .costs import IntegerCoverCost, QuadraticCapCost, ReducedCost
from .errors import BadParams, GridTooLarge, InfeasibleNode
from .model import Box, NodeData, NormKind, ScenarioTree, StateSpace

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class ForwardSolution:
    x: np.ndarray
    y: np.ndarray
    z: np.ndarray
    objective: float
    model_error: float = 0.0


@dataclass(frozen=True, eq=False)
class BackwardSolution:
    x: np.ndarray
    y: np.ndarray
    z: np.ndarray
    lam: np.ndarray
    rho: float
    saddle_value: float
    model_error: float = 0.0


class NodeOracle(ABC):
    """Oracle contract of one node."""

    def __init__(self, node_id: str, data: NodeData, parent_space: StateSpace):
        self.node_id = node_id
        self.data = data
        self.parent_space = parent_space
        self.calls = 0
        self._lock = threading.Lock()

    def _count(self):
        with self._lock:
            self.calls += 1

    @abstractmethod
    def forward(self, x_parent, theta: UnderApprox) -> ForwardSolution:
        pass

    @abstractmethod
    def backward(self, x_parent, theta: UnderApprox) -> BackwardSolution:
        pass

    def root(self, theta: UnderApprox) -> ForwardSolution:
        return self.forward(np.zeros(0), theta)


class _NodeGrid:
    """Grids and reduced cost table shared by oracles of equal nodes."""

    def __init__(self, data: NodeData, parent_space: StateSpace):
        self.z = parent_space.grid
        self.feasible = data.feasible.enumerate(data.state_space)
        self.x = self.feasible.x
        A, K = self.z.shape[0], self.x.shape[0]
        if A + K * self.feasible.y.shape[0] > config.MAX_GRID_POINTS:
            raise GridTooLarge(f"node grids hold {A} parent and {K} x {self.feasible.y.shape[0]} feasible points")
        self.reduced: ReducedCost = data.cost.reduce(self.z, self.feasible)
        if not self.reduced.separable and A * K > config.MAX_GRID_POINTS:
            raise GridTooLarge(f"{A} x {K} coupled grid exceeds {config.MAX_GRID_POINTS} points")


def _ties(values: np.ma.MaskedArray, node_id: str) -> np.ndarray:
    """Mask of entries within tie tolerance of the minimum."""
    if np.ma.count(values) == 0:
        raise InfeasibleNode(f"node {node_id}: every grid point is infeasible")
    vmin = float(values.min())
    return np.ma.filled(values <= vmin + config.TIE_TOLERANCE * (1.0 + abs(vmin)), False)


def _project_dual(lam: np.ndarray, radius: float, dual: NormKind) -> np.ndarray:
    if dual is NormKind.LINF:
        return np.clip(lam, -radius, radius)
    size = float(dual.norm(lam))
    return lam if size <= radius or size == 0 else lam * (radius / size)


class GridOracle(NodeOracle):
    """Enumeration oracle over the node's grid representation."""

    def __init__(self, node_id: str, data: NodeData, parent_space: StateSpace,
                 grid: Optional[_NodeGrid] = None, adversarial: bool = False,
                 candidates: int = config.DUAL_CANDIDATES):
        super().__init__(node_id, data, parent_space)
        self.grid = grid or _NodeGrid(data, parent_space)
        self.adversarial = adversarial
        self.candidates = candidates
        self.resolution = max(parent_space.resolution, data.state_space.resolution)
        self._history = []

    def _model_error(self, theta: UnderApprox, weight: float) -> float:
        return self.resolution * (self.data.cost.lipschitz + weight + theta.lipschitz)

    def _penalty(self, x_parent, weight: float) -> np.ndarray:
        if weight == 0 or self.grid.z.shape[1] == 0:
            return np.zeros(self.grid.z.shape[0])
        return weight * self.data.penalty.norm.norm(np.asarray(x_parent, dtype=float)[None, :] - self.grid.z)

    def _pick_state(self, candidates: np.ndarray, adversarial: bool) -> int:
        if not adversarial or candidates.size == 1:
            return int(candidates[0])
        with self._lock:
            if not self._history:
                return int(candidates[0])
            spread = cdist(self.grid.x[candidates], np.asarray(self._history)).min(axis=1)
        return int(candidates[int(np.argmax(spread))])

    def _minimize(self, penalty: np.ndarray, theta_vals: np.ndarray, adversarial: bool):
        reduced = self.grid.reduced
        if reduced.separable:
            z_obj = reduced.z_part + penalty
            x_obj = reduced.x_part + theta_vals
            a = int(np.flatnonzero(_ties(z_obj, self.node_id))[0])
            k = self._pick_state(np.flatnonzero(_ties(x_obj, self.node_id)), adversarial)
            return a, k, float(z_obj[a]) + float(x_obj[k])
        total = reduced.table + penalty[:, None] + theta_vals[None, :]
        tied = _ties(total, self.node_id)
        k = self._pick_state(np.flatnonzero(tied.any(axis=0)), adversarial)
        a = int(np.flatnonzero(tied[:, k])[0])
        return a, k, float(total[a, k])

    def forward(self, x_parent, theta: UnderApprox) -> ForwardSolution:
        self._count()
        sigma = self.data.penalty.sigma
        theta_vals = theta.evaluate_many(self.grid.x)
        a, k, value = self._minimize(self._penalty(x_parent, sigma), theta_vals, self.adversarial)
        x = self.grid.x[k]
        if self.adversarial:
            with self._lock:
                self._history.append(x.copy())
        return ForwardSolution(x=x.copy(), y=self.grid.reduced.y_at(a, k), z=self.grid.z[a].copy(),
                               objective=value, model_error=self._model_error(theta, sigma))

    def backward(self, x_parent, theta: UnderApprox) -> BackwardSolution:
        self._count()
        x_parent = np.asarray(x_parent, dtype=float)
        theta_vals = theta.evaluate_many(self.grid.x)
        bounds = self.data.dual_bounds
        if not self.data.convex:
            a, k, value = self._minimize(self._penalty(x_parent, bounds.l_rho), theta_vals, False)
            return BackwardSolution(x=self.grid.x[k].copy(), y=self.grid.reduced.y_at(a, k),
                                    z=self.grid.z[a].copy(), lam=np.zeros(x_parent.size),
                                    rho=float(bounds.l_rho), saddle_value=value,
                                    model_error=self._model_error(theta, bounds.l_rho))
        return self._backward_convex(x_parent, theta_vals, theta)

    def _profile(self, theta_vals: np.ndarray):
        """H(z) = min over x of (reduced cost + Theta) and its minimizing state."""
        reduced = self.grid.reduced
        if reduced.separable:
            x_obj = reduced.x_part + theta_vals
            k = int(np.flatnonzero(_ties(x_obj, self.node_id))[0])
            return reduced.z_part + float(x_obj[k]), np.full(self.grid.z.shape[0], k)
        total = reduced.table + theta_vals[None, :]
        return total.min(axis=1), np.ma.filled(total, np.inf).argmin(axis=1)

    def _envelope(self, H: np.ma.MaskedArray, y: np.ndarray) -> float:
        """min over z of H(z) + sigma * psi(y - z) at an arbitrary point y."""
        dist = self.data.penalty.norm.norm(y[None, :] - self.grid.z)
        return float((H + self.data.penalty.sigma * dist).min())

    def _dual_candidates(self, x_parent: np.ndarray, H: np.ma.MaskedArray) -> np.ndarray:
        d = x_parent.size
        radius = self.data.dual_bounds.l_lambda
        dual = self.data.penalty.norm.dual
        step = self.parent_space.resolution or 1e-3 * max(1.0, self.parent_space.diameter)
        base = self._envelope(H, x_parent)
        central, ahead, behind = np.zeros(d), np.zeros(d), np.zeros(d)
        for i in range(d):
            e = np.zeros(d)
            e[i] = step
            up, down = self._envelope(H, x_parent + e), self._envelope(H, x_parent - e)
            central[i] = (up - down) / (2 * step)
            ahead[i] = (up - base) / step
            behind[i] = (base - down) / step
        found = [_project_dual(g, radius, dual) for g in (central, ahead, behind)]
        found.append(np.zeros(d))
        levels = radius * np.arange(1, self.candidates + 1) / self.candidates
        for i in range(d):
            for sign in (1.0, -1.0):
                for level in levels:
                    lam = np.zeros(d)
                    lam[i] = sign * level
                    found.append(lam)
        return np.array(found).reshape(len(found), d)

    def _backward_convex(self, x_parent, theta_vals, theta) -> BackwardSolution:
        H, best_x = self._profile(theta_vals)
        if np.ma.count(H) == 0:
            raise InfeasibleNode(f"node {self.node_id}: every grid point is infeasible")
        lams = self._dual_candidates(x_parent, H)
        inner = H[:, None] + (x_parent[None, :] - self.grid.z) @ lams.T
        values = inner.min(axis=0)
        c = int(np.argmax(np.ma.filled(values, -np.inf)))
        a = int(np.ma.filled(inner[:, c], np.inf).argmin())
        k = int(best_x[a])
        return BackwardSolution(x=self.grid.x[k].copy(), y=self.grid.reduced.y_at(a, k),
                                z=self.grid.z[a].copy(), lam=lams[c].copy(), rho=0.0,
                                saddle_value=float(values[c]),
                                model_error=self._model_error(theta, self.data.dual_bounds.l_lambda))


class _ClosedFormLeaf(NodeOracle):
    """Leaf oracle with a closed-form value function on a parent interval."""

    def __init__(self, node_id, data, parent_space):
        super().__init__(node_id, data, parent_space)
        if not isinstance(parent_space, Box) or parent_space.dim != 1:
            raise BadParams(f"node {node_id}: closed-form oracles need a one-dimensional parent interval")
        self.lower, self.upper = parent_space.lower[0], parent_space.upper[0]
        self.state = data.state_space.grid[0].copy()

    @abstractmethod
    def _solve(self, xp: float, weight: float):
        """(z, y, value, slope) of min_z Q(z) + weight * |xp - z|."""

    def forward(self, x_parent, theta):
        self._count()
        z, y, value, _ = self._solve(float(np.asarray(x_parent)[0]), self.data.penalty.sigma)
        return ForwardSolution(x=self.state.copy(), y=np.array([y]), z=np.array([z]), objective=value)

    def backward(self, x_parent, theta):
        self._count()
        xp = float(np.asarray(x_parent)[0])
        bounds = self.data.dual_bounds
        if self.data.convex:
            z, y, value, slope = self._solve(xp, bounds.l_lambda)
            return BackwardSolution(x=self.state.copy(), y=np.array([y]), z=np.array([z]),
                                    lam=np.array([slope]), rho=0.0, saddle_value=value)
        z, y, value, _ = self._solve(xp, bounds.l_rho)
        return BackwardSolution(x=self.state.copy(), y=np.array([y]), z=np.array([z]),
                                lam=np.zeros(1), rho=float(bounds.l_rho), saddle_value=value)


class CapLeafOracle(_ClosedFormLeaf):
    """Q(z) = c - sqrt(r^2 - z^2), regularized in closed form."""

    def __init__(self, node_id, data, parent_space):
        super().__init__(node_id, data, parent_space)
        if not isinstance(data.cost, QuadraticCapCost):
            raise BadParams(f"node {node_id}: expected a quadratic_cap cost")
        self.c, self.r = data.cost.params['center'], data.cost.params['radius']

    def _solve(self, xp, weight):
        kink = weight * self.r / np.sqrt(1.0 + weight * weight)
        z = float(np.clip(xp, -kink, kink))
        z = float(np.clip(z, max(self.lower, -self.r), min(self.upper, self.r)))
        q = self.c - np.sqrt(max(self.r * self.r - z * z, 0.0))
        slope = z / np.sqrt(max(self.r * self.r - z * z, 1e-300)) if abs(z) < self.r else np.sign(z) * weight
        slope = float(np.clip(slope, -weight, weight))
        return z, q, q + weight * abs(xp - z), slope


class CoverLeafOracle(_ClosedFormLeaf):
    """Q(z) = w for z > 0 and 0 for z <= 0 (binary cover of a continuous state)."""

    def __init__(self, node_id, data, parent_space):
        super().__init__(node_id, data, parent_space)
        if not isinstance(data.cost, IntegerCoverCost) or data.convex:
            raise BadParams(f"node {node_id}: expected a nonconvex integer_cover cost")
        self.w = data.cost.params['weights'][0]

    def _solve(self, xp, weight):
        stay = self.w if xp > 0 else 0.0
        floor = max(self.lower, min(0.0, self.upper))
        jump = weight * abs(xp - floor) + (self.w if floor > 0 else 0.0)
        if jump < stay or (jump == stay and floor < xp):
            return floor, (1.0 if floor > 0 else 0.0), jump, 0.0
        return xp, (1.0 if xp > 0 else 0.0), stay, 0.0


CLOSED_FORM_ORACLES = {
    'convex-nonlipschitz': CapLeafOracle,
    'milp-discontinuous': CoverLeafOracle,
}


class OracleSet:
    """Per-node oracles plus the root oracle."""

    def __init__(self, oracles: Dict[str, NodeOracle], root: str, adversarial: bool = False):
        self._oracles = oracles
        self.root_id = root
        self.adversarial = adversarial

    def __getitem__(self, node_id: str) -> NodeOracle:
        return self._oracles[node_id]

    def __contains__(self, node_id):
        return node_id in self._oracles

    @property
    def calls(self) -> int:
        return sum(o.calls for o in self._oracles.values())

    def forward(self, node_id, x_parent, theta) -> ForwardSolution:
        return self._oracles[node_id].forward(x_parent, theta)

    def backward(self, node_id, x_parent, theta) -> BackwardSolution:
        return self._oracles[node_id].backward(x_parent, theta)

    def root_solve(self, theta) -> ForwardSolution:
        return self._oracles[self.root_id].root(theta)


def make_grid_oracles(tree: ScenarioTree, resolution: Optional[float] = None,
                      adversarial: bool = False,
                      candidates: int = config.DUAL_CANDIDATES) -> OracleSet:
    """Build enumeration oracles for every node of ``tree``.

    Nodes with equal data and parent space share one precomputed grid; the
    adversarial history stays per node.
    """
    if resolution is not None:
        tree = tree.regridded(resolution)
    shared: Dict[tuple, _NodeGrid] = {}
    oracles = {}
    for node in tree:
        parent_space = tree.parent_space(node.id)
        key = (node.data, parent_space)
        if key not in shared:
            shared[key] = _NodeGrid(node.data, parent_space)
        oracles[node.id] = GridOracle(node.id, node.data, parent_space, shared[key],
                                      adversarial=adversarial, candidates=candidates)
    logger.debug(f"Built grid oracles for {len(oracles)} nodes ({len(shared)} distinct grids)")
    return OracleSet(oracles, tree.root, adversarial)


def make_analytic_oracles(tree: ScenarioTree, name: str, resolution: Optional[float] = None,
                          adversarial: bool = False) -> OracleSet:
    """Grid oracles with the leaves replaced by the closed form ``name``."""
    try:
        leaf_cls = CLOSED_FORM_ORACLES[name]
    except KeyError:
        raise BadParams(f"unknown analytic oracle {name!r}") from None
    base = make_grid_oracles(tree, resolution, adversarial)
    if resolution is not None:
        tree = tree.regridded(resolution)
    oracles = {node.id: base[node.id] for node in tree}
    for node in tree.nodes_at(tree.horizon):
        if node.parent is not None:
            oracles[node.id] = leaf_cls(node.id, node.data, tree.parent_space(node.id))
    return OracleSet(oracles, tree.root, adversarial)


def forward_solve(oracles: OracleSet, node_id: str, x_parent, theta: UnderApprox) -> ForwardSolution:
    return oracles.forward(node_id, x_parent, theta)


def backward_solve(oracles: OracleSet, node_id: str, x_parent, theta: UnderApprox) -> BackwardSolution:
    return oracles.backward(node_id, x_parent, theta)


def root_solve(oracles: OracleSet, theta: UnderApprox) -> ForwardSolution:
    return oracles.root_solve(theta)
