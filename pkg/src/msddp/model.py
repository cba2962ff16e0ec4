"""Scenario trees, per-node problem data and the recombining reduction."""
import logging
from abc import ABC, abstractmethod
from collections import OrderedDict, deque
from dataclasses import dataclass, field, replace
from enum import Enum
from functools import cached_property
from typing import Dict, Iterator, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from . import config
from .costs import NodalCost
from .errors import (BadDualBounds, BadProbability, BadTreeShape, DuplicateNodeId,
                     GridTooLarge, InconsistentPenalty, ModelError, NegativeCost,
                     NotStagewiseIndependent, OrphanNode)

logger = logging.getLogger(__name__)

Point = Tuple[float, ...]


class NormKind(str, Enum):
    L1 = "l1"
    L2 = "l2"
    LINF = "linf"

    @property
    def ord(self):
        return {NormKind.L1: 1, NormKind.L2: 2, NormKind.LINF: np.inf}[self]

    @property
    def dual(self) -> "NormKind":
        return {NormKind.L1: NormKind.LINF, NormKind.L2: NormKind.L2, NormKind.LINF: NormKind.L1}[self]

    def norm(self, v) -> np.ndarray:
        """Norm along the last axis."""
        v = np.asarray(v, dtype=float)
        if v.shape[-1] == 0:
            return np.zeros(v.shape[:-1])
        return np.linalg.norm(v, ord=self.ord, axis=-1)


# State spaces

class StateSpace(ABC):
    """Compact set carrying a finite evaluation grid in lexicographic order."""

    @property
    @abstractmethod
    def dim(self) -> int:
        pass

    @property
    def resolution(self) -> float:
        return 0.0

    @property
    def is_finite(self) -> bool:
        return False

    @abstractmethod
    def size_estimate(self) -> int:
        pass

    @abstractmethod
    def _build_grid(self) -> np.ndarray:
        pass

    @cached_property
    def grid(self) -> np.ndarray:
        if self.size_estimate() > config.MAX_GRID_POINTS:
            raise GridTooLarge(f"{self!r} grid has about {self.size_estimate()} points")
        g = self._build_grid()
        g.setflags(write=False)
        return g

    @property
    def diameter(self) -> float:
        g = self.grid
        if g.shape[0] < 2 or g.shape[1] == 0:
            return 0.0
        lo, hi = g.min(axis=0), g.max(axis=0)
        return float(np.linalg.norm(hi - lo))

    def with_resolution(self, h: float) -> "StateSpace":
        return self


def _axis(lo: float, hi: float, h: float) -> np.ndarray:
    n = int(np.ceil((hi - lo) / h - 1e-9)) + 1 if hi > lo else 1
    return np.linspace(lo, hi, max(n, 1))


@dataclass(frozen=True)
class Box(StateSpace):
    lower: Point
    upper: Point
    h: float

    def __post_init__(self):
        if len(self.lower) != len(self.upper):
            raise ModelError("box bounds differ in dimension")
        if any(lo > hi for lo, hi in zip(self.lower, self.upper)):
            raise ModelError("box lower bound exceeds upper bound")
        if self.h <= 0:
            raise ModelError("box resolution must be positive")

    @property
    def dim(self):
        return len(self.lower)

    @property
    def resolution(self):
        return self.h

    def size_estimate(self):
        return int(np.prod([_axis(lo, hi, self.h).size for lo, hi in zip(self.lower, self.upper)]))

    def _build_grid(self):
        axes = [_axis(lo, hi, self.h) for lo, hi in zip(self.lower, self.upper)]
        mesh = np.meshgrid(*axes, indexing='ij')
        return np.stack([m.ravel() for m in mesh], axis=1)

    @property
    def diameter(self):
        return float(np.linalg.norm(np.subtract(self.upper, self.lower)))

    def with_resolution(self, h):
        return replace(self, h=float(h))


@dataclass(frozen=True)
class Ball(StateSpace):
    """Euclidean ball, gridded by rejection from its bounding box.

    ``extra`` points (for example anchors on the boundary) are added to the
    grid verbatim.
    """
    center: Point
    radius: float
    h: float
    extra: Tuple[Point, ...] = ()

    def __post_init__(self):
        if self.radius <= 0 or self.h <= 0:
            raise ModelError("ball radius and resolution must be positive")

    @property
    def dim(self):
        return len(self.center)

    @property
    def resolution(self):
        return self.h

    def size_estimate(self):
        return _axis(-self.radius, self.radius, self.h).size ** self.dim + len(self.extra)

    def _build_grid(self):
        c = np.asarray(self.center, dtype=float)
        axes = [_axis(ci - self.radius, ci + self.radius, self.h) for ci in c]
        mesh = np.meshgrid(*axes, indexing='ij')
        pts = np.stack([m.ravel() for m in mesh], axis=1)
        pts = pts[np.linalg.norm(pts - c, axis=1) <= self.radius * (1 + 1e-12)]
        if self.extra:
            pts = np.vstack([pts, np.asarray(self.extra, dtype=float)])
        return np.unique(pts, axis=0)

    @property
    def diameter(self):
        return 2.0 * self.radius

    def with_resolution(self, h):
        return replace(self, h=float(h))


@dataclass(frozen=True)
class FiniteSet(StateSpace):
    points: Tuple[Point, ...]

    def __post_init__(self):
        if not self.points:
            raise ModelError("finite state set is empty")
        if len({len(p) for p in self.points}) != 1:
            raise ModelError("finite state set mixes dimensions")

    @property
    def dim(self):
        return len(self.points[0])

    @property
    def is_finite(self):
        return True

    @property
    def cardinality(self) -> int:
        return len(self.grid)

    def size_estimate(self):
        return len(self.points)

    def _build_grid(self):
        return np.unique(np.asarray(self.points, dtype=float).reshape(len(self.points), self.dim), axis=0)


# The parent space of the root: a single point of dimension 0.
ROOT_PARENT_SPACE = FiniteSet(((),))


class FeasibleGrid(NamedTuple):
    """Enumerated feasible set: states ``x`` (K, dx), decisions ``y`` (J, dy)
    and the (K, J) mask of allowed pairs."""
    x: np.ndarray
    y: np.ndarray
    allowed: np.ndarray


@dataclass(frozen=True)
class FeasibleSet:
    """Feasible (x, y) pairs of a node.

    By default the product of the node's state space with ``internal`` (no
    internal decision when None). Alternatively an explicit list of pairs.
    """
    internal: Optional[StateSpace] = None
    pairs: Optional[Tuple[Tuple[Point, Point], ...]] = None

    def enumerate(self, state_space: StateSpace) -> FeasibleGrid:
        if self.pairs is not None:
            if not self.pairs:
                raise ModelError("explicit feasible set is empty")
            xs = np.asarray([p[0] for p in self.pairs], dtype=float).reshape(len(self.pairs), -1)
            ys = np.asarray([p[1] for p in self.pairs], dtype=float).reshape(len(self.pairs), -1)
            X, xi = np.unique(xs, axis=0, return_inverse=True)
            Y, yi = np.unique(ys, axis=0, return_inverse=True)
            allowed = np.zeros((X.shape[0], Y.shape[0]), dtype=bool)
            allowed[np.ravel(xi), np.ravel(yi)] = True
            return FeasibleGrid(X, Y, allowed)
        X = state_space.grid
        Y = self.internal.grid if self.internal is not None else np.zeros((1, 0))
        return FeasibleGrid(X, Y, np.ones((X.shape[0], Y.shape[0]), dtype=bool))

    def with_resolution(self, h: float) -> "FeasibleSet":
        if self.internal is None:
            return self
        return replace(self, internal=self.internal.with_resolution(h))


@dataclass(frozen=True)
class PenaltySpec:
    norm: NormKind
    sigma: float

    def __post_init__(self):
        object.__setattr__(self, 'norm', NormKind(self.norm))
        if not self.sigma > 0:
            raise ModelError(f"penalty sigma must be positive, got {self.sigma}")


@dataclass(frozen=True)
class DualBounds:
    l_lambda: float
    l_rho: float

    def __post_init__(self):
        if self.l_lambda < 0 or self.l_rho < 0:
            raise ModelError("dual bounds must be nonnegative")

    def check(self, penalty: PenaltySpec, convex: bool):
        if convex:
            if self.l_lambda < penalty.sigma or self.l_rho != 0:
                raise BadDualBounds(
                    f"convex mode needs l_lambda >= sigma = {penalty.sigma} and l_rho = 0, "
                    f"got ({self.l_lambda}, {self.l_rho})")
        elif self.l_rho < penalty.sigma:
            raise BadDualBounds(f"l_rho = {self.l_rho} is below sigma = {penalty.sigma}")


@dataclass(frozen=True)
class NodeData:
    cost: NodalCost
    state_space: StateSpace
    penalty: PenaltySpec
    dual_bounds: DualBounds
    feasible: FeasibleSet = field(default_factory=FeasibleSet)
    convex: bool = False

    @property
    def dim(self) -> int:
        return self.state_space.dim

    def regridded(self, h: float) -> "NodeData":
        return replace(self, state_space=self.state_space.with_resolution(h),
                       feasible=self.feasible.with_resolution(h))


@dataclass(frozen=True)
class Node:
    id: str
    parent: Optional[str]
    children: Tuple[str, ...]
    stage: int
    prob: float
    trans_prob: float
    klass: str
    data: NodeData


class ScenarioTree:
    """Validated scenario tree; immutable after construction."""

    def __init__(self, nodes: Dict[str, Node], root: str):
        self._nodes = nodes
        self.root = root
        self.horizon = max(n.stage for n in nodes.values())
        self._by_stage: List[List[str]] = [[] for _ in range(self.horizon + 1)]
        for n in nodes.values():
            self._by_stage[n.stage].append(n.id)

    def __len__(self):
        return len(self._nodes)

    def __iter__(self) -> Iterator[Node]:
        for stage in self._by_stage:
            for nid in stage:
                yield self._nodes[nid]

    def __contains__(self, nid):
        return nid in self._nodes

    def node(self, nid: str) -> Node:
        return self._nodes[nid]

    def nodes_at(self, t: int) -> List[Node]:
        return [self._nodes[nid] for nid in self._by_stage[t]]

    def children(self, nid: str) -> List[Node]:
        return [self._nodes[c] for c in self._nodes[nid].children]

    def is_leaf(self, nid: str) -> bool:
        return not self._nodes[nid].children

    def parent_space(self, nid: str) -> StateSpace:
        parent = self._nodes[nid].parent
        if parent is None:
            return ROOT_PARENT_SPACE
        return self._nodes[parent].data.state_space

    def with_data(self, updates: Dict[str, NodeData]) -> "ScenarioTree":
        nodes = {nid: replace(n, data=updates.get(nid, n.data)) for nid, n in self._nodes.items()}
        return ScenarioTree(nodes, self.root)

    def regridded(self, h: float) -> "ScenarioTree":
        return self.with_data({n.id: n.data.regridded(h) for n in self})


def _check_costs(nid: str, data: NodeData, parent_space: StateSpace):
    """Sampled nonnegativity check of f on the node's grids."""
    fg = data.feasible.enumerate(data.state_space)
    n = config.COST_SAMPLE_POINTS
    zs = parent_space.grid[np.unique(np.linspace(0, parent_space.grid.shape[0] - 1, n).astype(int))]
    ks = np.unique(np.linspace(0, fg.x.shape[0] - 1, n).astype(int))
    js = np.unique(np.linspace(0, fg.y.shape[0] - 1, n).astype(int))
    kk, jj = np.meshgrid(ks, js, indexing='ij')
    keep = fg.allowed[kk.ravel(), jj.ravel()]
    xs, ys = fg.x[kk.ravel()[keep]], fg.y[jj.ravel()[keep]]
    if xs.shape[0] == 0:
        return
    zz = np.repeat(zs, xs.shape[0], axis=0)
    values = data.cost.evaluate(zz, np.tile(ys, (zs.shape[0], 1)), np.tile(xs, (zs.shape[0], 1)))
    if np.ma.count(values) and values.min() < -1e-12:
        raise NegativeCost(f"node {nid}: cost {data.cost.family} takes value {float(values.min())}")


def build_tree(description) -> ScenarioTree:
    """Build and validate a ScenarioTree from a parsed instance description.

    ``description`` provides ``nodes`` (sequence of NodeSpec with ``id``,
    ``parent``, ``prob``, ``data`` and ``klass``) and ``node_data`` (mapping of
    data keys to NodeData).
    """
    specs = list(description.nodes)
    ids = [s.id for s in specs]
    seen = set()
    for nid in ids:
        if nid in seen:
            raise DuplicateNodeId(f"node id {nid!r} appears twice")
        seen.add(nid)

    roots = [s for s in specs if s.parent is None]
    if len(roots) != 1:
        raise OrphanNode(f"expected exactly one root, found {len(roots)}")
    children: Dict[str, List[str]] = OrderedDict((nid, []) for nid in ids)
    for s in specs:
        if s.parent is not None:
            if s.parent not in children:
                raise OrphanNode(f"node {s.id!r} has unknown parent {s.parent!r}")
            children[s.parent].append(s.id)
        if s.data not in description.node_data:
            raise ModelError(f"node {s.id!r} references unknown node data {s.data!r}")

    by_id = {s.id: s for s in specs}
    root = roots[0].id
    stage = {root: 0}
    prob = {root: 1.0}
    queue = deque([root])
    while queue:
        nid = queue.popleft()
        kids = children[nid]
        if kids:
            total = 0.0
            for c in kids:
                p = float(by_id[c].prob)
                if not 0 < p <= 1:
                    raise BadProbability(f"node {c!r} has transition probability {p}")
                total += p
            if abs(total - 1.0) > config.PROBABILITY_TOLERANCE * max(1, len(kids)) * 4:
                raise BadProbability(f"children of {nid!r} have probabilities summing to {total}")
        for c in kids:
            stage[c] = stage[nid] + 1
            prob[c] = prob[nid] * float(by_id[c].prob)
            queue.append(c)
    if len(stage) != len(specs):
        missing = sorted(set(ids) - set(stage))
        raise OrphanNode(f"nodes unreachable from the root: {missing}")

    horizon = max(stage.values())
    leaves = [nid for nid in ids if not children[nid]]
    if any(stage[nid] != horizon for nid in leaves):
        raise BadTreeShape("all leaves must lie in the last stage")

    nodes = {}
    for s in specs:
        data = description.node_data[s.data]
        kids = tuple(children[s.id])
        nodes[s.id] = Node(id=s.id, parent=s.parent, children=kids, stage=stage[s.id],
                           prob=prob[s.id], trans_prob=1.0 if s.parent is None else float(s.prob),
                           klass=s.klass or s.data, data=data)

    for node in nodes.values():
        if node.parent is not None:
            node.data.dual_bounds.check(node.data.penalty, node.data.convex)
        norms = {nodes[c].data.penalty.norm for c in node.children}
        if len(norms) > 1:
            raise InconsistentPenalty(f"children of {node.id!r} mix penalty norms {sorted(norms)}")
        parent_space = ROOT_PARENT_SPACE if node.parent is None else nodes[node.parent].data.state_space
        _check_costs(node.id, node.data, parent_space)

    tree = ScenarioTree(nodes, root)
    logger.debug(f"Built tree with {len(tree)} nodes and horizon {tree.horizon}")
    return tree


@dataclass(frozen=True)
class Template:
    """A distinct node of a stage; ``prob`` is p_{t-1,m}."""
    index: int
    klass: str
    data: NodeData
    prob: float
    node_ids: Tuple[str, ...]

    @property
    def node_id(self) -> str:
        return self.node_ids[0]


class RecombiningTree:
    """Per-stage templates of a stagewise-independent tree."""

    def __init__(self, tree: ScenarioTree, stages: Sequence[Sequence[Template]]):
        self.tree = tree
        self.stages: Tuple[Tuple[Template, ...], ...] = tuple(tuple(s) for s in stages)
        self.horizon = len(self.stages) - 1

    def templates(self, t: int) -> Tuple[Template, ...]:
        return self.stages[t]

    @property
    def counts(self) -> List[int]:
        return [len(s) for s in self.stages]

    @property
    def root(self) -> Template:
        return self.stages[0][0]

    def state_space(self, t: int) -> StateSpace:
        return self.stages[t][0].data.state_space

    def parent_space(self, t: int) -> StateSpace:
        return ROOT_PARENT_SPACE if t == 0 else self.state_space(t - 1)

    def probabilities(self, t: int) -> np.ndarray:
        return np.array([m.prob for m in self.stages[t]])


def recombine(tree: ScenarioTree) -> RecombiningTree:
    """Collapse declared-equivalent nodes into per-stage templates."""
    root = tree.node(tree.root)
    stages = [[Template(0, root.klass, root.data, 1.0, (root.id,))]]
    for t in range(1, tree.horizon + 1):
        groups: Dict[str, List[Node]] = OrderedDict()
        for n in tree.nodes_at(t):
            groups.setdefault(n.klass, []).append(n)
        for klass, members in groups.items():
            if any(m.data != members[0].data for m in members[1:]):
                raise NotStagewiseIndependent(f"stage {t}: nodes of class {klass!r} carry different data")

        profile = None
        for parent in tree.nodes_at(t - 1):
            mine: Dict[str, float] = {}
            for c in tree.children(parent.id):
                mine[c.klass] = mine.get(c.klass, 0.0) + c.trans_prob
            if profile is None:
                profile = mine
            elif set(mine) != set(profile) or any(
                    abs(mine[k] - profile[k]) > config.PROBABILITY_TOLERANCE * 4 for k in mine):
                raise NotStagewiseIndependent(
                    f"stage {t - 1}: node {parent.id!r} has a different child distribution")

        spaces = {members[0].data.state_space for members in groups.values()}
        if len(spaces) > 1:
            raise NotStagewiseIndependent(f"stage {t}: templates do not share a state space")
        stages.append([Template(i, klass, members[0].data, profile[klass], tuple(m.id for m in members))
                       for i, (klass, members) in enumerate(groups.items())])
    logger.debug(f"Recombined tree into stage counts {[len(s) for s in stages]}")
    return RecombiningTree(tree, stages)
