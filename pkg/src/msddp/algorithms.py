"""Dual dynamic programming drivers.

* :func:`nested_decomposition` works on any scenario tree and visits every
  node in every iteration.
* :func:`ddp_deterministic` works on a recombining tree and follows the
  template with the largest approximation gap in every stage.
* :func:`ddp_stochastic` follows randomly sampled scenario paths and keeps
  only the under-approximations.

All three maintain the lower bound from the root problem with the current
under-approximation; the first two also maintain an upper bound from the
over-approximations and stop once the two are ``eps`` apart.
"""
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from contextlib import contextmanager
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import config
from .approx import ConjugacyCut, EnvelopeMode, OverApprox, OverPoint, UnderApprox
from .errors import BadConfig, BadParams, EmptyOverApprox, InfeasibleNode, OracleError
from .model import NodeData, RecombiningTree, ScenarioTree
from .oracles import BackwardSolution, ForwardSolution, OracleSet

logger = logging.getLogger(__name__)


class Status(str, Enum):
    CONVERGED = "Converged"
    ITERATION_CAP = "IterationCap"
    ORACLE_ERROR = "OracleError"
    STOPPED = "Stopped"


@dataclass(frozen=True)
class TraceRow:
    iteration: int
    lower: float
    upper: float
    cuts: int
    millis: float
    oracle_calls: int
    stage_gaps: Tuple[Tuple[float, ...], ...] = ()
    selected: Tuple[int, ...] = ()

    @property
    def gap(self) -> float:
        if np.isinf(self.upper):
            return float('inf')
        return self.upper - self.lower


class BoundsTrace:
    """Per-iteration bound history; every appended row is forwarded to ``sink``."""

    def __init__(self, sink: Optional[Callable[[TraceRow], None]] = None):
        self.rows: List[TraceRow] = []
        self._sink = sink

    def __len__(self):
        return len(self.rows)

    def append(self, row: TraceRow):
        self.rows.append(row)
        if self._sink is not None:
            self._sink(row)

    @property
    def lower_bounds(self) -> List[float]:
        return [r.lower for r in self.rows]

    @property
    def upper_bounds(self) -> List[float]:
        return [r.upper for r in self.rows]


@dataclass
class SolveResult:
    status: Status
    x: np.ndarray
    y: np.ndarray
    lower_bound: float
    upper_bound: float
    iterations: int
    trace: BoundsTrace
    oracle_calls: int = 0
    message: str = ""
    approximations: Dict[object, UnderApprox] = field(default_factory=dict)
    over_approximations: Dict[object, OverApprox] = field(default_factory=dict)

    @property
    def gap(self) -> float:
        if np.isinf(self.upper_bound):
            return float('inf')
        return self.upper_bound - self.lower_bound

    @property
    def objective(self) -> float:
        """Certified objective when an upper bound exists, else the lower bound."""
        return self.upper_bound if np.isfinite(self.upper_bound) else self.lower_bound


@dataclass(frozen=True)
class StopRule:
    kind: str = "lb_stall"
    window: int = config.STALL_WINDOW
    tol: float = config.STALL_TOLERANCE
    iterations: int = 0

    @classmethod
    def lb_stall(cls, window: int = config.STALL_WINDOW, tol: float = config.STALL_TOLERANCE):
        return cls("lb_stall", window=window, tol=tol)

    @classmethod
    def fixed_iterations(cls, iterations: int):
        return cls("fixed_iterations", iterations=iterations)

    def should_stop(self, lower_bounds: Sequence[float]) -> bool:
        if self.kind == "fixed_iterations":
            return len(lower_bounds) >= self.iterations
        if len(lower_bounds) <= self.window:
            return False
        return lower_bounds[-1] - lower_bounds[-1 - self.window] <= self.tol


@dataclass(frozen=True)
class StochasticConfig:
    samples: int = 1
    seed: int = 0
    max_iters: int = config.ITERATION_CAP
    stop_rule: Optional[StopRule] = field(default_factory=StopRule)

    def __post_init__(self):
        if self.samples < 1:
            raise BadConfig(f"need at least one sample path per iteration, got {self.samples}")
        if self.max_iters < 1:
            raise BadConfig("iteration cap must be positive")


@contextmanager
def _pool(threads: Optional[int]):
    """Yield a map function; parallel when more than one thread is configured."""
    threads = config.THREADS if threads is None else threads
    if threads <= 1:
        yield lambda fn, items: [fn(item) for item in items]
        return
    with ThreadPoolExecutor(max_workers=threads) as executor:
        yield lambda fn, items: list(executor.map(fn, items))


def _under_for(dim: int, children: Sequence[Tuple[float, NodeData]]) -> UnderApprox:
    return UnderApprox(dim, [p for p, _ in children], [d.dual_bounds for _, d in children])


def _over_for(dim: int, children: Sequence[Tuple[float, NodeData]]) -> OverApprox:
    if not children:
        return OverApprox(dim, 0.0, leaf=True)
    sigma = sum(p * d.penalty.sigma for p, d in children)
    mode = EnvelopeMode.CONVEX_HULL if all(d.convex for _, d in children) else EnvelopeMode.POINTWISE_MIN
    return OverApprox(dim, sigma, children[0][1].penalty.norm, mode)


def _cost(data: NodeData, z, y, x) -> float:
    value = data.cost.evaluate_point(z, y, x)
    if value is None:
        raise InfeasibleNode(f"{data.cost.family} cost is infeasible at an oracle solution")
    return value


def compute_cut_constants(backward: BackwardSolution, x_parent, theta: UnderApprox, data: NodeData) -> float:
    """Constant of the cut generated from a backward solution."""
    x_parent = np.asarray(x_parent, dtype=float)
    diff = x_parent - backward.z
    return (_cost(data, backward.z, backward.y, backward.x)
            + float(backward.lam @ diff)
            + backward.rho * float(data.penalty.norm.norm(diff))
            + theta.evaluate(backward.x))


def compute_over_value(forward: ForwardSolution, x_parent, over_next: OverApprox, data: NodeData) -> float:
    """Upper estimate of the regularized value at ``x_parent`` from a forward solution."""
    if over_next.is_empty:
        raise EmptyOverApprox("over-approximation is empty at a non-leaf stage")
    diff = np.asarray(x_parent, dtype=float) - forward.z
    return (_cost(data, forward.z, forward.y, forward.x)
            + data.penalty.sigma * float(data.penalty.norm.norm(diff))
            + over_next.evaluate(forward.x))


def _cut(backward: BackwardSolution, x_parent, theta: UnderApprox, data: NodeData) -> ConjugacyCut:
    return ConjugacyCut(anchor=np.asarray(x_parent, dtype=float).copy(), lam=backward.lam,
                        rho=backward.rho, constant=compute_cut_constants(backward, x_parent, theta, data),
                        penalty=data.penalty)


def _gap(over: OverApprox, under: UnderApprox, x) -> float:
    if over.is_empty:
        return float('inf')
    return over.evaluate(x) - under.evaluate(x)


def _root_cost(data: NodeData, sol: ForwardSolution) -> float:
    return _cost(data, sol.z, sol.y, sol.x)


def _converged(lower: float, upper: float, eps: float) -> bool:
    return np.isfinite(upper) and upper - lower <= eps + config.GAP_TOLERANCE


class _Run:
    """Bookkeeping shared by the drivers."""

    def __init__(self, oracles: OracleSet, approximations, sink, name: str, overs=None):
        self.oracles = oracles
        self.approximations = approximations
        self.overs = overs or {}
        self.trace = BoundsTrace(sink)
        self.name = name
        self.lower = -float('inf')
        self.upper = float('inf')
        self.x = self.y = np.zeros(0)
        self.iterations = 0

    def cuts(self) -> int:
        return sum(len(u) for u in self.approximations.values())

    def record(self, started: float, **extra):
        millis = (time.perf_counter() - started) * 1000.0 if config.TRACE_TIMING else 0.0
        self.trace.append(TraceRow(self.iterations, self.lower, self.upper, self.cuts(), millis,
                                   self.oracles.calls, **extra))
        logger.debug(f"{self.name} iteration {self.iterations}: lb={self.lower:.9g} ub={self.upper:.9g}")

    def result(self, status: Status, message: str = "") -> SolveResult:
        if status is Status.ORACLE_ERROR:
            logger.error(f"{self.name} stopped on an oracle error: {message}")
        else:
            logger.info(f"{self.name} finished: {status.value} after {self.iterations} iterations, "
                        f"lb={self.lower:.9g} ub={self.upper:.9g}")
        return SolveResult(status, self.x, self.y, self.lower, self.upper, self.iterations, self.trace,
                           self.oracles.calls, message, self.approximations, self.overs)


def _check_eps(eps: float):
    if not eps >= 0:
        raise BadParams(f"eps must be nonnegative, got {eps}")


def _iteration_cap(max_iters: Optional[int]) -> int:
    cap = config.ITERATION_CAP if max_iters is None else max_iters
    if cap < 1:
        raise BadConfig(f"iteration cap must be positive, got {cap}")
    return cap


def nested_decomposition(tree: ScenarioTree, oracles: OracleSet, eps: float,
                         max_iters: Optional[int] = None, sink=None, threads: Optional[int] = None) -> SolveResult:
    """Nested decomposition over every node of a general tree."""
    _check_eps(eps)
    cap = _iteration_cap(max_iters)
    T = tree.horizon
    unders, overs = {}, {}
    for n in tree:
        kids = [(c.trans_prob, c.data) for c in tree.children(n.id)]
        unders[n.id] = _under_for(n.data.dim, kids)
        overs[n.id] = _over_for(n.data.dim, kids)
    root = tree.node(tree.root)
    run = _Run(oracles, unders, sink, "nested decomposition", overs)
    logger.info(f"Nested decomposition on {len(tree)} nodes, horizon {T}, eps={eps}")

    def update(n, states, cuts, values):
        kids = tree.children(n.id)
        unders[n.id].add_bundle([cuts[c.id] for c in kids])
        value = sum(c.trans_prob * values[c.id] for c in kids)
        overs[n.id].add_point(OverPoint(states[n.id].copy(), value, overs[n.id].sigma_eff))

    with _pool(threads) as run_all:
        try:
            sol = oracles.root_solve(unders[root.id])
            run.lower, run.x, run.y = sol.objective, sol.x, sol.y
            x_root = sol.x
            for i in range(1, cap + 1):
                started = time.perf_counter()
                run.iterations = i
                states = {root.id: x_root}
                fwd: Dict[str, ForwardSolution] = {}
                for t in range(1, T + 1):
                    nodes = tree.nodes_at(t)
                    sols = run_all(lambda n: oracles.forward(n.id, states[n.parent], unders[n.id]), nodes)
                    for n, s in zip(nodes, sols):
                        fwd[n.id] = s
                        states[n.id] = s.x

                cuts: Dict[str, ConjugacyCut] = {}
                values: Dict[str, float] = {}
                for t in range(T, 0, -1):
                    nodes = tree.nodes_at(t)
                    for n in nodes:
                        if n.children:
                            update(n, states, cuts, values)
                    sols = run_all(lambda n: oracles.backward(n.id, states[n.parent], unders[n.id]), nodes)
                    for n, b in zip(nodes, sols):
                        cuts[n.id] = _cut(b, states[n.parent], unders[n.id], n.data)
                        values[n.id] = compute_over_value(fwd[n.id], states[n.parent], overs[n.id], n.data)
                if root.children:
                    update(root, states, cuts, values)

                sol = oracles.root_solve(unders[root.id])
                run.lower = sol.objective
                candidate = overs[root.id].evaluate(sol.x)
                if np.isfinite(candidate):
                    candidate += _root_cost(root.data, sol)
                    if run.upper > candidate:
                        run.upper, run.x, run.y = candidate, sol.x, sol.y
                x_root = sol.x
                run.record(started)
                if _converged(run.lower, run.upper, eps):
                    return run.result(Status.CONVERGED)
        except OracleError as e:
            return run.result(Status.ORACLE_ERROR, str(e))
    return run.result(Status.ITERATION_CAP)


def ddp_deterministic(rtree: RecombiningTree, oracles: OracleSet, eps: float,
                      max_iters: Optional[int] = None, sink=None, threads: Optional[int] = None) -> SolveResult:
    """Deterministic sampling: follow the largest-gap template in every stage."""
    _check_eps(eps)
    cap = _iteration_cap(max_iters)
    T = rtree.horizon
    unders, overs = {}, {}
    for t in range(T + 1):
        kids = [(m.prob, m.data) for m in rtree.templates(t + 1)] if t < T else []
        dim = rtree.state_space(t).dim
        unders[t] = _under_for(dim, kids)
        overs[t] = _over_for(dim, kids)
    root = rtree.root
    run = _Run(oracles, unders, sink, "deterministic DDP", overs)
    logger.info(f"Deterministic DDP with stage counts {rtree.counts}, eps={eps}")

    with _pool(threads) as run_all:
        try:
            sol = oracles.root_solve(unders[0])
            run.lower, run.x, run.y = sol.objective, sol.x, sol.y
            x_root = sol.x
            for i in range(1, cap + 1):
                started = time.perf_counter()
                run.iterations = i
                states = [x_root] + [None] * T
                fwd: List[List[ForwardSolution]] = [[] for _ in range(T + 1)]
                stage_gaps, selected = [], []
                for t in range(1, T + 1):
                    temps = rtree.templates(t)
                    fwd[t] = run_all(lambda m: oracles.forward(m.node_id, states[t - 1], unders[t]), temps)
                    if t < T:
                        gaps = [_gap(overs[t], unders[t], s.x) for s in fwd[t]]
                        pick = int(np.argmax(gaps))
                        states[t] = fwd[t][pick].x
                        stage_gaps.append(tuple(gaps))
                        selected.append(pick)

                cuts: List[List[ConjugacyCut]] = [[] for _ in range(T + 2)]
                values: List[List[float]] = [[] for _ in range(T + 2)]
                for t in range(T, 0, -1):
                    if t < T:
                        _stage_update(rtree, t, states, unders, overs, cuts, values)
                    temps = rtree.templates(t)
                    sols = run_all(lambda m: oracles.backward(m.node_id, states[t - 1], unders[t]), temps)
                    cuts[t] = [_cut(b, states[t - 1], unders[t], m.data) for m, b in zip(temps, sols)]
                    values[t] = [compute_over_value(s, states[t - 1], overs[t], m.data)
                                 for m, s in zip(temps, fwd[t])]
                if T > 0:
                    _stage_update(rtree, 0, states, unders, overs, cuts, values)

                sol = oracles.root_solve(unders[0])
                run.lower = sol.objective
                candidate = overs[0].evaluate(sol.x)
                if np.isfinite(candidate):
                    candidate += _root_cost(root.data, sol)
                    if run.upper > candidate:
                        run.upper, run.x, run.y = candidate, sol.x, sol.y
                x_root = sol.x
                run.record(started, stage_gaps=tuple(stage_gaps), selected=tuple(selected))
                if _converged(run.lower, run.upper, eps):
                    return run.result(Status.CONVERGED)
        except OracleError as e:
            return run.result(Status.ORACLE_ERROR, str(e))
    return run.result(Status.ITERATION_CAP)


def _stage_update(rtree, t, states, unders, overs, cuts, values):
    probs = rtree.probabilities(t + 1)
    unders[t].add_bundle(cuts[t + 1])
    value = float(np.dot(probs, values[t + 1]))
    overs[t].add_point(OverPoint(states[t].copy(), value, overs[t].sigma_eff))


def sample_paths(rtree: RecombiningTree, M: int, rng) -> np.ndarray:
    """M scenario paths as an (M, T) array of template indices for stages 1..T."""
    if M < 1:
        raise BadConfig(f"need at least one sample path, got {M}")
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    paths = np.zeros((M, rtree.horizon), dtype=int)
    for t in range(1, rtree.horizon + 1):
        count = len(rtree.templates(t))
        if count > 1:
            paths[:, t - 1] = rng.choice(count, size=M, p=rtree.probabilities(t))
    return paths


def ddp_stochastic(rtree: RecombiningTree, oracles: OracleSet, cfg: StochasticConfig,
                   sink=None, threads: Optional[int] = None) -> SolveResult:
    """Stochastic sampling: cuts along M sampled paths per iteration, no upper bound."""
    if cfg.samples < 1:
        raise BadConfig("need at least one sample path per iteration")
    T = rtree.horizon
    unders = {}
    for t in range(T + 1):
        kids = [(m.prob, m.data) for m in rtree.templates(t + 1)] if t < T else []
        unders[t] = _under_for(rtree.state_space(t).dim, kids)
    rng = np.random.default_rng(cfg.seed)
    run = _Run(oracles, unders, sink, "stochastic DDP")
    logger.info(f"Stochastic DDP with {cfg.samples} paths per iteration, seed {cfg.seed}")

    with _pool(threads) as run_all:
        try:
            sol = oracles.root_solve(unders[0])
            run.lower, run.x, run.y = sol.objective, sol.x, sol.y
            for i in range(1, cfg.max_iters + 1):
                started = time.perf_counter()
                run.iterations = i
                paths = sample_paths(rtree, cfg.samples, rng)
                states = [[run.x] + [None] * T for _ in range(cfg.samples)]
                visited: Dict[tuple, np.ndarray] = {}
                for t in range(1, T):
                    temps = rtree.templates(t)
                    for j in range(cfg.samples):
                        key = tuple(paths[j, :t])
                        if key not in visited:
                            m = temps[paths[j, t - 1]]
                            visited[key] = oracles.forward(m.node_id, states[j][t - 1], unders[t]).x
                        states[j][t] = visited[key]

                pending: List[List[ConjugacyCut]] = []
                for t in range(T, 0, -1):
                    for bundle in pending:
                        unders[t].add_bundle(bundle)
                    parents: Dict[bytes, np.ndarray] = {}
                    for j in range(cfg.samples):
                        parents.setdefault(states[j][t - 1].tobytes(), states[j][t - 1])
                    temps = rtree.templates(t)
                    pending = []
                    for xp in parents.values():
                        sols = run_all(lambda m: oracles.backward(m.node_id, xp, unders[t]), temps)
                        pending.append([_cut(b, xp, unders[t], m.data) for m, b in zip(temps, sols)])
                for bundle in pending:
                    unders[0].add_bundle(bundle)

                sol = oracles.root_solve(unders[0])
                run.lower, run.x, run.y = sol.objective, sol.x, sol.y
                run.record(started)
                if cfg.stop_rule is not None and cfg.stop_rule.should_stop(run.trace.lower_bounds):
                    return run.result(Status.STOPPED)
        except OracleError as e:
            return run.result(Status.ORACLE_ERROR, str(e))
    return run.result(Status.ITERATION_CAP)


@dataclass(frozen=True)
class PolicyEstimate:
    """Monte-Carlo cost of the current policy; not a certified bound."""
    mean: float
    stderr: float
    samples: int


def estimate_policy_cost(rtree: RecombiningTree, oracles: OracleSet, result: SolveResult,
                         samples: int = 100, seed: int = 0) -> PolicyEstimate:
    """Simulate the policy induced by a stagewise under-approximation."""
    unders = result.approximations
    root = rtree.root
    root_cost = _cost(root.data, np.zeros(0), result.y, result.x)
    paths = sample_paths(rtree, samples, seed)
    totals = np.empty(samples)
    for j in range(samples):
        total, x_prev = root_cost, result.x
        for t in range(1, rtree.horizon + 1):
            m = rtree.templates(t)[paths[j, t - 1]]
            s = oracles.forward(m.node_id, x_prev, unders[t])
            total += _cost(m.data, s.z, s.y, s.x) + m.data.penalty.sigma * float(
                m.data.penalty.norm.norm(x_prev - s.z))
            x_prev = s.x
        totals[j] = total
    stderr = float(totals.std(ddof=1) / np.sqrt(samples)) if samples > 1 else 0.0
    return PolicyEstimate(float(totals.mean()), stderr, samples)
