"""Instance documents: parsing, validation and deterministic emission.

An instance is a JSON document::

    {
      "version": 1,
      "meta": {"name": ..., "convex": ..., ...},
      "tree": {"nodes": [{"id", "parent", "prob", "data", "class"}, ...]},
      "node_data": {KEY: {"cost", "state_space", "feasible", "penalty",
                          "dual_bounds", "convex"}},
      "oracle": {"kind": "grid" | "analytic:<name>", "adversarial", "seed",
                 "resolution"}
    }

Unknown fields are rejected; every error names the offending field path.
"""
import json
import logging
from dataclasses import asdict, dataclass, field
from typing import Any, Dict, List, Optional, Tuple

from . import config
from .costs import make_cost
from .errors import BadParams, ModelError, SchemaError, VersionMismatch
from .model import (Ball, Box, DualBounds, FeasibleSet, FiniteSet, NodeData, NormKind,
                    PenaltySpec, StateSpace)

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class InstanceMeta:
    name: str
    convex: bool = False
    optimal_value: Optional[float] = None
    provenance: str = ""
    shift: float = 0.0
    sigma: Optional[float] = None
    norm: Optional[str] = None
    l_lambda: Optional[float] = None
    l_rho: Optional[float] = None
    h: Optional[float] = None
    sigma_certified: bool = False
    certified_sigma: Optional[float] = None
    adversarial: bool = False
    extra: Dict[str, Any] = field(default_factory=dict, compare=False, hash=False)


@dataclass(frozen=True)
class NodeSpec:
    id: str
    parent: Optional[str]
    prob: float
    data: str
    klass: Optional[str] = None


@dataclass(frozen=True)
class OracleSpec:
    kind: str = "grid"
    adversarial: bool = False
    seed: int = 0
    resolution: Optional[float] = None

    @property
    def analytic(self) -> Optional[str]:
        return self.kind.split(":", 1)[1] if self.kind.startswith("analytic:") else None


@dataclass
class InstanceDescription:
    meta: InstanceMeta
    nodes: List[NodeSpec]
    node_data: Dict[str, NodeData]
    oracle: OracleSpec = field(default_factory=OracleSpec)
    version: int = config.INSTANCE_VERSION


# Parsing

def _require(doc: dict, key: str, path: str):
    if key not in doc:
        raise SchemaError(f"{path}.{key}", "missing required field")
    return doc[key]


def _object(value, path: str, allowed, required=()) -> dict:
    if not isinstance(value, dict):
        raise SchemaError(path, f"expected an object, got {type(value).__name__}")
    unknown = sorted(set(value) - set(allowed))
    if unknown:
        raise SchemaError(f"{path}.{unknown[0]}", "unknown field")
    for key in required:
        _require(value, key, path)
    return value


def _number(value, path: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise SchemaError(path, f"expected a number, got {value!r}")
    return float(value)


def _point(value, path: str) -> Tuple[float, ...]:
    if not isinstance(value, list):
        raise SchemaError(path, "expected a list of numbers")
    return tuple(_number(v, f"{path}[{i}]") for i, v in enumerate(value))


def _points(value, path: str) -> Tuple[Tuple[float, ...], ...]:
    if not isinstance(value, list):
        raise SchemaError(path, "expected a list of points")
    return tuple(_point(p, f"{path}[{i}]") for i, p in enumerate(value))


def _state_space(doc, path: str) -> StateSpace:
    kind = _require(_object(doc, path, ('kind', 'lower', 'upper', 'h', 'center', 'radius', 'extra',
                                        'points')), 'kind', path)
    try:
        if kind == 'box':
            _object(doc, path, ('kind', 'lower', 'upper', 'h'), ('lower', 'upper', 'h'))
            return Box(_point(doc['lower'], f"{path}.lower"), _point(doc['upper'], f"{path}.upper"),
                       _number(doc['h'], f"{path}.h"))
        if kind == 'ball':
            _object(doc, path, ('kind', 'center', 'radius', 'h', 'extra'), ('center', 'radius', 'h'))
            return Ball(_point(doc['center'], f"{path}.center"), _number(doc['radius'], f"{path}.radius"),
                        _number(doc['h'], f"{path}.h"), _points(doc.get('extra', []), f"{path}.extra"))
        if kind == 'finite':
            _object(doc, path, ('kind', 'points'), ('points',))
            return FiniteSet(_points(doc['points'], f"{path}.points"))
    except ModelError as e:
        raise SchemaError(path, str(e)) from None
    raise SchemaError(f"{path}.kind", f"unknown state space kind {kind!r}")


def _feasible(doc, path: str) -> FeasibleSet:
    doc = _object(doc, path, ('internal', 'pairs'))
    internal = doc.get('internal')
    pairs = doc.get('pairs')
    if pairs is not None:
        if not isinstance(pairs, list):
            raise SchemaError(f"{path}.pairs", "expected a list of [x, y] pairs")
        parsed = []
        for i, pair in enumerate(pairs):
            if not isinstance(pair, list) or len(pair) != 2:
                raise SchemaError(f"{path}.pairs[{i}]", "expected [x, y]")
            parsed.append((_point(pair[0], f"{path}.pairs[{i}][0]"), _point(pair[1], f"{path}.pairs[{i}][1]")))
        pairs = tuple(parsed)
    return FeasibleSet(internal=None if internal is None else _state_space(internal, f"{path}.internal"),
                       pairs=pairs)


def _node_data(doc, path: str) -> NodeData:
    doc = _object(doc, path, ('cost', 'state_space', 'feasible', 'penalty', 'dual_bounds', 'convex'),
                  ('cost', 'state_space', 'penalty', 'dual_bounds'))
    cost_doc = _object(doc['cost'], f"{path}.cost", ('family', 'params'), ('family',))
    _typed(cost_doc['family'], str, f"{path}.cost.family")
    params = cost_doc.get('params', {})
    if not isinstance(params, dict):
        raise SchemaError(f"{path}.cost.params", "expected an object")
    try:
        cost = make_cost(cost_doc['family'], params)
    except BadParams as e:
        raise SchemaError(f"{path}.cost.params", str(e)) from None

    pen = _object(doc['penalty'], f"{path}.penalty", ('norm', 'sigma'), ('norm', 'sigma'))
    if not isinstance(pen['norm'], str) or pen['norm'] not in {k.value for k in NormKind}:
        raise SchemaError(f"{path}.penalty.norm", f"unknown norm {pen['norm']!r}")
    bounds = _object(doc['dual_bounds'], f"{path}.dual_bounds", ('l_lambda', 'l_rho'), ('l_lambda', 'l_rho'))
    convex = doc.get('convex', False)
    if not isinstance(convex, bool):
        raise SchemaError(f"{path}.convex", "expected a boolean")
    try:
        return NodeData(
            cost=cost,
            state_space=_state_space(doc['state_space'], f"{path}.state_space"),
            penalty=PenaltySpec(NormKind(pen['norm']), _number(pen['sigma'], f"{path}.penalty.sigma")),
            dual_bounds=DualBounds(_number(bounds['l_lambda'], f"{path}.dual_bounds.l_lambda"),
                                   _number(bounds['l_rho'], f"{path}.dual_bounds.l_rho")),
            feasible=_feasible(doc.get('feasible', {}), f"{path}.feasible"),
            convex=convex,
        )
    except ModelError as e:
        raise SchemaError(path, str(e)) from None


_META_TYPES = {
    'name': str, 'convex': bool, 'optimal_value': float, 'provenance': str, 'shift': float,
    'sigma': float, 'norm': str, 'l_lambda': float, 'l_rho': float, 'h': float,
    'sigma_certified': bool, 'certified_sigma': float, 'adversarial': bool, 'extra': dict,
}
_META_REQUIRED = ('name', 'convex', 'provenance', 'shift', 'sigma_certified', 'adversarial', 'extra')


def _typed(value, kind, path: str):
    if kind is float:
        _number(value, path)
        return value
    if kind is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise SchemaError(path, f"expected an integer, got {value!r}")
        return value
    if not isinstance(value, kind):
        raise SchemaError(path, f"expected {kind.__name__}, got {value!r}")
    return value


def _meta(doc, path: str) -> InstanceMeta:
    doc = _object(doc, path, _META_TYPES, ('name',))
    values = {}
    for key, value in doc.items():
        if value is None and key not in _META_REQUIRED:
            values[key] = None
            continue
        values[key] = _typed(value, _META_TYPES[key], f"{path}.{key}")
    return InstanceMeta(**values)


def _nodes(doc, path: str) -> List[NodeSpec]:
    doc = _object(doc, path, ('nodes',), ('nodes',))
    if not isinstance(doc['nodes'], list):
        raise SchemaError(f"{path}.nodes", "expected a list")
    nodes = []
    for i, n in enumerate(doc['nodes']):
        p = f"{path}.nodes[{i}]"
        n = _object(n, p, ('id', 'parent', 'prob', 'data', 'class'), ('id', 'data'))
        parent = n.get('parent')
        if parent is not None and not isinstance(parent, str):
            raise SchemaError(f"{p}.parent", "expected a node id or null")
        klass = n.get('class')
        if klass is not None:
            _typed(klass, str, f"{p}.class")
        nodes.append(NodeSpec(id=str(n['id']), parent=parent,
                              prob=_number(n.get('prob', 1.0), f"{p}.prob"),
                              data=str(n['data']), klass=klass))
    return nodes


def _oracle(doc, path: str) -> OracleSpec:
    doc = _object(doc, path, ('kind', 'adversarial', 'seed', 'resolution'))
    kind = doc.get('kind', 'grid')
    if not isinstance(kind, str) or (kind != 'grid' and not kind.startswith('analytic:')):
        raise SchemaError(f"{path}.kind", f"unknown oracle kind {kind!r}")
    resolution = doc.get('resolution')
    return OracleSpec(kind=kind, adversarial=_typed(doc.get('adversarial', False), bool, f"{path}.adversarial"),
                      seed=_typed(doc.get('seed', 0), int, f"{path}.seed"),
                      resolution=None if resolution is None else _number(resolution, f"{path}.resolution"))


def parse_instance(text) -> InstanceDescription:
    """Parse and validate an instance document (str or UTF-8 bytes)."""
    if isinstance(text, bytes):
        try:
            text = text.decode('utf-8')
        except UnicodeDecodeError as e:
            raise SchemaError('$', f"instance is not valid UTF-8 (byte {e.start})") from None
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise SchemaError(f"line {e.lineno}", e.msg) from None
    doc = _object(doc, '$', ('version', 'meta', 'tree', 'node_data', 'oracle'), ('version', 'tree', 'node_data'))
    if doc['version'] != config.INSTANCE_VERSION:
        raise VersionMismatch(f"instance version {doc['version']!r}, expected {config.INSTANCE_VERSION}")
    node_data_doc = doc['node_data']
    if not isinstance(node_data_doc, dict):
        raise SchemaError('$.node_data', "expected an object")
    description = InstanceDescription(
        meta=_meta(doc.get('meta', {'name': 'unnamed'}), '$.meta'),
        nodes=_nodes(doc['tree'], '$.tree'),
        node_data={key: _node_data(value, f"$.node_data.{key}") for key, value in node_data_doc.items()},
        oracle=_oracle(doc.get('oracle', {}), '$.oracle'),
    )
    logger.debug(f"Parsed instance {description.meta.name!r} with {len(description.nodes)} nodes")
    return description


# Emission

def _emit_space(space: StateSpace) -> dict:
    if isinstance(space, Box):
        return {'kind': 'box', 'lower': list(space.lower), 'upper': list(space.upper), 'h': space.h}
    if isinstance(space, Ball):
        doc = {'kind': 'ball', 'center': list(space.center), 'radius': space.radius, 'h': space.h}
        if space.extra:
            doc['extra'] = [list(p) for p in space.extra]
        return doc
    return {'kind': 'finite', 'points': [list(p) for p in space.points]}


def _emit_data(data: NodeData) -> dict:
    feasible = {}
    if data.feasible.internal is not None:
        feasible['internal'] = _emit_space(data.feasible.internal)
    if data.feasible.pairs is not None:
        feasible['pairs'] = [[list(x), list(y)] for x, y in data.feasible.pairs]
    doc = {
        'cost': {'family': data.cost.family, 'params': data.cost.params},
        'state_space': _emit_space(data.state_space),
        'penalty': {'norm': data.penalty.norm.value, 'sigma': data.penalty.sigma},
        'dual_bounds': {'l_lambda': data.dual_bounds.l_lambda, 'l_rho': data.dual_bounds.l_rho},
        'convex': data.convex,
    }
    if feasible:
        doc['feasible'] = feasible
    return doc


def to_document(description: InstanceDescription) -> dict:
    nodes = []
    for n in description.nodes:
        node = {'id': n.id, 'parent': n.parent, 'prob': n.prob, 'data': n.data}
        if n.klass is not None:
            node['class'] = n.klass
        nodes.append(node)
    return {
        'version': description.version,
        'meta': asdict(description.meta),
        'tree': {'nodes': nodes},
        'node_data': {key: _emit_data(d) for key, d in description.node_data.items()},
        'oracle': asdict(description.oracle),
    }


def emit_instance(description: InstanceDescription) -> str:
    """Serialize a description; equal descriptions give identical text."""
    try:
        return json.dumps(to_document(description), indent=2) + "\n"
    except TypeError as e:
        raise SchemaError('$', f"instance holds values that are not serializable: {e}") from None
