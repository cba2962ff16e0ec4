"""Nodal cost families f_n(z, y, x).

A cost is evaluated row-wise on stacked arguments: ``z`` is the local copy of
the parent state, ``y`` the internal decision and ``x`` the outgoing state.
Infeasible combinations come back masked (``numpy.ma``) instead of carrying an
infinite value, so callers never do arithmetic with +inf.

Oracles and the brute-force DP never call :meth:`NodalCost.evaluate` on the
full product grid directly; they ask for a :class:`ReducedCost`, the minimum
over ``y`` on a (z, x) grid, which separable families return in factored form.
"""
import logging
from abc import ABC, abstractmethod
from typing import Callable, ClassVar, Dict, Optional, Type

import numpy as np

from . import config
from .errors import BadParams, GridTooLarge, UnknownCostFamily

logger = logging.getLogger(__name__)

FEASIBILITY_SLACK = 1e-12


class ReducedCost:
    """Minimum of f over the internal decision y on a (z, x) grid.

    Either ``table`` (A, K) is set, or the separable pair ``z_part`` (A,) and
    ``x_part`` (K,) with f = z_part[a] + x_part[k].
    """

    def __init__(self, y_of: Callable[[int, int], np.ndarray],
                 table: Optional[np.ma.MaskedArray] = None,
                 z_part: Optional[np.ma.MaskedArray] = None,
                 x_part: Optional[np.ma.MaskedArray] = None):
        if table is None and (z_part is None or x_part is None):
            raise ValueError("ReducedCost needs a table or both separable parts")
        self.table = table
        self.z_part = z_part
        self.x_part = x_part
        self._y_of = y_of

    @property
    def separable(self) -> bool:
        return self.table is None

    @property
    def shape(self):
        if self.table is not None:
            return self.table.shape
        return (self.z_part.shape[0], self.x_part.shape[0])

    def values(self) -> np.ma.MaskedArray:
        """Full (A, K) table; materializes the outer sum for separable costs."""
        if self.table is not None:
            return self.table
        return self.z_part[:, None] + self.x_part[None, :]

    def y_at(self, a: int, k: int) -> np.ndarray:
        return np.asarray(self._y_of(a, k), dtype=float)


def _as_rows(a) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    if a.ndim == 1:
        a = a[None, :]
    return a


def _first_allowed(allowed: np.ndarray) -> np.ndarray:
    """Index of the first allowed internal decision for every x."""
    return np.argmax(allowed, axis=1)


class NodalCost(ABC):
    """A named cost family with JSON-ready parameters."""

    family: ClassVar[str] = ""

    def __init__(self, **params):
        self._params = params
        self._validate()

    def _validate(self):
        pass

    @property
    def params(self) -> dict:
        return dict(self._params)

    @property
    def lipschitz(self) -> float:
        """Lipschitz constant in z (Euclidean), +inf when unknown."""
        return float('inf')

    @abstractmethod
    def evaluate(self, z, y, x) -> np.ma.MaskedArray:
        """Row-wise f(z, y, x); infeasible rows are masked."""

    def evaluate_point(self, z, y, x) -> Optional[float]:
        """f at a single point, or None when infeasible."""
        value = self.evaluate(_as_rows(z), _as_rows(y), _as_rows(x))[0]
        if value is np.ma.masked:
            return None
        return float(value)

    def reduce(self, z_grid: np.ndarray, feasible) -> ReducedCost:
        """Minimum over y for every (z, x) pair, by enumeration."""
        return _enumerate(self, z_grid, feasible)

    def __eq__(self, other):
        if not isinstance(other, NodalCost):
            return NotImplemented
        return self.family == other.family and self._params == other._params

    def __hash__(self):
        return hash(self.family)

    def __repr__(self):
        return f"{type(self).__name__}({self._params!r})"


def _enumerate(cost: NodalCost, z_grid: np.ndarray, feasible) -> ReducedCost:
    A = z_grid.shape[0]
    X, Y, allowed = feasible.x, feasible.y, feasible.allowed
    K, J = X.shape[0], Y.shape[0]
    if A * K * J > config.MAX_GRID_POINTS:
        raise GridTooLarge(
            f"{cost.family}: {A} x {K} x {J} enumeration exceeds {config.MAX_GRID_POINTS} points")

    table = np.ma.masked_all((A, K))
    choice = np.zeros((A, K), dtype=int)
    block = max(1, config.CHUNK_ELEMENTS // max(1, A * J))
    for start in range(0, K, block):
        ks = np.arange(start, min(K, start + block))
        kb = ks.size
        zz = np.repeat(z_grid, kb * J, axis=0)
        xx = np.tile(np.repeat(X[ks], J, axis=0), (A, 1))
        yy = np.tile(Y, (A * kb, 1))
        vals = cost.evaluate(zz, yy, xx).reshape(A, kb, J)
        vals = np.ma.masked_where(~np.broadcast_to(allowed[ks][None, :, :], vals.shape)
                                  | np.ma.getmaskarray(vals), vals)
        table[:, ks] = vals.min(axis=2)
        choice[:, ks] = vals.argmin(axis=2)

    def y_of(a, k):
        return Y[choice[a, k]]

    return ReducedCost(y_of, table=table)


COST_FAMILIES: Dict[str, Type[NodalCost]] = {}


def register(cls: Type[NodalCost]) -> Type[NodalCost]:
    COST_FAMILIES[cls.family] = cls
    return cls


def make_cost(family: str, params: Optional[dict] = None) -> NodalCost:
    """Instantiate a registered cost family."""
    try:
        cls = COST_FAMILIES[family]
    except KeyError:
        raise UnknownCostFamily(f"unknown cost family {family!r}") from None
    try:
        return cls(**(params or {}))
    except (TypeError, ValueError) as e:
        raise BadParams(f"{family}: {e}") from None


@register
class ConstantCost(NodalCost):
    """f = value."""

    family = "constant"

    def __init__(self, value: float = 0.0):
        super().__init__(value=float(value))

    @property
    def lipschitz(self):
        return 0.0

    def evaluate(self, z, y, x):
        return np.ma.MaskedArray(np.full(len(z), self._params['value']), mask=False)

    def reduce(self, z_grid, feasible):
        first = _first_allowed(feasible.allowed)
        z_part = np.ma.MaskedArray(np.full(z_grid.shape[0], self._params['value']), mask=False)
        x_part = np.ma.MaskedArray(np.zeros(feasible.x.shape[0]), mask=False)
        return ReducedCost(lambda a, k: feasible.y[first[k]], z_part=z_part, x_part=x_part)


@register
class AffineCost(NodalCost):
    """f = constant + <a_z, z> + <a_x, x> + <a_y, y>."""

    family = "affine"

    def __init__(self, constant: float = 0.0, z=None, x=None, y=None):
        super().__init__(
            constant=float(constant),
            z=None if z is None else [float(v) for v in z],
            x=None if x is None else [float(v) for v in x],
            y=None if y is None else [float(v) for v in y],
        )

    @property
    def lipschitz(self):
        a = self._params['z']
        return 0.0 if a is None else float(np.linalg.norm(a))

    def _dot(self, key, rows):
        coef = self._params[key]
        if coef is None:
            return np.zeros(rows.shape[0])
        if rows.shape[1] != len(coef):
            raise BadParams(f"affine.{key}: expected {rows.shape[1]} coefficients, got {len(coef)}")
        return rows @ np.asarray(coef)

    def evaluate(self, z, y, x):
        z, y, x = _as_rows(z), _as_rows(y), _as_rows(x)
        value = self._params['constant'] + self._dot('z', z) + self._dot('x', x) + self._dot('y', y)
        return np.ma.MaskedArray(value, mask=False)

    def reduce(self, z_grid, feasible):
        z_part = np.ma.MaskedArray(self._params['constant'] + self._dot('z', z_grid), mask=False)
        y_cost = np.ma.masked_where(~feasible.allowed,
                                    np.broadcast_to(self._dot('y', feasible.y), feasible.allowed.shape))
        best = y_cost.argmin(axis=1)
        x_part = self._dot('x', feasible.x) + y_cost.min(axis=1)
        return ReducedCost(lambda a, k: feasible.y[best[k]], z_part=z_part, x_part=x_part)


@register
class QuadraticCapCost(NodalCost):
    """f = y subject to (y - center)^2 + ||z||^2 <= radius^2.

    The minimum over y is center - sqrt(radius^2 - ||z||^2), which is not
    Lipschitz at ||z|| = radius.
    """

    family = "quadratic_cap"

    def __init__(self, center: float = 1.0, radius: float = 1.0):
        super().__init__(center=float(center), radius=float(radius))

    def _validate(self):
        if self._params['radius'] <= 0:
            raise BadParams("quadratic_cap.radius must be positive")

    def evaluate(self, z, y, x):
        c, r = self._params['center'], self._params['radius']
        z, y = _as_rows(z), _as_rows(y)
        lhs = (y[:, 0] - c) ** 2 + np.sum(z * z, axis=1)
        return np.ma.masked_where(lhs > r * r + FEASIBILITY_SLACK * (1 + r * r), y[:, 0].copy())

    def minimum(self, z_norm):
        """Closed-form minimum over y as a function of ||z||."""
        c, r = self._params['center'], self._params['radius']
        z_norm = np.asarray(z_norm, dtype=float)
        inside = np.clip(r * r - z_norm ** 2, 0.0, None)
        return np.ma.masked_where(z_norm > r * (1 + FEASIBILITY_SLACK), c - np.sqrt(inside))

    def reduce(self, z_grid, feasible):
        z_part = self.minimum(np.linalg.norm(z_grid, axis=1))
        x_part = np.ma.MaskedArray(np.zeros(feasible.x.shape[0]), mask=False)
        return ReducedCost(lambda a, k: np.array([float(z_part.data[a])]), z_part=z_part, x_part=x_part)


@register
class IntegerCoverCost(NodalCost):
    """f = <weights, y> with y >= z componentwise."""

    family = "integer_cover"

    def __init__(self, weights=(1.0,)):
        super().__init__(weights=[float(w) for w in weights])

    def evaluate(self, z, y, x):
        z, y = _as_rows(z), _as_rows(y)
        w = np.asarray(self._params['weights'])
        value = y @ w
        covered = np.all(y >= z - FEASIBILITY_SLACK, axis=1)
        return np.ma.masked_where(~covered, value)


@register
class CapEnvelopeCost(NodalCost):
    """f = max{0, max_k v_k + s<w_k, z - w_k>} + weight * ||x - target||_2.

    With no anchors the envelope term is zero; with no target the distance
    term is zero.
    """

    family = "cap_envelope"

    def __init__(self, anchors=(), values=(), slope: float = 0.0, target=None, weight: float = 0.0):
        super().__init__(
            anchors=[[float(v) for v in w] for w in anchors],
            values=[float(v) for v in values],
            slope=float(slope),
            target=None if target is None else [float(v) for v in target],
            weight=float(weight),
        )

    def _validate(self):
        if len(self._params['anchors']) != len(self._params['values']):
            raise BadParams("cap_envelope: anchors and values differ in length")

    @property
    def lipschitz(self):
        anchors = np.asarray(self._params['anchors'])
        if anchors.size == 0:
            return 0.0
        return self._params['slope'] * float(np.max(np.linalg.norm(anchors, axis=1)))

    def envelope(self, z) -> np.ndarray:
        z = _as_rows(z)
        anchors = np.asarray(self._params['anchors'], dtype=float)
        if anchors.size == 0:
            return np.zeros(z.shape[0])
        values = np.asarray(self._params['values'])
        s = self._params['slope']
        offsets = values - s * np.sum(anchors * anchors, axis=1)
        return np.maximum(0.0, np.max(offsets[None, :] + s * (z @ anchors.T), axis=1))

    def distance(self, x) -> np.ndarray:
        x = _as_rows(x)
        if self._params['target'] is None:
            return np.zeros(x.shape[0])
        return self._params['weight'] * np.linalg.norm(x - np.asarray(self._params['target']), axis=1)

    def evaluate(self, z, y, x):
        return np.ma.MaskedArray(self.envelope(z) + self.distance(x), mask=False)

    def reduce(self, z_grid, feasible):
        first = _first_allowed(feasible.allowed)
        z_part = np.ma.MaskedArray(self.envelope(z_grid), mask=False)
        x_part = np.ma.MaskedArray(self.distance(feasible.x), mask=False)
        return ReducedCost(lambda a, k: feasible.y[first[k]], z_part=z_part, x_part=x_part)


@register
class TableCost(NodalCost):
    """Tabulated f(z, x) on finite parent and own state sets.

    ``values[i][j]`` is the cost of moving from parent state ``z_points[i]``
    to state ``x_points[j]``; ``None`` marks an infeasible transition.
    """

    family = "table"

    def __init__(self, z_points=(), x_points=(), values=()):
        super().__init__(
            z_points=[[float(v) for v in p] for p in z_points],
            x_points=[[float(v) for v in p] for p in x_points],
            values=[[None if v is None else float(v) for v in row] for row in values],
        )

    def _validate(self):
        rows = self._params['values']
        if len(rows) != len(self._params['z_points']) or any(
                len(row) != len(self._params['x_points']) for row in rows):
            raise BadParams("table: values must be |z_points| x |x_points|")
        self._z_index = {tuple(p): i for i, p in enumerate(self._params['z_points'])}
        self._x_index = {tuple(p): j for j, p in enumerate(self._params['x_points'])}
        raw = np.array([[np.nan if v is None else v for v in row] for row in rows], dtype=float)
        self._table = np.ma.masked_invalid(raw.reshape(len(rows), len(self._params['x_points'])))

    def _lookup(self, index, rows):
        return np.array([index.get(tuple(map(float, r)), -1) for r in rows], dtype=int)

    def evaluate(self, z, y, x):
        zi = self._lookup(self._z_index, _as_rows(z))
        xi = self._lookup(self._x_index, _as_rows(x))
        known = (zi >= 0) & (xi >= 0)
        values = np.ma.masked_all(zi.shape[0])
        if known.any():
            values[known] = self._table[zi[known], xi[known]]
        return values

    def reduce(self, z_grid, feasible):
        zi = self._lookup(self._z_index, z_grid)
        xi = self._lookup(self._x_index, feasible.x)
        table = np.ma.masked_all((zi.size, xi.size))
        rows, cols = np.flatnonzero(zi >= 0), np.flatnonzero(xi >= 0)
        if rows.size and cols.size:
            table[np.ix_(rows, cols)] = self._table[np.ix_(zi[rows], xi[cols])]
        first = _first_allowed(feasible.allowed)
        return ReducedCost(lambda a, k: feasible.y[first[k]], table=table)
