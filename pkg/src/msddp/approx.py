"""Cut-based under-approximations and Lipschitz-envelope over-approximations.

An :class:`UnderApprox` is the max of weighted cut bundles floored at zero.
An :class:`OverApprox` is the lower envelope of cones ``v + sigma * ||x - a||``
or, in convex mode, the convex hull of those cones. The hull is evaluated
through its dual form

    max over ||lam||_* <= sigma of min_j (v_j + <lam, x - a_j>),

a linear program for l1/linf norms (and in one dimension) and a small smooth
program for the Euclidean norm.
"""
import logging
from dataclasses import dataclass
from enum import Enum
from typing import List, Optional, Sequence

import numpy as np
from scipy.optimize import linprog, minimize
from scipy.spatial.distance import cdist

from . import config
from .errors import (ApproxError, DimensionMismatch, DualBoundViolation, NonFiniteValue,
                     WeightMismatch)
from .model import DualBounds, NormKind, PenaltySpec

logger = logging.getLogger(__name__)

_METRIC = {NormKind.L1: 'cityblock', NormKind.L2: 'euclidean', NormKind.LINF: 'chebyshev'}
_KINDS = (NormKind.L1, NormKind.L2, NormKind.LINF)


def penalty_eval(spec: PenaltySpec, v, dim: Optional[int] = None):
    """psi(v) for the penalty's norm; vectorized over leading axes."""
    v = np.asarray(v, dtype=float)
    if v.ndim == 0:
        v = v[None]
    if dim is not None and v.shape[-1] != dim:
        raise DimensionMismatch(f"expected a {dim}-vector, got shape {v.shape}")
    out = spec.norm.norm(v)
    return float(out) if out.ndim == 0 else out


def pairwise_distances(X: np.ndarray, anchors: np.ndarray, norm: NormKind) -> np.ndarray:
    if X.shape[1] == 0:
        return np.zeros((X.shape[0], anchors.shape[0]))
    return cdist(X, anchors, _METRIC[norm])


def _rows(x, dim: int) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[None, :]
    if x.shape[1] != dim:
        raise DimensionMismatch(f"expected {dim}-dimensional states, got shape {x.shape}")
    return x


@dataclass(frozen=True, eq=False)
class ConjugacyCut:
    """C(x) = constant + <lam, x - anchor> - rho * psi(anchor - x)."""
    anchor: np.ndarray
    lam: np.ndarray
    rho: float
    constant: float
    penalty: PenaltySpec

    def __call__(self, x) -> np.ndarray:
        x = _rows(x, self.anchor.shape[0])
        diff = self.anchor[None, :] - x
        return self.constant - diff @ self.lam - self.rho * self.penalty.norm.norm(diff)

    def to_record(self) -> dict:
        return {
            'anchor': self.anchor.tolist(),
            'lambda': self.lam.tolist(),
            'rho': float(self.rho),
            'constant': float(self.constant),
        }


class UnderApprox:
    """Q_under(x) = max{0, max over bundles of sum_m p_m C_m(x)}.

    ``weights`` and ``dual_bounds`` describe the children the bundles are
    generated from; a collection with no children is identically zero.
    """

    def __init__(self, dim: int, weights: Sequence[float] = (), dual_bounds: Sequence[DualBounds] = ()):
        if len(weights) != len(dual_bounds):
            raise ApproxError("one dual bound per child weight is required")
        self.dim = dim
        self.weights = np.asarray(weights, dtype=float)
        self.dual_bounds = tuple(dual_bounds)
        self.bundles: List[tuple] = []
        self._rows: List[tuple] = []
        self._arrays = None

    def __len__(self):
        return len(self.bundles)

    @property
    def lipschitz(self) -> float:
        return float(sum(p * (b.l_lambda + b.l_rho) for p, b in zip(self.weights, self.dual_bounds)))

    def add_bundle(self, cuts: Sequence[ConjugacyCut], weights: Optional[Sequence[float]] = None):
        """Append one bundle holding a cut per child."""
        if weights is None:
            weights = self.weights
        weights = np.asarray(weights, dtype=float)
        if len(cuts) != self.weights.size or weights.size != self.weights.size:
            raise WeightMismatch(f"expected {self.weights.size} weighted cuts, got {len(cuts)}")
        if np.any(np.abs(weights - self.weights) > config.WEIGHT_TOLERANCE):
            raise WeightMismatch(f"bundle weights {weights.tolist()} differ from {self.weights.tolist()}")

        anchor = np.asarray(cuts[0].anchor, dtype=float)
        if anchor.shape != (self.dim,):
            raise DimensionMismatch(f"cut anchor has shape {anchor.shape}, expected ({self.dim},)")
        slope = np.zeros(self.dim)
        rhos = np.zeros(len(_KINDS))
        constant = 0.0
        for cut, p, bounds in zip(cuts, weights, self.dual_bounds):
            if cut.lam.shape != (self.dim,) or cut.anchor.shape != (self.dim,):
                raise DimensionMismatch("cut dimension differs from the approximation")
            if not np.array_equal(cut.anchor, anchor):
                raise ApproxError("cuts of one bundle must share their anchor")
            dual_norm = float(cut.penalty.norm.dual.norm(cut.lam)) if self.dim else 0.0
            if dual_norm > bounds.l_lambda + config.DUAL_BOUND_SLACK:
                raise DualBoundViolation(f"||lambda||_* = {dual_norm} exceeds {bounds.l_lambda}")
            if not -config.DUAL_BOUND_SLACK <= cut.rho <= bounds.l_rho + config.DUAL_BOUND_SLACK:
                raise DualBoundViolation(f"rho = {cut.rho} outside [0, {bounds.l_rho}]")
            if not np.isfinite(cut.constant):
                raise NonFiniteValue("cut constant is not finite")
            constant += p * cut.constant
            slope += p * cut.lam
            rhos[_KINDS.index(cut.penalty.norm)] += p * cut.rho
        self.bundles.append((tuple(cuts), tuple(weights)))
        self._rows.append((anchor, constant, slope, rhos))
        self._arrays = None

    def _stack(self):
        if self._arrays is None:
            anchors = np.array([r[0] for r in self._rows]).reshape(len(self._rows), self.dim)
            consts = np.array([r[1] for r in self._rows])
            slopes = np.array([r[2] for r in self._rows]).reshape(len(self._rows), self.dim)
            rhos = np.array([r[3] for r in self._rows]).reshape(len(self._rows), len(_KINDS))
            offsets = consts - np.sum(anchors * slopes, axis=1)
            self._arrays = (anchors, offsets, slopes, rhos)
        return self._arrays

    def evaluate_many(self, X) -> np.ndarray:
        X = _rows(X, self.dim)
        out = np.zeros(X.shape[0])
        if not self._rows:
            return out
        anchors, offsets, slopes, rhos = self._stack()
        block = max(1, config.CHUNK_ELEMENTS // len(self._rows))
        for start in range(0, X.shape[0], block):
            xs = X[start:start + block]
            vals = offsets[None, :] + xs @ slopes.T
            for col, kind in enumerate(_KINDS):
                if np.any(rhos[:, col]):
                    vals -= pairwise_distances(xs, anchors, kind) * rhos[None, :, col]
            out[start:start + block] = np.maximum(0.0, vals.max(axis=1))
        return out

    def evaluate(self, x) -> float:
        return float(self.evaluate_many(x)[0])

    def to_records(self) -> List[dict]:
        return [{'weights': list(w), 'cuts': [c.to_record() for c in cuts]} for cuts, w in self.bundles]


class EnvelopeMode(str, Enum):
    POINTWISE_MIN = "pointwise_min"
    CONVEX_HULL = "convex_hull"


@dataclass(frozen=True, eq=False)
class OverPoint:
    anchor: np.ndarray
    value: float
    sigma_eff: float


class OverApprox:
    """Upper envelope of the regularized expected cost-to-go.

    Empty means +inf (``evaluate`` returns ``numpy.inf`` as a sentinel; callers
    compare it but never add it). A leaf collection is identically zero.
    """

    def __init__(self, dim: int, sigma_eff: float, norm: NormKind = NormKind.L2,
                 mode: EnvelopeMode = EnvelopeMode.POINTWISE_MIN, leaf: bool = False):
        self.dim = dim
        self.sigma_eff = float(sigma_eff)
        self.norm = NormKind(norm)
        self.mode = EnvelopeMode(mode)
        self.leaf = leaf
        self.points: List[OverPoint] = []
        self._anchors = np.zeros((0, dim))
        self._values = np.zeros(0)

    def __len__(self):
        return len(self.points)

    @property
    def is_empty(self) -> bool:
        return not self.leaf and not self.points

    @property
    def lipschitz(self) -> float:
        return 0.0 if self.leaf else self.sigma_eff

    def add_point(self, point: OverPoint):
        if self.leaf:
            raise ApproxError("leaf over-approximations are identically zero")
        if not np.isfinite(point.value):
            raise NonFiniteValue(f"over-approximation value {point.value} is not finite")
        anchor = np.asarray(point.anchor, dtype=float)
        if anchor.shape != (self.dim,):
            raise DimensionMismatch(f"anchor has shape {anchor.shape}, expected ({self.dim},)")
        if abs(point.sigma_eff - self.sigma_eff) > 1e-12 * max(1.0, self.sigma_eff):
            raise ApproxError(f"point slope {point.sigma_eff} differs from {self.sigma_eff}")
        self.points.append(point)
        self._anchors = np.vstack([self._anchors, anchor[None, :]])
        self._values = np.append(self._values, float(point.value))

    def pointwise_many(self, X) -> np.ndarray:
        X = _rows(X, self.dim)
        if self.leaf:
            return np.zeros(X.shape[0])
        if not self.points:
            return np.full(X.shape[0], np.inf)
        cones = self._values[None, :] + self.sigma_eff * pairwise_distances(X, self._anchors, self.norm)
        return cones.min(axis=1)

    def evaluate_many(self, X) -> np.ndarray:
        X = _rows(X, self.dim)
        pointwise = self.pointwise_many(X)
        if (self.mode is EnvelopeMode.POINTWISE_MIN or self.leaf or len(self.points) < 2
                or self.sigma_eff == 0 or self.dim == 0):
            return pointwise
        hull = np.array([self._hull(x) for x in X])
        return np.minimum(hull, pointwise)

    def evaluate(self, x) -> float:
        return float(self.evaluate_many(x)[0])

    def _hull(self, x: np.ndarray) -> float:
        diffs = x[None, :] - self._anchors
        if self.norm is NormKind.L2 and self.dim > 1:
            lam = _ball_dual(diffs, self._values, self.sigma_eff)
        else:
            lam = _polyhedral_dual(diffs, self._values, self.sigma_eff,
                                   NormKind.LINF if self.dim == 1 else self.norm.dual)
        if lam is None:
            return float('inf')
        return float(np.min(self._values + diffs @ lam))


def _polyhedral_dual(diffs, values, sigma, dual: NormKind) -> Optional[np.ndarray]:
    """Maximize min_j (v_j + <lam, d_j>) over an l_inf box or an l1 ball."""
    J, d = diffs.shape
    if dual is NormKind.LINF:
        c = np.r_[np.zeros(d), -1.0]
        A = np.hstack([-diffs, np.ones((J, 1))])
        bounds = [(-sigma, sigma)] * d + [(None, None)]
        res = linprog(c, A_ub=A, b_ub=values, bounds=bounds, method='highs')
        if res.status != 0:
            logger.warning(f"Hull LP failed: {res.message}")
            return None
        return np.clip(res.x[:d], -sigma, sigma)

    c = np.r_[np.zeros(2 * d), -1.0]
    A = np.vstack([np.hstack([-diffs, diffs, np.ones((J, 1))]),
                   np.r_[np.ones(2 * d), 0.0][None, :]])
    b = np.r_[values, sigma]
    bounds = [(0, None)] * (2 * d) + [(None, None)]
    res = linprog(c, A_ub=A, b_ub=b, bounds=bounds, method='highs')
    if res.status != 0:
        logger.warning(f"Hull LP failed: {res.message}")
        return None
    lam = res.x[:d] - res.x[d:2 * d]
    scale = np.sum(np.abs(lam))
    return lam if scale <= sigma else lam * (sigma / scale)


def _ball_dual(diffs, values, sigma) -> Optional[np.ndarray]:
    """Maximize min_j (v_j + <lam, d_j>) over the Euclidean ball of radius sigma."""
    J, d = diffs.shape
    x0 = np.r_[np.zeros(d), values.min()]
    constraints = [
        {'type': 'ineq',
         'fun': lambda w: values + diffs @ w[:d] - w[d],
         'jac': lambda w: np.hstack([diffs, -np.ones((J, 1))])},
        {'type': 'ineq',
         'fun': lambda w: np.array([sigma * sigma - w[:d] @ w[:d]]),
         'jac': lambda w: np.r_[-2.0 * w[:d], 0.0][None, :]},
    ]
    res = minimize(lambda w: -w[d], x0, jac=lambda w: np.r_[np.zeros(d), -1.0],
                   constraints=constraints, method='SLSQP',
                   options={'ftol': config.HULL_TOLERANCE, 'maxiter': config.HULL_MAX_ITER})
    if not res.success:
        logger.warning(f"Hull SLSQP did not converge: {res.message}")
    lam = res.x[:d]
    norm = np.linalg.norm(lam)
    lam = lam if norm <= sigma else lam * (sigma / norm)
    # fallback: the mean offset from the anchors
    candidates = [lam, np.zeros(d)]
    offset = diffs.mean(axis=0)
    if np.linalg.norm(offset) > 0:
        candidates.append(sigma * offset / np.linalg.norm(offset))
    scores = [np.min(values + diffs @ c) for c in candidates]
    return candidates[int(np.argmax(scores))]


def eval_under(ua: UnderApprox, x) -> float:
    return ua.evaluate(x)


def add_cut_bundle(ua: UnderApprox, cuts: Sequence[ConjugacyCut], weights=None) -> UnderApprox:
    ua.add_bundle(cuts, weights)
    return ua


def eval_over(oa: OverApprox, x) -> float:
    return oa.evaluate(x)


def add_over_point(oa: OverApprox, point: OverPoint) -> OverApprox:
    oa.add_point(point)
    return oa
