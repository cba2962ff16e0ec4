"""Closed-form iteration complexity bounds.

Values are computed in log10 and materialized only when they stay below
``config.LOG10_THRESHOLD``; larger ones are reported as their log10.
"""
import logging
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.special import gammaln, logsumexp

from . import config
from .errors import BadParams

logger = logging.getLogger(__name__)

_LOG10_LIMIT = math.log10(config.LOG10_THRESHOLD)


@dataclass(frozen=True)
class BoundValue:
    """A bound with its log10; ``value`` is None when it exceeds the threshold."""
    value: Optional[float]
    log10: float

    @property
    def in_log10(self) -> bool:
        return self.value is None

    @property
    def reported(self) -> float:
        return self.log10 if self.value is None else self.value

    def to_record(self) -> dict:
        return {'value': self.value, 'log10': self.log10}


def _from_log10(log10: float, exact) -> BoundValue:
    if log10 > _LOG10_LIMIT:
        return BoundValue(None, log10)
    return BoundValue(float(exact()), log10)


def _scaled_power(factor: float, base: float, exponent: float) -> BoundValue:
    """factor * base ** exponent."""
    if factor == 0 or base == 0:
        return BoundValue(0.0, -math.inf)
    log10 = math.log10(factor) + exponent * math.log10(base)
    return _from_log10(log10, lambda: factor * base ** exponent)


def cap_count_bound(d: int, radius: float, beta: float) -> float:
    """Guaranteed size of a maximal cap packing of depth ``beta`` on the d-sphere."""
    if d < 2 or radius <= 0 or beta <= 0:
        raise BadParams("cap packing bound needs d >= 2 and positive radius and depth")
    log = (math.log((d * d - 1) * math.sqrt(math.pi) / d) + gammaln(d / 2 + 1) - gammaln(d / 2 + 1.5)
           + (d - 1) / 2 * math.log(radius / (2 * beta)))
    return float(math.exp(log))


@dataclass(frozen=True)
class BoundParams:
    eps: float
    T: int
    d: int
    D: float
    L: float
    K: Optional[int] = None
    deltas: Optional[Sequence[float]] = None
    M: int = 1
    N: int = 1
    kappa: float = 2.0

    def __post_init__(self):
        if not (self.eps > 0 and self.D > 0 and self.L > 0):
            raise BadParams("eps, D and L must be positive")
        if self.T < 1 or self.d < 1 or self.M < 1 or self.N < 1:
            raise BadParams("T, d, M and N must be at least 1")
        if self.K is not None and self.K < 1:
            raise BadParams("K must be at least 1")
        if self.kappa <= 0:
            raise BadParams("kappa must be positive")
        if self.deltas is not None:
            if len(self.deltas) != self.T or any(dt <= 0 for dt in self.deltas):
                raise BadParams("deltas need one positive value per stage 0..T-1")

    @property
    def stage_deltas(self) -> np.ndarray:
        if self.deltas is None:
            return np.full(self.T, self.eps / self.T)
        return np.asarray(self.deltas, dtype=float)


@dataclass(frozen=True)
class BoundReport:
    params: BoundParams
    absolute_gap: BoundValue         # eps-optimal root solution
    stagewise_gap: BoundValue        # (T eps)-optimal root solution
    finite_state: Optional[float]    # T K
    covering: BoundValue             # sum over stages of single-ball covering counts
    sampling_success: float          # nu
    stochastic_tail_log10: float     # log10 of the tail probability at kappa
    lipschitz_lower: BoundValue
    convex_lower: Optional[BoundValue]

    def to_record(self) -> dict:
        p = self.params
        return {
            'params': {'eps': p.eps, 'T': p.T, 'd': p.d, 'D': p.D, 'L': p.L, 'K': p.K,
                       'deltas': p.stage_deltas.tolist(), 'M': p.M, 'N': p.N, 'kappa': p.kappa},
            'absolute_gap': self.absolute_gap.to_record(),
            'stagewise_gap': self.stagewise_gap.to_record(),
            'finite_state': self.finite_state,
            'covering': self.covering.to_record(),
            'sampling_success': self.sampling_success,
            'stochastic_tail_log10': self.stochastic_tail_log10,
            'lipschitz_lower': self.lipschitz_lower.to_record(),
            'convex_lower': None if self.convex_lower is None else self.convex_lower.to_record(),
        }


def covering_count(p: BoundParams) -> BoundValue:
    """Sum over stages of (1 + 2 L D / delta_t) ** d."""
    bases = 1.0 + 2.0 * p.L * p.D / p.stage_deltas
    log10 = float(logsumexp(p.d * np.log(bases)) / math.log(10))
    return _from_log10(log10, lambda: float(np.sum(bases ** p.d)))


def sampling_success(N: int, M: int) -> float:
    """Probability that M uniform samples hit a given one of N templates."""
    return 1.0 - (1.0 - 1.0 / N) ** M


def stochastic_tail_log10(I: float, nu: float, kappa: float) -> float:
    """log10 of nu^-I * exp(-2 I nu (kappa - 1)^2 / kappa)."""
    return -I * math.log10(nu) - 2.0 * I * nu * (kappa - 1) ** 2 / kappa / math.log(10)


def convex_lower_bound(p: BoundParams) -> Optional[BoundValue]:
    if p.d < 3 or p.T < 2:
        return None
    d = p.d
    factor = d * (d - 2) * math.sqrt(math.pi) / (d - 1) * math.exp(gammaln(d / 2 + 0.5) - gammaln(d / 2 + 1)) / 3
    return _scaled_power(factor, p.D * p.L * (p.T - 1) / (8 * p.eps), (d - 2) / 2)


def evaluate_bounds(params: BoundParams) -> BoundReport:
    p = params
    covering = covering_count(p)
    nu = sampling_success(p.N, p.M)
    I = covering.value if covering.value is not None else 10.0 ** min(covering.log10, 300.0)
    report = BoundReport(
        params=p,
        absolute_gap=_scaled_power(p.T, 1.0 + 2.0 * p.L * p.D * p.T / p.eps, p.d),
        stagewise_gap=_scaled_power(p.T, 1.0 + 2.0 * p.L * p.D / p.eps, p.d),
        finite_state=None if p.K is None else float(p.T * p.K),
        covering=covering,
        sampling_success=nu,
        stochastic_tail_log10=stochastic_tail_log10(I, nu, p.kappa),
        lipschitz_lower=_scaled_power(1.0, p.D * p.L * p.T / (4 * p.eps), p.d),
        convex_lower=convex_lower_bound(p),
    )
    logger.debug(f"Evaluated bounds for T={p.T}, d={p.d}, eps={p.eps}")
    return report
