import itertools
import math

import pytest

from msddp.bounds import (BoundParams, cap_count_bound, convex_lower_bound, covering_count, evaluate_bounds,
                          sampling_success, stochastic_tail_log10)
from msddp.errors import BadParams


def test_spot_values():
    report = evaluate_bounds(BoundParams(eps=1.0, T=2, d=2, D=1.0, L=1.0, K=3))
    assert report.stagewise_gap.value == pytest.approx(18.0)
    assert report.absolute_gap.value == pytest.approx(2.0 * 25.0)
    assert report.finite_state == 6.0
    assert report.lipschitz_lower.value == pytest.approx(0.25)
    assert report.convex_lower is None
    assert sampling_success(3, 1) == pytest.approx(1.0 / 3.0)
    assert sampling_success(1, 5) == 1.0


def test_covering_uses_stage_deltas():
    p = BoundParams(eps=1.0, T=2, d=1, D=1.0, L=1.0)
    assert covering_count(p).value == pytest.approx(10.0)
    q = BoundParams(eps=1.0, T=2, d=1, D=1.0, L=1.0, deltas=[1.0, 0.25])
    assert covering_count(q).value == pytest.approx(3.0 + 9.0)


def test_convex_lower_bound():
    assert convex_lower_bound(BoundParams(eps=1.0, T=2, d=3, D=8.0, L=1.0)).value == pytest.approx(2.0 / 3.0)
    assert convex_lower_bound(BoundParams(eps=1.0, T=1, d=3, D=8.0, L=1.0)) is None


def test_cap_count_bound():
    assert cap_count_bound(2, 1.0, 0.02) == pytest.approx(10.0)
    with pytest.raises(BadParams):
        cap_count_bound(1, 1.0, 0.02)


def test_huge_values_in_log10():
    report = evaluate_bounds(BoundParams(eps=1e-3, T=1, d=50, D=1.0, L=1.0))
    assert report.stagewise_gap.in_log10
    assert report.stagewise_gap.log10 == pytest.approx(50 * math.log10(2001.0))
    assert report.stagewise_gap.reported == report.stagewise_gap.log10
    assert report.to_record()['stagewise_gap']['value'] is None


def test_stochastic_tail():
    assert stochastic_tail_log10(1.0, 1.0, 1.0) == 0.0
    assert stochastic_tail_log10(10.0, 0.5, 4.0) < stochastic_tail_log10(5.0, 0.5, 4.0) < 0.0


def test_closed_form_spot_values():
    assert evaluate_bounds(BoundParams(eps=0.5, T=2, d=1, D=1.0, L=1.0)).absolute_gap.value == 18.0
    assert evaluate_bounds(BoundParams(eps=0.5, T=4, d=1, D=1.0, L=1.0)).lipschitz_lower.value == 2.0
    assert evaluate_bounds(BoundParams(eps=0.5, T=1, d=1, D=1.0, L=1.0, N=3, M=1)).sampling_success == \
        pytest.approx(1.0 / 3.0)


LATTICE = {'eps': [0.5, 0.1, 0.01], 'T': [1, 2, 4], 'd': [1, 2, 3], 'D': [1.0, 2.0, 4.0], 'L': [0.5, 1.0, 2.0]}


@pytest.mark.parametrize('bound', ['absolute_gap', 'stagewise_gap'])
def test_monotone_in_parameters(bound):
    keys = list(LATTICE)
    values = {}
    for point in itertools.product(*LATTICE.values()):
        report = evaluate_bounds(BoundParams(**dict(zip(keys, point))))
        values[point] = getattr(report, bound).log10
    # every axis is ordered so that the bound grows along it
    for point, v in values.items():
        for axis, key in enumerate(keys):
            i = LATTICE[key].index(point[axis])
            if i + 1 < len(LATTICE[key]):
                nxt = list(point)
                nxt[axis] = LATTICE[key][i + 1]
                assert values[tuple(nxt)] >= v - 1e-12


def test_lipschitz_lower_monotone():
    base = dict(eps=0.1, T=2, d=2, D=1.0, L=1.0)

    def lower(**changes):
        return evaluate_bounds(BoundParams(**{**base, **changes})).lipschitz_lower.log10

    assert lower(T=4) > lower() > lower(T=1)
    assert lower(L=2.0) > lower() > lower(L=0.5)
    assert lower(D=2.0) > lower()
    assert lower(eps=0.05) > lower()


def test_bad_params():
    with pytest.raises(BadParams):
        BoundParams(eps=0.0, T=1, d=1, D=1.0, L=1.0)
    with pytest.raises(BadParams):
        BoundParams(eps=1.0, T=2, d=1, D=1.0, L=1.0, deltas=[1.0])
    with pytest.raises(BadParams):
        BoundParams(eps=1.0, T=1, d=1, D=1.0, L=1.0, K=0)
