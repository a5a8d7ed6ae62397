import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.integrate import quad

from unhinged_dynamics import schedules

rates = st.floats(1e-3, 2.0)
ratios = st.floats(0.01, 10.0)
times = st.floats(0.0, 200.0)


def all_kinds(eta, s):
    return [schedules.constant(eta, s), schedules.cosine_annealing(eta, 50.0, s),
            schedules.piecewise_table((eta, eta / 2, eta / 10), (20.0, 60.0), s)]


def test_examples():
    c = schedules.constant(0.1)
    assert c.eta(1, 7.0) == c.eta(2, 7.0) == 0.1
    assert c.zeta(2, 10.0) == pytest.approx(1.0)
    cos = schedules.cosine_annealing(0.1, 100.0)
    assert cos.eta(2, 100.0) == pytest.approx(0.0, abs=1e-18)
    assert cos.eta(2, 50.0) == pytest.approx(0.05)
    assert cos.zeta(2, 100.0) == pytest.approx(5.0)
    assert cos.eta(2, 150.0) == 0.0
    assert cos.zeta(2, 150.0) == pytest.approx(5.0)
    for sc in all_kinds(0.3, 2.0):
        assert sc.zeta(1, 0.0) == sc.zeta(2, 0.0) == 0.0


def test_rescaled_eta():
    c = schedules.constant(0.1)
    assert schedules.rescaled_eta(c, 3.0, 1.0) == 0.1
    assert schedules.rescaled_eta(c, 3.0, 4.0) == pytest.approx(0.4)
    with pytest.raises(ValueError):
        schedules.rescaled_eta(c, 3.0, 0.0)


@given(rates, ratios, times)
def test_zeta_ratio_is_s(eta, s, t):
    for sc in all_kinds(eta, s):
        assert sc.zeta(1, t) == pytest.approx(s * sc.zeta(2, t), rel=1e-14, abs=1e-300)
        assert sc.eta(1, t) == pytest.approx(s * sc.eta(2, t), rel=1e-14, abs=1e-300)


@given(rates, times)
def test_zeta_matches_quadrature(eta, t):
    for sc in all_kinds(eta, 1.0):
        ref, _ = quad(lambda u: sc.eta(2, u), 0.0, t, points=[20.0, 50.0, 60.0] if t > 0 else None,
                      limit=200, epsabs=1e-13, epsrel=1e-12)
        assert sc.zeta(2, t) == pytest.approx(ref, rel=1e-9, abs=1e-11)


@given(rates, st.floats(0.0, 100.0))
def test_zeta_is_antiderivative(eta, t):
    delta = 1e-3
    for sc in all_kinds(eta, 1.0):
        if sc.kind == "piecewise_table" and any(b - delta <= t <= b for b in sc.breakpoints):
            continue
        bound = eta * math.pi / 50.0 * delta ** 2 / 2 if sc.kind == "cosine_annealing" else 0.0
        hi = sc.zeta(2, t + delta)
        err = abs(hi - sc.zeta(2, t) - sc.eta(2, t) * delta)
        # the difference of two zeta values carries their rounding error
        assert err <= bound + 8 * np.finfo(float).eps * max(1.0, hi)


def test_piecewise_table_sums_segments():
    sc = schedules.piecewise_table((0.3, 0.1, 0.05), (5.0, 12.0))
    assert sc.eta(2, 4.99) == 0.3 and sc.eta(2, 5.0) == 0.1 and sc.eta(2, 30.0) == 0.05
    assert sc.zeta(2, 20.0) == pytest.approx(0.3 * 5 + 0.1 * 7 + 0.05 * 8)


@pytest.mark.parametrize("kind,values,bps", [
    ("constant", (0.1, 0.2), ()),
    ("cosine_annealing", (0.1,), (0.0,)),
    ("piecewise_table", (0.1, 0.2), ()),
    ("piecewise_table", (0.1, 0.2, 0.3), (5.0, 2.0)),
    ("constant", (-0.1,), ()),
    ("linear", (0.1,), ()),
])
def test_invalid_schedules(kind, values, bps):
    with pytest.raises(ValueError):
        schedules.Schedule(kind, values, bps)


def test_invalid_queries():
    c = schedules.constant(0.1)
    with pytest.raises(ValueError):
        c.eta(3, 1.0)
    with pytest.raises(ValueError):
        c.zeta(1, -1.0)
    with pytest.raises(ValueError):
        schedules.constant(0.1, s=0.0)


def test_proportional_pair():
    pair = schedules.proportional_pair(schedules.cosine_annealing(0.05, 10.0),
                                       schedules.cosine_annealing(0.1, 10.0))
    assert pair.s == pytest.approx(0.5)
    assert pair.eta(1, 3.0) == pytest.approx(schedules.cosine_annealing(0.05, 10.0).eta(2, 3.0))
    with pytest.raises(ValueError):
        schedules.proportional_pair(schedules.constant(0.1), schedules.cosine_annealing(0.1, 10.0))
    with pytest.raises(ValueError):
        schedules.proportional_pair(schedules.piecewise_table((0.1, 0.2), (3.0,)),
                                    schedules.piecewise_table((0.1, 0.1), (3.0,)))
