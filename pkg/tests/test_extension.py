import math

import numpy as np
import pytest

from frachopf.extension import (
    QuotientCurve,
    cs_extend_at,
    curve_to_csv,
    default_t_grid,
    fit_loglog_slope,
    kernel_mass,
    quotient_curve,
    quotient_limit,
)
from frachopf.fields import box, bump, lincomb, power, torsion, zero
from frachopf.nonlocal_ops import kernel_integral
from frachopf.quad import Estimate
from frachopf.special import FracParams

P1 = FracParams(1, 0.5)


def box_extension(x, t):
    return (math.atan((3 - x) / t) - math.atan((2 - x) / t)) / math.pi


@pytest.mark.parametrize("N", [1, 2])
@pytest.mark.parametrize("s", [0.25, 0.5, 0.75])
@pytest.mark.parametrize("t", [0.01, 0.1, 1.0, 10.0])
def test_kernel_mass_is_one(N, s, t):
    assert kernel_mass(FracParams(N, s), t).value == pytest.approx(1.0, abs=1e-6)


def test_box_closed_form():
    e = cs_extend_at(box(2, 3), [2.5], 0.1, P1)
    assert e.value == pytest.approx(0.8743341, abs=1e-6)
    for x, t in [(0.0, 0.01), (2.0, 0.3), (4.0, 1.0), (2.9, 0.05)]:
        assert cs_extend_at(box(2, 3), [x], t, P1).value == pytest.approx(box_extension(x, t), abs=1e-9)


def test_boundary_continuity():
    assert cs_extend_at(box(2, 3), [2.5], 1e-4, P1).value == pytest.approx(1.0, abs=1e-3)
    assert cs_extend_at(box(2, 3), [2.5], 0.0, P1).value == 1.0


def test_zero_field_extension():
    for t in (1e-3, 0.5, 3.0):
        assert cs_extend_at(zero(1), [0.2], t, P1).value == 0.0


def test_negative_t_rejected():
    with pytest.raises(ValueError):
        cs_extend_at(box(2, 3), [0.0], -1.0, P1)


def test_maximum_principle_random():
    rng = np.random.default_rng(3)
    u = lincomb([1.0, -0.5], [torsion([0.0], 1.0, 0.5), bump([2.0], 0.5)])
    sup = max(abs(u.values(np.linspace(-3, 3, 6001)[:, None])))
    for _ in range(20):
        x, t = rng.uniform(-3, 3), 10 ** rng.uniform(-3, 1)
        assert abs(cs_extend_at(u, [x], t, P1).value) <= sup + 1e-8


def test_extension_linear_in_u():
    u, v = torsion([0.0], 1.0, 0.5), box(2, 3)
    a, b = 1.7, -0.4
    w = lincomb([a, b], [u, v])
    for x, t in [(0.5, 0.1), (1.0, 0.01), (2.2, 1.0)]:
        lhs = cs_extend_at(w, [x], t, P1).value
        rhs = a * cs_extend_at(u, [x], t, P1).value + b * cs_extend_at(v, [x], t, P1).value
        assert lhs == pytest.approx(rhs, abs=1e-9)


def test_n2_extension_of_torsion_is_bounded():
    p = FracParams(2, 0.5)
    u = torsion([0.0, 0.0], 1.0, 0.5)
    val = cs_extend_at(u, [0.0, 0.0], 0.1, p).value
    assert 0 < val < float(u.values(np.zeros((1, 2)))[0])


def test_default_grid():
    g = default_t_grid()
    assert len(g) == 37 and g[0] == pytest.approx(0.1) and g[-1] == pytest.approx(1e-4)
    assert np.all(np.diff(g) < 0)


def test_box_quotient_and_crosscheck():
    curve = quotient_curve(box(2, 3), [0.0], P1)
    i = int(np.argmin(np.abs(np.array(curve.t_values) - 1e-3)))
    assert curve.q_values[i] == pytest.approx(1 / (6 * math.pi), rel=0.01)
    k = kernel_integral(box(2, 3), [0.0], P1)
    lim = quotient_limit(curve, k, P1)
    assert lim.value == pytest.approx(1 / (6 * math.pi), rel=1e-4)
    assert not lim.warning and "pass" in lim.note
    # Monotone approach toward the kernel value.
    q = np.array(curve.q_values)
    assert np.all(np.diff(q) > 0) or np.all(np.diff(q) < 0)


@pytest.mark.parametrize("s", [0.25, 0.5, 0.75])
def test_torsion_quotient_diverges(s):
    p = FracParams(1, s)
    curve = quotient_curve(torsion([0.0], 1.0, s), [1.0], p)
    assert curve.fitted_slope == pytest.approx(-s, abs=0.05)
    assert curve.limit.diverged and curve.limit.divergence_sign == "+inf"


def test_zero_quotient():
    curve = quotient_curve(zero(1), [0.0], P1)
    assert all(q == 0.0 for q in curve.q_values)
    assert math.isnan(curve.fitted_slope)
    assert curve.to_dict()["slope_defined"] is False
    assert curve.limit.value == 0.0


def test_finite_kernel_gives_finite_limit():
    # u ~ d^{3s} at the boundary point: the kernel integral converges and the
    # quotient settles at P times it.
    u = power([0.0], 1.0, 1.5)
    curve = quotient_curve(u, [1.0], P1)
    assert abs(curve.fitted_slope) < 0.1
    k = kernel_integral(u, [1.0], P1, inward=[-1.0])
    assert not k.estimate.diverged
    lim = quotient_limit(curve, k, P1)
    assert lim.value == pytest.approx(k.estimate.value / math.pi, rel=0.02)


def test_quotient_limit_needs_span():
    c = QuotientCurve((1e-1, 1e-2), (1.0, 1.0), (0.0, 0.0), 0.0, Estimate(math.nan))
    with pytest.raises(ValueError):
        quotient_limit(c)


def test_quotient_curve_validation():
    with pytest.raises(ValueError):
        QuotientCurve((1e-2, 1e-1), (1.0, 1.0), (0.0, 0.0), 0.0, Estimate(0.0))


def test_fit_slope():
    xs = np.geomspace(1e-4, 1e-1, 10)
    assert fit_loglog_slope(xs, 3 * xs**-0.4) == pytest.approx(-0.4, abs=1e-12)


def test_curve_csv():
    curve = quotient_curve(box(2, 3), [0.0], P1, t_grid=default_t_grid(1e-1, 1e-3, 4))
    text = curve_to_csv(curve, {"N": 1, "s": 0.5, "x0": [0.0], "field": "box(a=2;b=3)"})
    lines = text.splitlines()
    assert lines[0].startswith("# N=1")
    assert "t,q" in lines
    assert len([ln for ln in lines if not ln.startswith("#")]) == len(curve.t_values) + 1
