import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from frachopf.quad import (
    Estimate,
    QuadSpec,
    divergence_probe,
    integrate_halfline,
    integrate_interval,
    integrate_polar,
    integrate_radial,
    power_tail_closed_form,
    sum_estimates,
)


def test_interval_examples():
    assert integrate_interval(lambda x: x**2, 0, 1).value == pytest.approx(1 / 3, rel=1e-10)
    assert integrate_interval(lambda y: y**-2.0, 2, 3).value == pytest.approx(1 / 6, rel=1e-10)
    e = integrate_interval(lambda r: r**-0.5, 0, 1)
    assert e.value == pytest.approx(2.0, rel=1e-8)
    assert e.converged


@settings(max_examples=20)
@given(st.lists(st.floats(-5, 5), min_size=1, max_size=6), st.floats(-3, 3), st.floats(0.1, 4))
def test_random_polynomials(coefs, a, width):
    b = a + width
    p = np.polynomial.Polynomial(coefs)
    exact = p.integ()(b) - p.integ()(a)
    got = integrate_interval(lambda x: p(x), a, b).value
    assert abs(got - exact) <= 1e-8 * max(abs(exact), 1.0)


def test_interval_bad_bounds():
    with pytest.raises(ValueError):
        integrate_interval(lambda x: x, 1, 0)
    assert integrate_interval(lambda x: x, 1, 1).value == 0.0


def test_budget_exhaustion_warns():
    e = integrate_interval(lambda x: np.sin(1 / x) / x, 0, 1, QuadSpec(max_subdivisions=20))
    assert e.warning and not e.converged


def test_halfline_with_tail():
    e = integrate_halfline(lambda y: y**-2.0, 1.0, tail=lambda T: 1 / T)
    assert e.value == pytest.approx(1.0, rel=1e-9)


def test_halfline_without_tail_bounds_error():
    e = integrate_halfline(lambda y: y**-2.0, 1.0, QuadSpec(truncation_radius=1e3))
    assert e.value == pytest.approx(1.0 - 1e-3, rel=1e-9)
    assert e.error_bound >= 1e-3 * 0.99


def test_halfline_explicit_upper_is_plain_interval():
    e = integrate_halfline(lambda y: y**-2.0, 1.0, upper=10.0)
    assert e.value == pytest.approx(0.9, rel=1e-10)


@pytest.mark.parametrize("R, s, N, expected", [(1, 0.5, 1, 2.0), (2, 0.5, 1, 1.0), (1, 0.25, 1, 4.0)])
def test_power_tail_examples(R, s, N, expected):
    assert power_tail_closed_form(R, s, N) == pytest.approx(expected, rel=1e-15)


def test_radial_examples():
    e1 = integrate_radial(lambda p: np.linalg.norm(p, axis=1) ** -2.0, 1, 1.0, envelope=(1.0, 0.5))
    assert e1.value == pytest.approx(2.0, rel=1e-8)
    e2 = integrate_radial(lambda p: np.linalg.norm(p, axis=1) ** -3.0, 2, 1.0, envelope=(1.0, 0.5))
    assert e2.value == pytest.approx(2 * math.pi, rel=1e-8)
    e0 = integrate_radial(lambda p: np.zeros(len(p)), 2, 1.0)
    assert e0.value == 0.0


@pytest.mark.parametrize("N", [1, 2])
@pytest.mark.parametrize("s", [0.25, 0.5, 0.75])
def test_tail_matches_radial(N, s):
    R = 1.7
    f = lambda p: np.linalg.norm(p, axis=1) ** (-N - 2 * s)  # noqa: E731
    e = integrate_radial(f, N, R, envelope=(1.0, s))
    assert e.value == pytest.approx(power_tail_closed_form(R, s, N), rel=1e-6)


def test_polar_propagates_divergence():
    e = integrate_polar(lambda th: Estimate.divergent("+inf"), 0.0, 1.0)
    assert e.diverged and e.divergence_sign == "+inf"
    e = integrate_polar(lambda th: Estimate(math.cos(th)), 0.0, math.pi / 2)
    assert e.value == pytest.approx(1.0, rel=1e-10)


def test_probe_examples():
    assert divergence_probe(lambda r: r**-1.5, 1.0).diverged
    e = divergence_probe(lambda r: r**-0.5, 1.0)
    assert not e.diverged and e.value == pytest.approx(2.0, rel=1e-6)
    z = divergence_probe(lambda r: np.zeros_like(r), 1.0)
    assert z.value == 0.0 and not z.diverged


@pytest.mark.parametrize("p", [1.0, 1.2, 1.5, 2.0])
def test_probe_diverges_for_p_ge_1(p):
    e = divergence_probe(lambda r: r**-p, 1.0)
    assert e.diverged and e.divergence_sign == "+inf"


@pytest.mark.parametrize("p", [0.0, 0.3, 0.6, 0.9])
def test_probe_converges_for_p_le_09(p):
    e = divergence_probe(lambda r: r**-p, 1.0)
    assert not e.diverged
    assert e.value == pytest.approx(1 / (1 - p), rel=1e-4)


def test_probe_negative_divergence():
    e = divergence_probe(lambda r: -(r**-1.5), 1.0)
    assert e.diverged and e.divergence_sign == "-inf"


def test_estimate_scaling_and_sum():
    d = Estimate.divergent("+inf")
    assert d.scaled(-2).divergence_sign == "-inf"
    assert d.scaled(0).value == 0.0
    s = sum_estimates([Estimate(1.0, 0.1), Estimate(2.0, 0.2)])
    assert s.value == 3.0 and s.error_bound == pytest.approx(0.3)
    assert sum_estimates([Estimate(1.0), d]).diverged


def test_estimate_json_has_no_bare_inf():
    import json

    json.dumps(Estimate.divergent("+inf").to_dict(), allow_nan=False)


@pytest.mark.parametrize("kw", [{"rel_tol": 0}, {"rel_tol": 1.0}, {"abs_tol": -1},
                                {"max_subdivisions": 0}, {"truncation_radius": 0}])
def test_quadspec_validation(kw):
    with pytest.raises(ValueError):
        QuadSpec(**kw)
