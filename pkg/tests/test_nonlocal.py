import math

import numpy as np
import pytest

from frachopf.fields import BallSpec, box, bump, lincomb, power, sup_norm_negative_part, torsion, zero
from frachopf.nonlocal_ops import (
    ball_samples,
    barrier_verify,
    find_barrier_alpha,
    frac_laplacian_at,
    hopf_condition_check,
    kernel_integral,
    tail_lower_bound,
)
from frachopf.quad import power_tail_closed_form
from frachopf.special import FracParams

P1 = FracParams(1, 0.5)


@pytest.mark.parametrize("s", [0.25, 0.5, 0.75])
@pytest.mark.parametrize("x", [0.0, 0.5, -0.9])
def test_torsion_identity_n1(s, x):
    e = frac_laplacian_at(torsion([0.0], 1.0, s), [x], FracParams(1, s))
    assert e.value == pytest.approx(1.0, abs=1e-6)
    assert not e.warning


def test_torsion_identity_n2_off_center():
    u = torsion([0.2, -0.1], 0.7, 0.5)
    e = frac_laplacian_at(u, [0.4, 0.1], FracParams(2, 0.5))
    assert e.value == pytest.approx(1.0, abs=1e-6)


def test_zero_field():
    assert frac_laplacian_at(zero(1), [0.3], P1).value == 0.0


def test_scaling_identity():
    # u(x) = psi(x/2) is 2^{-2s} times the torsion function of B_2.
    u = lincomb([2.0 ** (-1.0)], [torsion([0.0], 2.0, 0.5)])
    assert frac_laplacian_at(u, [0.0], P1).value == pytest.approx(0.5, abs=1e-6)


@pytest.mark.parametrize("s", [0.3, 0.7])
def test_translation_invariance(s):
    p = FracParams(1, s)
    a = frac_laplacian_at(power([0.0], 1.0, 2.0), [0.3], p).value
    b = frac_laplacian_at(power([5.0], 1.0, 2.0), [5.3], p).value
    assert a == pytest.approx(b, rel=1e-9)


def test_c0_field_rejected():
    with pytest.raises(ValueError, match="C0"):
        frac_laplacian_at(box(2, 3), [0.0], P1)


def test_dimension_checks():
    with pytest.raises(ValueError):
        frac_laplacian_at(torsion([0.0], 1, 0.5), [0.0, 0.0], P1)
    with pytest.raises(ValueError):
        frac_laplacian_at(torsion([0.0, 0.0], 1, 0.5), [0.0], P1)


def test_linearity_random():
    rng = np.random.default_rng(7)
    builders = [lambda: torsion([0.0], 1.0, 0.5), lambda: power([0.2], 1.2, 2.0),
                lambda: bump([0.1], 1.5), lambda: power([-0.3], 1.0, 1.0)]
    for _ in range(10):
        i, j = rng.choice(len(builders), 2, replace=False)
        u, v = builders[i](), builders[j]()
        a, b = rng.uniform(-2, 2, size=2)
        x = [float(rng.uniform(-0.5, 0.5))]
        eu, ev = frac_laplacian_at(u, x, P1), frac_laplacian_at(v, x, P1)
        ew = frac_laplacian_at(lincomb([a, b], [u, v]), x, P1)
        tol = 2 * (abs(a) * eu.error_bound + abs(b) * ev.error_bound + ew.error_bound) + 1e-12
        assert abs(ew.value - (a * eu.value + b * ev.value)) <= tol


@pytest.mark.parametrize("p, expected", [(1.0, 4 / math.pi), (2.0, 16 / (3 * math.pi))])
def test_power_closed_forms(p, expected):
    # s = 1/2, N = 1, at 0: 2C * int_0^inf (1 - u(y)) / y^2 dy with C = 1/pi.
    e = frac_laplacian_at(power([0.0], 1.0, p), [0.0], P1)
    assert e.value == pytest.approx(expected, rel=1e-9)


def test_kernel_box():
    k = kernel_integral(box(2, 3), [0.0], P1)
    assert k.estimate.value == pytest.approx(1 / 6, abs=1e-8)
    parts = k.near_cone.value + k.near_rest.value + k.far.value
    assert parts == pytest.approx(k.estimate.value, abs=k.estimate.error_bound + 1e-15)


@pytest.mark.parametrize("s", [0.25, 0.5, 0.75])
def test_kernel_torsion_diverges(s):
    k = kernel_integral(torsion([0.0], 1, s), [1.0], FracParams(1, s), inward=[-1.0])
    assert k.estimate.diverged and k.estimate.divergence_sign == "+inf"
    assert k.near_cone.diverged


def test_kernel_zero():
    k = kernel_integral(zero(1), [0.0], P1)
    assert k.estimate.value == 0.0 and not k.estimate.diverged


def test_kernel_n2_torsion_diverges():
    p = FracParams(2, 0.5)
    k = kernel_integral(torsion([0.0, 0.0], 1, 0.5), [1.0, 0.0], p, inward=[-1.0, 0.0])
    assert k.near_cone.diverged


def test_kernel_to_dict_split():
    d = kernel_integral(box(2, 3), [0.0], P1).to_dict()
    assert set(d["split"]) == {"near_cone", "near_rest", "far"}
    assert d["diverged"] is False


def test_tail_lower_bound_examples():
    neg_box = lincomb([-1.0], [box(2, 3)])
    assert tail_lower_bound(neg_box, 1.0, P1) == pytest.approx(-2.0)
    # N omega_N r^{-2s} / (2s) = 2 / 4 at r = 4.
    assert tail_lower_bound(neg_box, 4.0, P1) == pytest.approx(-0.5)
    assert tail_lower_bound(torsion([0.0], 1, 0.5), 1.0, P1) == 0.0
    with pytest.raises(ValueError):
        tail_lower_bound(neg_box, 0.0, P1)


def test_far_part_respects_tail_bound():
    u = lincomb([1.0, -0.1], [torsion([0.0], 1, 0.5), box(2, 3)])
    k = kernel_integral(u, [1.0], P1, inward=[-1.0])
    bound = -sup_norm_negative_part(u) * power_tail_closed_form(k.split_radius, 0.5, 1)
    assert k.far.value >= bound
    assert tail_lower_bound(u, k.split_radius, P1) == pytest.approx(bound)


def test_ball_samples_deterministic_inside():
    ball = BallSpec((0.5, -0.5), 2.0)
    a, b = ball_samples(ball, 16), ball_samples(ball, 16)
    assert np.array_equal(a, b)
    assert np.all(np.linalg.norm(a - ball.center_array, axis=1) < ball.radius)
    assert np.allclose(a[0], ball.center_array)


def test_hopf_condition_examples():
    ball = BallSpec((0.0,), 1.0)
    ok = hopf_condition_check(box(2, 3), ball, P1)
    assert ok.passed and ok.worst_value >= 0
    z = hopf_condition_check(zero(1), ball, P1)
    assert z.passed and z.worst_value == 0.0
    bad = hopf_condition_check(lincomb([-1.0], [box(2, 3)]), ball, P1)
    assert not bad.passed and bad.worst_value < 0
    # The worst point is the sample closest to the box.
    assert bad.worst_point[0] == max(p[0] for p in bad.points)
    y = bad.worst_point[0]
    exact = -((2 - y) ** -1 - (3 - y) ** -1)
    assert bad.worst_value == pytest.approx(exact, rel=1e-6)


def test_hopf_condition_bad_samples():
    with pytest.raises(ValueError):
        hopf_condition_check(box(2, 3), BallSpec((0.0,), 1.0), P1, y_samples=0)


def test_barrier_alpha_zero_fails():
    ball = BallSpec((0.0,), 1.0)
    res = barrier_verify(ball, bump([3.0], 1.0), 0.0, 0.0, P1)
    assert not res.passed
    assert res.worst_value == pytest.approx(1.0, abs=1e-6)


def test_barrier_search_and_distance_monotonicity():
    ball = BallSpec((0.0,), 1.0)
    res = find_barrier_alpha(ball, bump([3.0], 1.0), 1.0, P1)
    assert res.passed and res.margin >= 0
    far = barrier_verify(ball, bump([30.0], 1.0), res.alpha, 1.0, P1)
    assert far.margin < res.margin


def test_barrier_overlap_rejected():
    with pytest.raises(ValueError):
        barrier_verify(BallSpec((0.0,), 1.0), bump([1.5], 1.0), 1.0, 0.0, P1)
