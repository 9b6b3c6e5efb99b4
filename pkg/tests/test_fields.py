import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from frachopf.fields import (
    FieldSpecError,
    FunctionField,
    SampledField1D,
    Smoothness,
    box,
    bump,
    field_eval,
    lincomb,
    make_field,
    parse_field,
    power,
    read_sampled_csv,
    sampled,
    split_signs,
    sup_norm_negative_part,
    torsion,
    zero,
)
from frachopf.special import FracParams, frac_constants

RNG = np.random.default_rng(12345)


def identity_field():
    return FunctionField(lambda x: x[:, 0].copy(), 1, math.inf, Smoothness.ANALYTIC, "x")


def test_torsion_examples():
    u = torsion([0.0], 1.0, 0.5)
    assert field_eval(u, 0.0) == pytest.approx(1.0)
    assert field_eval(u, 0.6) == pytest.approx(0.8, rel=1e-14)
    assert field_eval(u, 1.2) == 0.0 and field_eval(u, -1.0) == 0.0


@pytest.mark.parametrize("N", [1, 2])
@pytest.mark.parametrize("s", [0.25, 0.5, 0.75])
def test_torsion_formula(N, s):
    c = np.array([0.3] * N)
    u = torsion(c, 1.5, s)
    g = frac_constants(FracParams(N, s)).gamma_ns
    pts = c + RNG.uniform(-1, 1, size=(50, N)) * 1.5 / math.sqrt(N) * 0.99
    ref = g * (1.5**2 - np.sum((pts - c) ** 2, axis=1)) ** s
    assert np.allclose(u.values(pts), ref, rtol=1e-14, atol=0)


def test_box_and_zero():
    b = box(2, 3)
    assert field_eval(b, 2.5) == 1.0 and field_eval(b, 0.0) == 0.0
    assert b.smoothness == Smoothness.C0
    assert field_eval(zero(2), [0.3, 0.1]) == 0.0


def test_bump_at_least_one_on_half_ball():
    f = bump([1.0, -1.0], 2.0)
    pts = np.array([1.0, -1.0]) + RNG.uniform(-1, 1, size=(200, 2)) * 0.7
    inside = np.linalg.norm(pts - [1.0, -1.0], axis=1) <= 1.0
    assert np.all(f.values(pts[inside]) >= 1.0 - 1e-12)
    assert f.smoothness >= Smoothness.C2_INTERIOR


def test_smoothness_tags():
    assert torsion([0.0], 1, 0.5).smoothness == Smoothness.C2_INTERIOR
    assert power([0.0], 1, 2.0).smoothness == Smoothness.C2_INTERIOR
    mix = lincomb([1, 1], [torsion([0.0], 1, 0.5), box(2, 3)])
    assert mix.smoothness == Smoothness.C0
    assert mix.support_radius == 3.0


def test_lincomb_dimension_mismatch():
    with pytest.raises((FieldSpecError, ValueError)):
        lincomb([1, 1], [torsion([0.0], 1, 0.5), torsion([0.0, 0.0], 1, 0.5)])


def test_lincomb_self_linearity():
    f = torsion([0.0], 1, 0.5)
    g = lincomb([2.0, -1.0], [f, f])
    for x in (-0.7, 0.0, 0.3):
        assert field_eval(g, x) == pytest.approx(field_eval(f, x), rel=1e-14)


@pytest.mark.parametrize("builder", [
    lambda: torsion([0.2], 1.0, 0.3),
    lambda: torsion([0.1, -0.2], 0.8, 0.6),
    lambda: power([0.0, 0.0], 1.0, 1.5),
    lambda: bump([0.5], 0.5),
    lambda: box(2, 3),
    lambda: lincomb([1, -0.1], [torsion([0.0], 1, 0.5), box(2, 3)]),
])
def test_zero_outside_support(builder):
    f = builder()
    N, R = f.dimension, f.support_radius
    d = RNG.normal(size=(10, N))
    d /= np.linalg.norm(d, axis=1)[:, None]
    pts = d * (R * RNG.uniform(1.0001, 5.0, size=(10, 1)))
    assert np.all(f.values(pts) == 0.0)


def test_split_signs_examples():
    pos, neg = split_signs(identity_field())
    assert field_eval(pos, 2.0) == 2.0 and field_eval(neg, 2.0) == 0.0
    assert field_eval(pos, -3.0) == 0.0 and field_eval(neg, -3.0) == 3.0


def test_split_signs_identity_on_random_points():
    f = lincomb([1, -0.4], [torsion([0.0], 1, 0.5), power([0.5], 1.0, 1.0)])
    pos, neg = split_signs(f)
    pts = RNG.uniform(-2, 2, size=(1000, 1))
    assert np.all(pos.values(pts) >= 0) and np.all(neg.values(pts) >= 0)
    assert np.allclose(pos.values(pts) - neg.values(pts), f.values(pts), rtol=0, atol=1e-15)


def test_sup_norm_negative_part():
    assert sup_norm_negative_part(torsion([0.0], 1, 0.5)) == 0.0
    f = lincomb([1, -0.1], [torsion([0.0], 1, 0.5), box(2, 3)])
    assert sup_norm_negative_part(f) == pytest.approx(0.1)
    assert sup_norm_negative_part(zero(1)) == 0.0
    with pytest.raises(ValueError):
        sup_norm_negative_part(f, np.empty((0, 1)))


@settings(max_examples=50)
@given(st.floats(-2, 2), st.floats(-2, 2), st.floats(0, 2 * math.pi),
       st.floats(0, 3), st.sampled_from([0.25, 0.5, 0.75]))
def test_ray_values_match_pointwise(ox, oy, th, rho, s):
    f = lincomb([1.0, -0.3], [torsion([0.1, 0.0], 1.0, s), power([0.5, 0.5], 0.7, 1.5)])
    o = np.array([ox, oy])
    e = np.array([math.cos(th), math.sin(th)])
    r = np.array([rho])
    got = f.ray_values(o, e, r)[0]
    ref = f.values((o + rho * e)[None, :])[0]
    assert got == pytest.approx(ref, rel=1e-9, abs=1e-12)


def test_ray_values_accurate_near_boundary():
    # The product form keeps relative accuracy where 1 - |x|^2 cancels.
    f = power([0.0, 0.0], 1.0, 1.0)
    o = np.array([1.0, 0.0])
    theta = math.pi / 2 + 1e-6
    e = np.array([math.cos(theta), math.sin(theta)])
    L = -2 * o @ e
    rho = np.array([L / 2])
    assert f.ray_values(o, e, rho)[0] == pytest.approx(L * L / 4, rel=1e-6)


def test_parse_grammar():
    s = 0.5
    assert field_eval(parse_field("torsion(center=0;r=1)", s), 0.6) == pytest.approx(0.8)
    assert field_eval(parse_field(" box( a = 2 ; b = 3 ) ", s), 2.5) == 1.0
    f = parse_field("lincomb(1*torsion(center=0;r=1)-0.1*box(a=2;b=3))", s)
    assert field_eval(f, 2.5) == pytest.approx(-0.1)
    g = parse_field("lincomb(2.5e-1*power(center=0,0;r=1;p=2)+1e+0*bump(center=3,0;r=1))", s)
    assert g.dimension == 2
    assert field_eval(g, [0.0, 0.0]) == pytest.approx(0.25)
    assert field_eval(parse_field("lincomb()", s), 1.0) == 0.0


@pytest.mark.parametrize("text", [
    "torsion(center=0)", "torsion(center=0;r=1;p=2)", "nope(a=1)", "box(a=2;b=x)",
    "lincomb(torsion(center=0;r=1))", "box(a=2;b=3", "torsion center=0",
])
def test_parse_errors(text):
    with pytest.raises(FieldSpecError):
        parse_field(text, 0.5)


def test_torsion_needs_s():
    with pytest.raises(FieldSpecError):
        parse_field("torsion(center=0;r=1)")


def test_csv_roundtrip(tmp_path):
    p = tmp_path / "u.csv"
    p.write_text("x,value\n0,0\n1,2\n2,0\n")
    f = parse_field(f"csv({p.name})", base_dir=tmp_path)
    assert field_eval(f, 0.5) == pytest.approx(1.0)
    assert field_eval(f, 3.0) == 0.0 and f.smoothness == Smoothness.C0
    assert make_field(read_sampled_csv(p)).dimension == 1


@pytest.mark.parametrize("body, line", [
    ("x,value\n0,0\n1,abc\n", 3),
    ("x,value\n0,0\n1,1,1\n", 3),
    ("x,value\n0,0\n2,1\n1,1\n", 4),
    ("a,b\n0,0\n1,1\n", 1),
])
def test_csv_errors_report_line(tmp_path, body, line):
    p = tmp_path / "bad.csv"
    p.write_text(body)
    with pytest.raises(FieldSpecError, match=f":{line}:"):
        read_sampled_csv(p)


def test_csv_missing_file(tmp_path):
    with pytest.raises(FieldSpecError):
        read_sampled_csv(tmp_path / "missing.csv")


def test_sampled_validation():
    with pytest.raises(FieldSpecError):
        SampledField1D((0.0, 0.0), (1.0, 2.0))
    with pytest.raises(FieldSpecError):
        SampledField1D((0.0, 1.0), (1.0,))
    f = sampled(SampledField1D((0.0, 1.0), (1.0, 3.0)))
    assert field_eval(f, 0.25) == pytest.approx(1.5)


def test_field_eval_dimension_mismatch():
    with pytest.raises(ValueError):
        field_eval(torsion([0.0, 0.0], 1, 0.5), [0.0])
