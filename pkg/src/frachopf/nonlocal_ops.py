"""Pointwise fractional Laplacian and the kernel integrals built on it.

The pointwise operator uses the second-difference form

    (-Delta)^s u(x) = C_{N,s}/2 * int (2u(x) - u(x+y) - u(x-y)) / |y|^{N+2s} dy,

which is an ordinary integral for fields that are C^2 near ``x``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np
from scipy.stats import qmc

from ._parallel import pmap
from .fields import BallSpec, FunctionField, Smoothness, lincomb, sup_norm_negative_part, torsion
from .quad import (
    Estimate,
    QuadSpec,
    divergence_probe,
    integrate_halfline,
    integrate_interval,
    integrate_polar,
    power_tail_closed_form,
    sum_estimates,
)
from .special import FracParams, frac_constants

__all__ = [
    "KernelIntegralResult",
    "HopfConditionResult",
    "BarrierResult",
    "frac_laplacian_at",
    "ray_integral",
    "kernel_integral",
    "tail_lower_bound",
    "hopf_condition_check",
    "barrier_verify",
    "find_barrier_alpha",
    "ball_samples",
]


def _unit(theta: float) -> np.ndarray:
    return np.array([math.cos(theta), math.sin(theta)])


def _check_dim(u: FunctionField, params: FracParams):
    if u.dimension != params.N:
        raise ValueError(f"field lives on R^{u.dimension} but params have N={params.N}")
    if params.N not in (1, 2):
        raise ValueError("quadrature-based operators support N in {1, 2}")


def ray_integral(u: FunctionField, origin, direction, weight, lo: float, hi: Optional[float],
                 spec: QuadSpec) -> Estimate:
    """``int_lo^hi u(origin + rho e) weight(rho) drho`` with kinks as breakpoints.

    ``hi=None`` integrates to the end of the support along the ray.
    """
    o = np.asarray(origin, dtype=float)
    e = np.asarray(direction, dtype=float)
    end = u.ray_extent(o, e)
    hi = end if hi is None else min(hi, end)
    if not hi > lo:
        return Estimate(0.0)
    pts = [t for t in u.ray_kinks(o, e) if lo < t < hi]

    def g(rho):
        return u.ray_values(o, e, rho) * weight(rho)

    if math.isinf(hi):
        return integrate_halfline(g, lo, spec, points=pts)
    return integrate_interval(g, lo, hi, spec, points=pts)


def frac_laplacian_at(u: FunctionField, x, params: FracParams, spec: Optional[QuadSpec] = None,
                      constant: Optional[float] = None) -> Estimate:
    """``(-Delta)^s u(x)`` for a field that is C^2 near ``x``.

    ``constant`` overrides the normalizing constant (used to compare
    conventions).
    """
    spec = spec or QuadSpec()
    _check_dim(u, params)
    if u.smoothness < Smoothness.C2_INTERIOR:
        raise ValueError(
            f"field {u.spec} is tagged C0; the second-difference integrand needs C^2 "
            "regularity near the evaluation point")
    s = params.s
    C = frac_constants(params).c_ns if constant is None else float(constant)
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if x.shape != (params.N,):
        raise ValueError(f"point of shape {x.shape} for N={params.N}")
    ux = float(u.values(x[None, :])[0])

    def inner(e: np.ndarray, sub: QuadSpec) -> Estimate:
        Y = max(u.ray_extent(x, e), u.ray_extent(x, -e))
        if not math.isfinite(Y):
            Y = sub.truncation_radius
        pts = sorted(set(u.ray_kinks(x, e)) | set(u.ray_kinks(x, -e)))
        pts = [t for t in pts if 0 < t < Y]

        def g(rho):
            plus = u.ray_values(x, e, rho)
            minus = u.ray_values(x, -e, rho)
            return (2.0 * ux - plus - minus) * rho ** (-1.0 - 2.0 * s)

        tail = 2.0 * ux * Y ** (-2.0 * s) / (2.0 * s) if Y > 0 else 0.0
        if Y <= 0:
            if ux != 0:
                return Estimate.divergent("+inf" if ux > 0 else "-inf")
            return Estimate(0.0)
        # Below y0 the second difference is dominated by rounding; replace it
        # by its even Taylor model D(y) = a y^2 + b y^4 fitted at y0 and 2 y0.
        y0 = 1e-3 * min(pts + [Y])
        d1, d2 = g(np.array([y0, 2.0 * y0])) * np.array([y0, 2.0 * y0]) ** (1.0 + 2.0 * s)
        b = (d2 - 4.0 * d1) / (12.0 * y0**4)
        a = (d1 - b * y0**4) / y0**2
        core = float(a) * y0 ** (2.0 - 2.0 * s) / (2.0 - 2.0 * s) + float(b) * y0 ** (4.0 - 2.0 * s) / (4.0 - 2.0 * s)
        est = integrate_interval(g, y0, Y, sub, points=pts)
        return replace(est, value=est.value + tail + core)

    if params.N == 1:
        est = inner(np.array([1.0]), spec)
    else:
        sub = spec.tightened(0.1)
        angles = u.angle_kinks(x, 0.0, math.pi) + u.angle_kinks(x, -math.pi, 0.0)
        angles = sorted({a + math.pi if a < 0 else a for a in angles} - {0.0})
        est = integrate_polar(lambda th: inner(_unit(th), sub), 0.0, math.pi, spec,
                              points=angles)
    return est.scaled(C)


@dataclass(frozen=True)
class KernelIntegralResult:
    """``int u(x) / |x0 - x|^{N+2s} dx`` with its three-way split.

    ``near_cone`` covers ``B_r(x0)`` inside the cone around ``inward``,
    ``near_rest`` the rest of ``B_r(x0)``, ``far`` the complement of the ball.
    """

    estimate: Estimate
    near_cone: Estimate
    near_rest: Estimate
    far: Estimate
    split_radius: float
    beta: float
    inward: tuple = field(default=())

    def to_dict(self) -> dict:
        return {
            "value": self.estimate.to_dict()["value"],
            "diverged": self.estimate.diverged,
            "estimate": self.estimate.to_dict(),
            "split": {
                "near_cone": self.near_cone.to_dict(),
                "near_rest": self.near_rest.to_dict(),
                "far": self.far.to_dict(),
            },
            "split_radius": self.split_radius,
            "beta": self.beta,
            "inward": list(self.inward),
        }


def kernel_integral(u: FunctionField, x0, params: FracParams, spec: Optional[QuadSpec] = None,
                    inward=None, beta: float = math.pi / 4, split_radius: float = 0.5
                    ) -> KernelIntegralResult:
    """``int_{R^N} u(x) / |x0 - x|^{N+2s} dx``, possibly ``+inf``.

    The two near parts are evaluated with the dyadic divergence probe at
    ``x0``; the far part is a regular integral. ``inward`` defaults to the
    first coordinate axis.
    """
    spec = spec or QuadSpec()
    _check_dim(u, params)
    N, s = params.N, params.s
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    if inward is None:
        inward = np.eye(N)[0]
    inward = np.asarray(inward, dtype=float)
    inward = inward / np.linalg.norm(inward)
    r = float(split_radius)
    w = lambda rho: rho ** (-1.0 - 2.0 * s)  # noqa: E731
    sub = spec.tightened(0.1)

    if N == 1:
        e = inward

        def cone_shell(lo, hi):
            return ray_integral(u, x0, e, w, lo, hi, sub)

        def rest_shell(lo, hi):
            return ray_integral(u, x0, -e, w, lo, hi, sub)

        far = sum_estimates([ray_integral(u, x0, e, w, r, None, spec),
                             ray_integral(u, x0, -e, w, r, None, spec)])
    else:
        phi = math.atan2(inward[1], inward[0])
        w2 = lambda rho: rho ** (-2.0 * s - 1.0)  # noqa: E731  (|y|^{-2-2s} * rho)
        sub2 = spec.tightened(0.01)

        def sector(a, b, lo, hi, qs):
            return integrate_polar(
                lambda th: ray_integral(u, x0, _unit(th), w2, lo, hi, sub2), a, b, qs,
                points=u.angle_kinks(x0, a, b))

        def cone_shell(lo, hi):
            return sector(phi - beta, phi + beta, lo, hi, sub)

        def rest_shell(lo, hi):
            return sector(phi + beta, phi + 2 * math.pi - beta, lo, hi, sub)

        far = integrate_polar(lambda th: ray_integral(u, x0, _unit(th), w2, r, None, sub),
                              0.0, 2 * math.pi, spec, points=u.angle_kinks(x0, 0.0, 2 * math.pi))

    near_cone = divergence_probe(None, r, spec, shell=cone_shell)
    near_rest = divergence_probe(None, r, spec, shell=rest_shell)
    total = sum_estimates([near_cone, near_rest, far])
    return KernelIntegralResult(total, near_cone, near_rest, far, r, float(beta),
                                tuple(float(v) for v in inward))


def tail_lower_bound(u: FunctionField, r: float, params: FracParams, probe=None) -> float:
    """Lower bound for the far part of :func:`kernel_integral` outside ``B_r``:
    ``-sup(u^-) * N omega_N r^{-2s} / (2s)``."""
    if not r > 0:
        raise ValueError("r must be positive")
    neg = sup_norm_negative_part(u, probe)
    if neg == 0.0:
        return 0.0
    return -neg * power_tail_closed_form(r, params.s, params.N)


def ball_samples(ball: BallSpec, count: int, shrink: float = 0.95) -> np.ndarray:
    """Deterministic sample of points in ``ball``: the center, the ``2N``
    axis points at ``shrink * radius``, then unscrambled Halton points inside
    the shrunken ball."""
    if count < 1:
        raise ValueError("need at least one sample")
    N = ball.dimension
    c = ball.center_array
    rr = shrink * ball.radius
    fixed = [c]
    for i in range(N):
        for sgn in (1.0, -1.0):
            fixed.append(c + sgn * rr * np.eye(N)[i])
    pts = fixed[:count]
    extra = count - len(pts)
    if extra > 0:
        h = qmc.Halton(d=N, scramble=False).random(extra + 1)[1:]
        if N == 1:
            pts.extend(c + rr * (2.0 * h[:, 0:1] - 1.0))
        else:
            rad = rr * np.sqrt(h[:, 0])
            ang = 2 * math.pi * h[:, 1]
            pts.extend(c + np.stack([rad * np.cos(ang), rad * np.sin(ang)], axis=1))
    return np.array(pts, dtype=float).reshape(count, N)


@dataclass(frozen=True)
class HopfConditionResult:
    passed: bool
    worst_value: float
    worst_point: tuple
    values: tuple
    points: tuple
    note: str = ""

    def to_dict(self) -> dict:
        return {
            "passed": self.passed,
            "worst_value": self.worst_value,
            "worst_point": list(self.worst_point),
            "samples": [{"y": list(p), "value": v} for p, v in zip(self.points, self.values)],
            "note": self.note,
        }


def exterior_kernel_integral(g: FunctionField, ball: BallSpec, y, params: FracParams,
                             spec: QuadSpec) -> Estimate:
    """``int_{R^N minus ball} g(x) / |x - y|^{N+2s} dx`` for ``y`` inside the ball."""
    s = params.s
    y = np.asarray(y, dtype=float)
    c = ball.center_array
    if params.N == 1:
        w = lambda rho: rho ** (-1.0 - 2.0 * s)  # noqa: E731
        right = c[0] + ball.radius - y[0]
        left = y[0] - (c[0] - ball.radius)
        return sum_estimates([ray_integral(g, y, np.array([1.0]), w, right, None, spec),
                              ray_integral(g, y, np.array([-1.0]), w, left, None, spec)])
    w2 = lambda rho: rho ** (-1.0 - 2.0 * s)  # noqa: E731
    sub = spec.tightened(0.1)

    def ray(th):
        e = _unit(th)
        d = y - c
        b = float(d @ e)
        exit_t = -b + math.sqrt(max(b * b - float(d @ d) + ball.radius**2, 0.0))
        return ray_integral(g, y, e, w2, exit_t, None, sub)

    return integrate_polar(ray, 0.0, 2 * math.pi, spec, points=g.angle_kinks(y, 0.0, 2 * math.pi))


def hopf_condition_check(g: FunctionField, ball: BallSpec, params: FracParams,
                         spec: Optional[QuadSpec] = None, y_samples: int = 16
                         ) -> HopfConditionResult:
    """Sampled check that ``int_{R^N minus B} g(x)/|x-y|^{N+2s} dx >= 0``
    for ``y`` in ``B``.

    The continuum of ``y`` is replaced by :func:`ball_samples`; passing
    means the minimum over the samples is at least ``-abs_tol``.
    """
    spec = spec or QuadSpec()
    _check_dim(g, params)
    if y_samples < 1:
        raise ValueError("y_samples must be >= 1")
    pts = ball_samples(ball, y_samples)
    ests = pmap(lambda y: exterior_kernel_integral(g, ball, y, params, spec), pts)
    notes = []
    values = []
    for p, e in zip(pts, ests):
        if e.diverged or not math.isfinite(e.value):
            notes.append(f"integral at y={p.tolist()} did not converge ({e.note})")
            values.append(-math.inf if e.divergence_sign != "+inf" else math.inf)
        else:
            values.append(e.value)
            if e.warning:
                notes.append(f"tolerance not reached at y={p.tolist()}")
    i = int(np.argmin(values))
    passed = not any(
        e.diverged and e.divergence_sign != "+inf" or not math.isfinite(e.value) and not e.diverged
        for e in ests) and values[i] >= -spec.abs_tol
    notes.append(f"sampled relaxation: {len(pts)} points of the ball")
    return HopfConditionResult(
        passed=bool(passed),
        worst_value=float(values[i]),
        worst_point=tuple(float(v) for v in pts[i]),
        values=tuple(float(v) for v in values),
        points=tuple(tuple(float(v) for v in p) for p in pts),
        note="; ".join(notes),
    )


@dataclass(frozen=True)
class BarrierResult:
    passed: bool
    margin: float
    worst_value: float
    worst_point: tuple
    target: float
    alpha: float
    values: tuple

    def to_dict(self) -> dict:
        return {
            "passed": self.passed,
            "margin": self.margin,
            "worst_value": self.worst_value,
            "worst_point": list(self.worst_point),
            "target": self.target,
            "alpha": self.alpha,
            "values": list(self.values),
        }


def _bump_distance(ball: BallSpec, bump: FunctionField) -> float:
    if bump.ball is None:
        raise ValueError("barrier_verify needs a bump built by a ball builder")
    d = float(np.linalg.norm(bump.ball.center_array - ball.center_array))
    return d - bump.ball.radius - ball.radius


def barrier_verify(ball: BallSpec, bump: FunctionField, alpha: float, c_sup: float,
                   params: FracParams, x_samples: int = 9, spec: Optional[QuadSpec] = None
                   ) -> BarrierResult:
    """Check ``(-Delta)^s (psi + alpha*bump) <= -c_sup * sup(psi)`` inside the ball.

    ``psi`` is the torsion function of ``ball``. ``margin`` is the target
    minus the largest sampled value (positive when the inequality holds).
    """
    spec = spec or QuadSpec(rel_tol=1e-8, abs_tol=1e-10)
    if alpha < 0 or c_sup < 0:
        raise ValueError("alpha and c_sup must be nonnegative")
    if _bump_distance(ball, bump) <= 0:
        raise ValueError("bump support must lie at positive distance from the ball")
    psi = torsion(ball.center, ball.radius, params.s)
    eta = lincomb([1.0, float(alpha)], [psi, bump])
    sup_psi = frac_constants(params).gamma_ns * ball.radius ** (2 * params.s)
    target = -float(c_sup) * sup_psi
    pts = ball_samples(ball, x_samples, shrink=0.9)
    vals = [e.value for e in pmap(lambda x: frac_laplacian_at(eta, x, params, spec), pts)]
    i = int(np.argmax(vals))
    return BarrierResult(
        passed=bool(vals[i] <= target + spec.abs_tol),
        margin=float(target - vals[i]),
        worst_value=float(vals[i]),
        worst_point=tuple(float(v) for v in pts[i]),
        target=target,
        alpha=float(alpha),
        values=tuple(float(v) for v in vals),
    )


def find_barrier_alpha(ball: BallSpec, bump: FunctionField, c_sup: float, params: FracParams,
                       x_samples: int = 9, spec: Optional[QuadSpec] = None,
                       alpha0: float = 1.0, max_doublings: int = 60) -> BarrierResult:
    """Double ``alpha`` from ``alpha0`` until :func:`barrier_verify` passes."""
    alpha = float(alpha0)
    for _ in range(max_doublings):
        res = barrier_verify(ball, bump, alpha, c_sup, params, x_samples, spec)
        if res.passed:
            return res
        alpha *= 2.0
    raise RuntimeError(f"no passing alpha up to {alpha / 2:g}")
