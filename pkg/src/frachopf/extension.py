"""Extension of a field to the upper half-space through the Poisson
representation, and the boundary quotient ``(U(x0,t) - u(x0)) / t^{2s}``."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np

from ._parallel import pmap
from .fields import FunctionField
from .nonlocal_ops import KernelIntegralResult, _check_dim, _unit, ray_integral
from .quad import Estimate, QuadSpec, integrate_polar, integrate_radial, sum_estimates
from .special import FracParams, frac_constants

__all__ = [
    "QuotientCurve",
    "default_t_grid",
    "cs_extend_at",
    "poisson_integral",
    "kernel_mass",
    "quotient_curve",
    "quotient_limit",
    "crosscheck_gap",
    "fit_loglog_slope",
    "curve_to_csv",
]

SLOPE_THRESHOLD = 0.1
CROSSCHECK_REL = 0.02


def default_t_grid(t_max: float = 1e-1, t_min: float = 1e-4, per_decade: int = 12) -> np.ndarray:
    """Geometric grid from ``t_max`` down to ``t_min``, ``per_decade`` points per decade."""
    n = int(round(math.log10(t_max / t_min) * per_decade))
    return t_max * 10.0 ** (-np.arange(n + 1) / per_decade)


def poisson_integral(u: FunctionField, x, t: float, params: FracParams,
                     spec: Optional[QuadSpec] = None) -> Estimate:
    """``int u(y) (|x-y|^2 + t^2)^{-(N+2s)/2} dy`` for ``t > 0``."""
    spec = spec or QuadSpec()
    N, s = params.N, params.s
    x = np.atleast_1d(np.asarray(x, dtype=float))
    expo = -(N + 2.0 * s) / 2.0
    t2 = t * t
    if N == 1:
        w = lambda rho: (rho * rho + t2) ** expo  # noqa: E731
    else:
        w = lambda rho: (rho * rho + t2) ** expo * rho  # noqa: E731

    def ray(e, qs):
        end = u.ray_extent(x, e)
        ladder = [t * 4.0**k for k in range(40) if t * 4.0**k < min(end, 1e3)]
        return _ray_with_points(u, x, e, w, end, ladder, qs)

    if N == 1:
        return sum_estimates([ray(np.array([1.0]), spec), ray(np.array([-1.0]), spec)])
    sub = spec.tightened(0.1)
    return integrate_polar(lambda th: ray(_unit(th), sub), 0.0, 2 * math.pi, spec,
                           points=u.angle_kinks(x, 0.0, 2 * math.pi))


def _ray_with_points(u, x, e, w, end, extra_points, spec):
    from .quad import integrate_halfline, integrate_interval

    if not end > 0:
        return Estimate(0.0)
    pts = sorted({p for p in list(u.ray_kinks(x, e)) + list(extra_points) if 0 < p < end})

    def g(rho):
        return u.ray_values(x, e, rho) * w(rho)

    if math.isinf(end):
        return integrate_halfline(g, 0.0, spec, points=pts)
    return integrate_interval(g, 0.0, end, spec, points=pts)


def cs_extend_at(u: FunctionField, x, t: float, params: FracParams,
                 spec: Optional[QuadSpec] = None) -> Estimate:
    """``U(x, t) = P_{N,s} int u(y) t^{2s} / (|x-y|^2 + t^2)^{(N+2s)/2} dy``;
    at ``t = 0`` the trace ``u(x)``."""
    _check_dim(u, params)
    if t < 0:
        raise ValueError("t must be nonnegative")
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if t == 0:
        return Estimate(float(u.values(x[None, :])[0]))
    P = frac_constants(params).p_ns
    return poisson_integral(u, x, t, params, spec).scaled(P * t ** (2 * params.s))


def kernel_mass(params: FracParams, t: float, spec: Optional[QuadSpec] = None) -> Estimate:
    """Total mass of the Poisson kernel at height ``t`` (should be 1)."""
    if not t > 0:
        raise ValueError("t must be positive")
    spec = spec or QuadSpec()
    N, s = params.N, params.s
    P = frac_constants(params).p_ns
    t2 = t * t
    c = t ** (2 * s)

    def f(y):
        return c * (np.sum(y * y, axis=1) + t2) ** (-(N + 2.0 * s) / 2.0)

    return integrate_radial(f, N, 0.0, spec, envelope=(c, s)).scaled(P)


def fit_loglog_slope(xs: Sequence[float], ys: Sequence[float]) -> float:
    """Least-squares slope of ``log y`` against ``log x``; NaN unless every
    ``y`` is positive and at least two points are given."""
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    if xs.size < 2 or np.any(~np.isfinite(ys)) or np.any(ys <= 0):
        return math.nan
    return float(np.polyfit(np.log(xs), np.log(ys), 1)[0])


def _smallest_decade(ts: np.ndarray) -> np.ndarray:
    return ts <= ts.min() * 10.0 * (1 + 1e-9)


@dataclass(frozen=True)
class QuotientCurve:
    t_values: tuple
    q_values: tuple
    q_errors: tuple
    fitted_slope: float
    limit: Estimate
    warning: bool = False

    def __post_init__(self):
        if len(self.t_values) != len(self.q_values):
            raise ValueError("t and q sequences differ in length")
        ts = self.t_values
        if any(b >= a for a, b in zip(ts[:-1], ts[1:])) or any(t <= 0 for t in ts):
            raise ValueError("t values must be positive and strictly decreasing")

    def to_dict(self) -> dict:
        slope = self.fitted_slope
        return {
            "t": list(self.t_values),
            "q": list(self.q_values),
            "q_error": list(self.q_errors),
            "fitted_slope": None if math.isnan(slope) else slope,
            "slope_defined": not math.isnan(slope),
            "limit": self.limit.to_dict(),
            "warning": self.warning,
        }


def quotient_values(u: FunctionField, x0, params: FracParams, t_grid=None,
                    spec: Optional[QuadSpec] = None):
    spec = spec or QuadSpec()
    ts = np.asarray(default_t_grid() if t_grid is None else t_grid, dtype=float)
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    P = frac_constants(params).p_ns
    ux0 = float(u.values(x0[None, :])[0])
    ests = pmap(lambda t: poisson_integral(u, x0, float(t), params, spec), ts)
    qs, errs, warn = [], [], False
    for t, e in zip(ts, ests):
        warn |= e.warning
        qs.append(P * e.value - ux0 / t ** (2 * params.s))
        errs.append(P * e.error_bound)
    return ts, qs, errs, warn


def quotient_curve(u: FunctionField, x0, params: FracParams, t_grid=None,
                   spec: Optional[QuadSpec] = None) -> QuotientCurve:
    """Boundary quotient on a decreasing ``t`` grid.

    The slope is fitted over the smallest decade of ``t``; ``limit`` is
    :func:`quotient_limit` of the resulting curve.
    """
    _check_dim(u, params)
    ts, qs, errs, warn = quotient_values(u, x0, params, t_grid, spec)
    mask = _smallest_decade(ts)
    slope = fit_loglog_slope(ts[mask], np.asarray(qs)[mask])
    base = QuotientCurve(tuple(float(t) for t in ts), tuple(float(q) for q in qs),
                         tuple(float(e) for e in errs), slope, Estimate(math.nan), warn)
    return replace(base, limit=quotient_limit(base))


def crosscheck_gap(limit: float, kernel: KernelIntegralResult, params: FracParams):
    """``(passed, relative gap)`` between the quotient limit and
    ``P_{N,s}`` times the kernel integral."""
    target = frac_constants(params).p_ns * kernel.estimate.value
    if target == 0:
        gap = abs(limit)
    else:
        gap = abs(limit - target) / abs(target)
    return bool(gap <= CROSSCHECK_REL), float(gap)


def quotient_limit(curve: QuotientCurve, crosscheck: Optional[KernelIntegralResult] = None,
                   params: Optional[FracParams] = None) -> Estimate:
    """Limit of the quotient as ``t -> 0``.

    A fitted slope at or below -0.1 means divergence to ``+inf``; a slope in
    (-0.1, 0.1) gives a finite limit extrapolated from the three smallest
    ``t``; a slope of 0.1 or more means the quotient tends to 0.
    """
    ts = np.asarray(curve.t_values)
    qs = np.asarray(curve.q_values)
    if ts.size < 8 or ts.max() / ts.min() < 100 * (1 - 1e-9):
        raise ValueError("quotient_limit needs >= 8 points spanning >= 2 decades")
    slope = curve.fitted_slope
    if math.isnan(slope):
        tail = qs[_smallest_decade(ts)]
        if np.all(tail == 0):
            est = Estimate(0.0, note="quotient identically zero; slope undefined")
        else:
            est = Estimate(float(qs[-1]), math.inf, warning=True,
                           note="indeterminate: slope undefined on a nonzero quotient")
    elif slope <= -SLOPE_THRESHOLD:
        est = Estimate.divergent("+inf", note=f"fitted slope {slope:.4f} <= -{SLOPE_THRESHOLD}")
    elif slope >= SLOPE_THRESHOLD:
        est = Estimate(0.0, abs(float(qs[-1])), note=f"fitted slope {slope:.4f}: quotient tends to 0")
    else:
        est = _extrapolate(ts, qs, np.asarray(curve.q_errors))
    if crosscheck is not None:
        if params is None:
            raise ValueError("crosscheck needs params")
        kv = crosscheck.estimate
        if not est.diverged and not kv.diverged and math.isfinite(kv.value) and not est.warning:
            ok, gap = crosscheck_gap(est.value, crosscheck, params)
            msg = f"crosscheck vs P*kernel: relative gap {gap:.3e} ({'pass' if ok else 'FAIL'})"
            est = replace(est, warning=est.warning or not ok,
                          note="; ".join(n for n in (est.note, msg) if n))
        elif est.diverged and kv.diverged:
            est = replace(est, note=est.note + "; kernel integral also diverges")
    return est


def _extrapolate(ts, qs, errs) -> Estimate:
    tail = qs[_smallest_decade(ts)]
    d = np.diff(tail)
    scale = max(np.max(np.abs(tail)), 1e-300)
    sig = d[np.abs(d) > 1e-9 * scale]
    monotone = sig.size == 0 or np.all(sig > 0) or np.all(sig < 0)
    q1, q2, q3 = qs[-3:]
    d1, d2 = q2 - q1, q3 - q2
    value = float(q3)
    if d1 != 0:
        r = d2 / d1
        if 0 < r < 1:
            value = float(q3 + d2 * r / (1 - r))
    err = abs(value - float(q3)) + float(errs[-1])
    if not monotone:
        return Estimate(value, err, warning=True, note="indeterminate: non-monotone tail in the dead band")
    return Estimate(value, err, note="finite limit (Richardson)")


def curve_to_csv(curve: QuotientCurve, meta: Optional[dict] = None) -> str:
    """CSV text with ``#`` metadata lines followed by ``t,q`` rows."""
    buf = io.StringIO()
    for k, v in (meta or {}).items():
        buf.write(f"# {k}={v}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["t", "q"])
    for t, q in zip(curve.t_values, curve.q_values):
        w.writerow([repr(t), repr(q)])
    return buf.getvalue()
