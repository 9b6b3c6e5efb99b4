"""Adaptive Gauss-Kronrod quadrature with explicit divergence detection.

Every routine returns an :class:`Estimate`. Integrands are vectorized:
they receive a 1-D float array of abscissae and return an array of values
of the same shape.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, replace
from typing import Callable, Iterable, Optional, Sequence

import numpy as np

from .special import ball_volume

__all__ = [
    "QuadSpec",
    "Estimate",
    "integrate_interval",
    "integrate_halfline",
    "integrate_radial",
    "integrate_polar",
    "power_tail_closed_form",
    "divergence_probe",
    "sum_estimates",
]

_EPS = np.finfo(float).eps

# Kronrod 15-point nodes on [0, 1]; odd indices are the embedded Gauss 7 nodes.
_XK = np.array([
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
])
_WK = np.array([
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
])
_WG = np.array([
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
])
_NODES = np.concatenate([-_XK[:-1], _XK[::-1]])
_WEIGHTS_K = np.concatenate([_WK[:-1], _WK[::-1]])
_WEIGHTS_G = np.zeros(15)
_WEIGHTS_G[1:7:2] = _WG[:3]
_WEIGHTS_G[7] = _WG[3]
_WEIGHTS_G[9:15:2] = _WG[2::-1]


@dataclass(frozen=True)
class QuadSpec:
    rel_tol: float = 1e-8
    abs_tol: float = 1e-12
    max_subdivisions: int = 20000
    truncation_radius: float = 1e6

    def __post_init__(self):
        if not (0 < self.rel_tol < 1):
            raise ValueError("rel_tol must lie in (0, 1)")
        if not self.abs_tol > 0:
            raise ValueError("abs_tol must be positive")
        if int(self.max_subdivisions) < 1:
            raise ValueError("max_subdivisions must be a positive integer")
        if not self.truncation_radius > 0:
            raise ValueError("truncation_radius must be positive")

    def tightened(self, factor: float) -> "QuadSpec":
        return replace(self, rel_tol=self.rel_tol * factor, abs_tol=self.abs_tol * factor)

    def to_dict(self) -> dict:
        return {
            "rel_tol": self.rel_tol,
            "abs_tol": self.abs_tol,
            "max_subdivisions": int(self.max_subdivisions),
            "truncation_radius": self.truncation_radius,
        }


@dataclass(frozen=True)
class Estimate:
    """Quadrature result.

    When ``diverged`` is true, ``value`` is ``+inf`` or ``-inf`` and carries no
    numerical meaning beyond the sign. ``warning`` marks results whose
    tolerance was not reached.
    """

    value: float
    error_bound: float = 0.0
    diverged: bool = False
    divergence_sign: Optional[str] = None
    warning: bool = False
    note: str = ""

    @property
    def converged(self) -> bool:
        return not self.diverged and not self.warning

    @classmethod
    def divergent(cls, sign: str = "+inf", note: str = "") -> "Estimate":
        value = math.inf if sign == "+inf" else -math.inf
        return cls(value=value, error_bound=math.inf, diverged=True,
                   divergence_sign=sign, note=note)

    def scaled(self, c: float) -> "Estimate":
        if self.diverged:
            if c == 0:
                return Estimate(0.0, 0.0, note=self.note)
            sign = self.divergence_sign if c > 0 else _flip(self.divergence_sign)
            return replace(self, value=-self.value if c < 0 else self.value,
                           divergence_sign=sign)
        return replace(self, value=c * self.value, error_bound=abs(c) * self.error_bound)

    def to_dict(self) -> dict:
        return {
            "value": _json_float(self.value),
            "error_bound": _json_float(self.error_bound),
            "diverged": self.diverged,
            "divergence_sign": self.divergence_sign,
            "warning": self.warning,
            "note": self.note,
        }


def _flip(sign):
    return {"+inf": "-inf", "-inf": "+inf"}.get(sign, sign)


def _json_float(x: float):
    if math.isinf(x):
        return "+inf" if x > 0 else "-inf"
    if math.isnan(x):
        return None
    return float(x)


def sum_estimates(parts: Iterable[Estimate]) -> Estimate:
    """Add estimates; divergence of one sign dominates, opposite signs warn."""
    parts = list(parts)
    signs = {p.divergence_sign for p in parts if p.diverged}
    notes = "; ".join(p.note for p in parts if p.note)
    if len(signs) == 2:
        return Estimate(math.nan, math.inf, warning=True,
                        note="opposite divergences; " + notes)
    if signs:
        return Estimate.divergent(signs.pop(), note=notes)
    return Estimate(
        value=math.fsum(p.value for p in parts),
        error_bound=math.fsum(p.error_bound for p in parts),
        warning=any(p.warning for p in parts),
        note=notes,
    )


def _gk15(f, a: float, b: float):
    c = 0.5 * (a + b)
    h = 0.5 * (b - a)
    fx = np.asarray(f(c + h * _NODES), dtype=float)
    res_k = h * float(np.dot(_WEIGHTS_K, fx))
    res_g = h * float(np.dot(_WEIGHTS_G, fx))
    res_abs = abs(h) * float(np.dot(_WEIGHTS_K, np.abs(fx)))
    mean = res_k / (2.0 * h) if h != 0 else 0.0
    res_asc = abs(h) * float(np.dot(_WEIGHTS_K, np.abs(fx - mean)))
    err = abs(res_k - res_g)
    if res_asc != 0 and err != 0:
        err = res_asc * min(1.0, (200.0 * err / res_asc) ** 1.5)
    if res_abs > 1e-290 / (50 * _EPS):
        err = max(err, 50 * _EPS * res_abs)
    if not np.all(np.isfinite(fx)):
        err = math.inf
    return res_k, err


def _adaptive(f, edges: Sequence[float], rel_tol: float, abs_tol: float, budget: int):
    """Global adaptive bisection; returns (value, error, reached_tolerance)."""
    heap = []
    total = 0.0
    err_total = 0.0
    for a, b in zip(edges[:-1], edges[1:]):
        if b <= a:
            continue
        v, e = _gk15(f, a, b)
        heap.append((-e, a, b, v, e))
        total += v
        err_total += e
    heapq.heapify(heap)
    n_panels = len(heap)
    while heap:
        if err_total <= max(rel_tol * abs(total), abs_tol):
            break
        if n_panels >= budget:
            break
        neg_e, a, b, v, e = heapq.heappop(heap)
        m = 0.5 * (a + b)
        if not (a < m < b) or (b - a) <= 64 * _EPS * max(abs(a), abs(b), 1e-300):
            # Panel below resolution: freeze it.
            heapq.heappush(heap, (0.0, a, b, v, e))
            if all(item[0] == 0.0 for item in heap):
                break
            continue
        v1, e1 = _gk15(f, a, m)
        v2, e2 = _gk15(f, m, b)
        heapq.heappush(heap, (-e1, a, m, v1, e1))
        heapq.heappush(heap, (-e2, m, b, v2, e2))
        n_panels += 1
        # Recompute sums periodically to avoid drift.
        total += v1 + v2 - v
        err_total += e1 + e2 - e
        if n_panels % 256 == 0:
            total = math.fsum(item[3] for item in heap)
            err_total = math.fsum(item[4] for item in heap)
    total = math.fsum(item[3] for item in heap)
    err_total = math.fsum(item[4] for item in heap)
    ok = err_total <= max(rel_tol * abs(total), abs_tol)
    return total, err_total, ok


def _edges(a: float, b: float, points) -> list:
    inner = sorted({float(p) for p in (points if points is not None else ()) if a < p < b})
    return [float(a)] + inner + [float(b)]


def integrate_interval(
    f: Callable[[np.ndarray], np.ndarray],
    a: float,
    b: float,
    spec: Optional[QuadSpec] = None,
    points: Optional[Iterable[float]] = None,
) -> Estimate:
    """Integrate ``f`` over ``(a, b)``.

    ``points`` are interior abscissae where ``f`` is not smooth. Endpoint
    singularities are resolved by bisection toward the endpoint; nodes never
    touch the endpoints.
    """
    spec = spec or QuadSpec()
    if not a < b:
        if a == b:
            return Estimate(0.0)
        raise ValueError(f"integrate_interval needs a < b, got ({a}, {b})")
    value, err, ok = _adaptive(f, _edges(a, b, points), spec.rel_tol, spec.abs_tol,
                               int(spec.max_subdivisions))
    if not math.isfinite(value):
        return Estimate(value, math.inf, warning=True, note="non-finite integrand values")
    note = "" if ok else f"tolerance not reached (error ~ {err:.3g})"
    return Estimate(value, err, warning=not ok, note=note)


def integrate_halfline(
    f: Callable[[np.ndarray], np.ndarray],
    a: float,
    spec: Optional[QuadSpec] = None,
    points: Optional[Iterable[float]] = None,
    upper: Optional[float] = None,
    tail: Optional[Callable[[float], float]] = None,
) -> Estimate:
    """Integrate ``f`` over ``(a, upper)`` with ``upper`` defaulting to the
    truncation radius, in the logarithmic variable beyond ``max(a, 1e-300)``.

    ``tail(T)`` returns the closed-form remainder beyond ``T``; without it,
    ``T * |f(T)|`` is added to the error bound (exact for a ``rho^{-2}``
    decay, an overestimate for anything faster).
    """
    spec = spec or QuadSpec()
    T = spec.truncation_radius if upper is None else float(upper)
    if a < 0:
        raise ValueError("integrate_halfline needs a >= 0")
    parts = []
    pts = sorted(float(p) for p in (points or ()) if a < p < T)
    lo = a
    if a == 0.0:
        first = min([1.0, T] + [p for p in pts if p > 0])
        parts.append(integrate_interval(f, 0.0, first, spec))
        pts = [p for p in pts if p > first]
        lo = first
    if lo < T:
        log_lo = math.log(lo)

        def g(u):
            r = np.exp(u)
            return f(r) * r

        parts.append(integrate_interval(g, log_lo, math.log(T), spec,
                                        points=[math.log(p) for p in pts]))
    est = sum_estimates(parts)
    if upper is None:
        if tail is not None:
            est = replace(est, value=est.value + float(tail(T)))
        else:
            bound = T * float(abs(np.asarray(f(np.array([T])))[0]))
            est = replace(est, error_bound=est.error_bound + bound)
    return est


def power_tail_closed_form(R: float, s: float, N: int) -> float:
    """``N * omega_N * int_R^inf z^{-1-2s} dz = N omega_N R^{-2s} / (2s)``."""
    if not R > 0:
        raise ValueError("R must be positive")
    return N * ball_volume(N) * R ** (-2.0 * s) / (2.0 * s)


def integrate_polar(
    inner: Callable[[float], Estimate],
    theta_a: float,
    theta_b: float,
    spec: Optional[QuadSpec] = None,
    points: Optional[Iterable[float]] = None,
) -> Estimate:
    """Outer adaptive integral over the angle of ``inner(theta)``.

    ``inner`` returns the radial integral (Jacobian included) along the ray
    of angle ``theta``. Inner errors are propagated into the bound.
    """
    spec = spec or QuadSpec()
    inner_err = [0.0]
    flags = {"warning": False, "div": set()}

    def outer(thetas: np.ndarray) -> np.ndarray:
        out = np.empty_like(thetas)
        for i, th in enumerate(thetas):
            e = inner(float(th))
            if e.diverged:
                flags["div"].add(e.divergence_sign)
                out[i] = 0.0
                continue
            flags["warning"] |= e.warning
            inner_err[0] = max(inner_err[0], e.error_bound)
            out[i] = e.value
        return out

    est = integrate_interval(outer, theta_a, theta_b, spec, points)
    if flags["div"]:
        sign = "+inf" if flags["div"] == {"+inf"} else None
        if sign is None:
            return Estimate(math.nan, math.inf, warning=True, note="mixed divergence along rays")
        return Estimate.divergent(sign, note="divergent along some rays")
    return replace(
        est,
        error_bound=est.error_bound + inner_err[0] * (theta_b - theta_a),
        warning=est.warning or flags["warning"],
    )


def integrate_radial(
    f: Callable[[np.ndarray], np.ndarray],
    N: int,
    inner_radius: float,
    spec: Optional[QuadSpec] = None,
    envelope: Optional[tuple] = None,
) -> Estimate:
    """Integrate ``f`` over ``R^N`` minus the centered ball of ``inner_radius``.

    ``f`` takes an array of points of shape ``(m, N)``. ``envelope=(A, s)``
    declares ``f(y) ~ A |y|^{-N-2s}`` beyond the truncation radius; the tail is
    then added in closed form.
    """
    spec = spec or QuadSpec()
    if N not in (1, 2):
        raise ValueError("integrate_radial supports N in {1, 2}")
    tail = None
    if envelope is not None:
        A, s = envelope
        if N == 1:
            # Each half-line carries half of the shell measure.
            tail = lambda T: 0.5 * A * power_tail_closed_form(T, s, 1)  # noqa: E731
        else:
            tail = lambda T: A * T ** (-2.0 * s) / (2.0 * s)  # noqa: E731

    if N == 1:
        parts = []
        for sign in (1.0, -1.0):
            parts.append(integrate_halfline(
                lambda r, sg=sign: f((sg * r)[:, None]), inner_radius, spec, tail=tail))
        return sum_estimates(parts)

    def ray(theta: float) -> Estimate:
        e = np.array([math.cos(theta), math.sin(theta)])
        return integrate_halfline(
            lambda r: f(r[:, None] * e[None, :]) * r, inner_radius, spec.tightened(0.1),
            tail=tail)

    return integrate_polar(ray, 0.0, 2.0 * math.pi, spec)


_DECAY_RATIO = 1.0 / 1.05
_NONDECAY_RUN = 10


def divergence_probe(
    f: Optional[Callable[[np.ndarray], np.ndarray]],
    r: float = 1.0,
    spec: Optional[QuadSpec] = None,
    shell: Optional[Callable[[float, float], Estimate]] = None,
    max_levels: int = 400,
    min_levels: int = 12,
) -> Estimate:
    """Integral of a nonnegative ``f`` over ``(0, r]`` with a singularity at 0.

    The interval is cut into dyadic shells ``(r 2^{-k-1}, r 2^{-k}]``. The
    integral is declared ``+inf`` when ten consecutive shell ratios exceed
    ``1/1.05``; otherwise the geometric remainder is extrapolated from the
    latest ratio. ``shell(lo, hi)`` overrides the default 1-D shell integral.
    """
    spec = spec or QuadSpec()
    if shell is None:
        if f is None:
            raise ValueError("divergence_probe needs either f or shell")
        sub = spec.tightened(0.1)
        shell = lambda lo, hi: integrate_interval(f, lo, hi, sub)  # noqa: E731

    shells = []
    err = 0.0
    warn = False
    run = 0
    prev_est = None
    oscillating = False
    tiny = max(spec.abs_tol * 1e-2, 1e-300)
    for k in range(max_levels):
        hi = r * 2.0 ** (-k)
        lo = 0.5 * hi
        e = shell(lo, hi)
        if e.diverged:
            return Estimate.divergent(e.divergence_sign or "+inf", note=f"shell {k} diverged")
        warn |= e.warning
        err += e.error_bound
        S = e.value
        shells.append(S)
        if k == 0:
            continue
        prev = shells[-2]
        if abs(S) <= tiny and abs(prev) <= tiny:
            q = 0.0
        elif abs(prev) <= tiny:
            q = math.inf
        else:
            q = S / prev
        if q < 0:
            oscillating = True
        run = run + 1 if q > _DECAY_RATIO else 0
        if run >= _NONDECAY_RUN:
            recent = shells[-_NONDECAY_RUN:]
            if all(v > 0 for v in recent):
                return Estimate.divergent("+inf", note=f"shell sums non-decaying over {run} dyadic levels")
            if all(v < 0 for v in recent):
                return Estimate.divergent("-inf", note=f"shell sums non-decaying over {run} dyadic levels")
            return Estimate(math.nan, math.inf, warning=True,
                            note="non-decaying shells of mixed sign")
        if k < min_levels or q > _DECAY_RATIO or q < 0:
            prev_est = None
            continue
        total = math.fsum(shells)
        est = total + S * q / (1.0 - q)
        if prev_est is not None:
            change = abs(est - prev_est)
            if change <= max(spec.rel_tol * abs(est), spec.abs_tol):
                note = "oscillating shell sums" if oscillating else ""
                return Estimate(est, err + change, warning=warn or oscillating, note=note)
        prev_est = est
    total = math.fsum(shells)
    return Estimate(total, err + (abs(shells[-1]) if shells else 0.0), warning=True,
                    note="divergence probe exhausted its levels without a verdict")
