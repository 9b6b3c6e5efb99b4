"""Cone geometry, boundary-growth indicators and the dichotomy classifier.

Three indicators are computed at a boundary point ``x0`` with an interior
ball: the cone ratio ``u(x)/|x-x0|^s``, the ball indicator
``r^{-2s} inf_{B_{r/2}(z_r)} |u|`` with ``z_r = x0 + r*inward``, and the
extension quotient from :mod:`frachopf.extension`.
"""

from __future__ import annotations

import csv
import enum
import io
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .extension import (
    SLOPE_THRESHOLD,
    QuotientCurve,
    crosscheck_gap,
    default_t_grid,
    fit_loglog_slope,
    quotient_curve,
)
from .fields import FunctionField
from .nonlocal_ops import KernelIntegralResult, kernel_integral, tail_lower_bound
from .quad import QuadSpec
from .special import FracParams

__all__ = [
    "report_to_csv",
    "Classification",
    "InteriorBallFrame",
    "ConeSpec",
    "HopfGrids",
    "HopfReport",
    "cone_contains",
    "cone_ratio_curve",
    "dsv_curve",
    "classify_dichotomy",
    "hopf_report",
]

CONE_FAN = 9
RIM_FRACTION = 0.95


class Classification(str, enum.Enum):
    HOLDS = "HopfHolds"
    FAILS = "HopfFails"
    INDETERMINATE = "Indeterminate"


@dataclass(frozen=True)
class InteriorBallFrame:
    x0: tuple
    inward: tuple
    max_radius: float

    def __post_init__(self):
        x0 = tuple(float(v) for v in np.atleast_1d(self.x0))
        e = np.atleast_1d(np.asarray(self.inward, dtype=float))
        if len(e) != len(x0):
            raise ValueError("x0 and inward differ in dimension")
        n = float(np.linalg.norm(e))
        if not n > 0:
            raise ValueError("inward direction must be nonzero")
        if not self.max_radius > 0:
            raise ValueError("max_radius must be positive")
        object.__setattr__(self, "x0", x0)
        object.__setattr__(self, "inward", tuple(float(v) for v in e / n))
        object.__setattr__(self, "max_radius", float(self.max_radius))

    @property
    def dimension(self) -> int:
        return len(self.x0)

    def center(self, r: float) -> np.ndarray:
        """``z_r``: center of the interior ball of radius ``r`` tangent at ``x0``."""
        return np.array(self.x0) + r * np.array(self.inward)

    def to_dict(self) -> dict:
        return {"x0": list(self.x0), "inward": list(self.inward), "max_radius": self.max_radius}


@dataclass(frozen=True)
class ConeSpec:
    frame: InteriorBallFrame
    beta: float = math.pi / 4

    def __post_init__(self):
        if not 0 < self.beta < math.pi / 2:
            raise ValueError("beta must lie in (0, pi/2)")


def cone_contains(cone: ConeSpec, x) -> bool:
    """Whether ``x`` lies in the open cone of half-angle ``beta`` around the
    inward direction at ``x0``."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    v = x - np.array(cone.frame.x0)
    n = float(np.linalg.norm(v))
    if n == 0:
        raise ValueError("the cone is not defined at its vertex x0")
    c = float(np.clip(np.dot(v / n, np.array(cone.frame.inward)), -1.0, 1.0))
    return math.acos(c) < cone.beta


def _rotate(e: np.ndarray, angle: float) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    return np.array([c * e[0] - s * e[1], s * e[0] + c * e[1]])


def _cone_directions(cone: ConeSpec) -> np.ndarray:
    e = np.array(cone.frame.inward)
    if cone.frame.dimension == 1:
        return e[None, :]
    if cone.frame.dimension != 2:
        raise ValueError("cone sampling supports N in {1, 2}")
    angles = np.linspace(-RIM_FRACTION * cone.beta, RIM_FRACTION * cone.beta, CONE_FAN)
    return np.array([_rotate(e, a) for a in angles])


def cone_ratio_curve(u: FunctionField, cone: ConeSpec, params: FracParams,
                     d_grid: Sequence[float]) -> list:
    """``[(d, min over the fan of u(x0 + d e) / d^s)]`` for each distance ``d``."""
    dirs = _cone_directions(cone)
    x0 = np.array(cone.frame.x0)
    out = []
    for d in d_grid:
        d = float(d)
        vals = u.values(x0[None, :] + d * dirs)
        out.append((d, float(np.min(vals)) / d**params.s))
    return out


def _ball_fan(frame: InteriorBallFrame, r: float, samples: int) -> np.ndarray:
    z = frame.center(r)
    e = np.array(frame.inward)
    half = 0.5 * r
    if frame.dimension == 1:
        return (z[0] + half * np.linspace(-1.0, 1.0, max(samples, 3)) * e[0])[:, None]
    m = max(samples - 1, 4)
    m += m % 2  # even count keeps the nearest and farthest points in the fan
    angles = 2 * math.pi * np.arange(m) / m
    ring = np.array([z + half * _rotate(-e, a) for a in angles])
    return np.vstack([z[None, :], ring])


def dsv_curve(u: FunctionField, frame: InteriorBallFrame, params: FracParams,
              r_grid: Sequence[float], samples_per_ball: int = 9) -> list:
    """``[(r, r^{-2s} * min |u| over a fan in B_{r/2}(z_r))]``.

    The fan always contains the center, the point nearest to ``x0`` and the
    farthest one.
    """
    out = []
    for r in r_grid:
        r = float(r)
        if not 0 < r <= frame.max_radius * (1 + 1e-12):
            raise ValueError(f"r={r} outside (0, max_radius]")
        pts = _ball_fan(frame, r, samples_per_ball)
        out.append((r, float(np.min(np.abs(u.values(pts)))) / r ** (2 * params.s)))
    return out


def _finest(curve: Sequence[tuple], decades: float) -> np.ndarray:
    arr = np.asarray(curve, dtype=float)
    lim = arr[:, 0].min() * 10.0**decades * (1 + 1e-9)
    return arr[arr[:, 0] <= lim]


def _span_decades(curve) -> float:
    arr = np.asarray(curve, dtype=float)
    return math.log10(arr[:, 0].max() / arr[:, 0].min())


def _monotone(values: np.ndarray) -> bool:
    d = np.diff(values)
    scale = max(float(np.max(np.abs(values))), 1e-300)
    sig = d[np.abs(d) > 1e-9 * scale]
    return sig.size == 0 or bool(np.all(sig > 0) or np.all(sig < 0))


@dataclass(frozen=True)
class DichotomyVerdict:
    classification: Classification
    rationale: str
    dsv_slope: float
    cone_slope: float
    cone_terminal: float
    cone_verdict: Classification
    quotient_diverged: Optional[bool]

    def to_dict(self) -> dict:
        nan_none = lambda v: None if math.isnan(v) else float(v)  # noqa: E731
        return {
            "classification": self.classification.value,
            "rationale": self.rationale,
            "dsv_slope": nan_none(self.dsv_slope),
            "cone_slope": nan_none(self.cone_slope),
            "cone_terminal": float(self.cone_terminal),
            "cone_verdict": self.cone_verdict.value,
            "quotient_diverged": self.quotient_diverged,
        }


def _cone_verdict(curve) -> tuple:
    tail = _finest(curve, 2.0)
    terminal = float(tail[np.argmin(tail[:, 0]), 1])
    if np.all(tail[:, 1] <= 0):
        return Classification.FAILS, math.nan, terminal
    slope = fit_loglog_slope(tail[:, 0], tail[:, 1])
    if math.isnan(slope):
        return Classification.INDETERMINATE, slope, terminal
    if slope >= SLOPE_THRESHOLD:
        return Classification.FAILS, slope, terminal
    return Classification.HOLDS, slope, terminal


def classify_dichotomy(cone_curve, dsv_curve, quotient: Optional[QuotientCurve] = None
                       ) -> DichotomyVerdict:
    """Classify from the log-log slope of the ball indicator over its finest
    two decades.

    Slope at or below -0.1 (indicator blowing up) gives HopfHolds, slope at
    or above 0.1 (indicator vanishing) gives HopfFails, and an indicator
    that is zero on the finest decades gives HopfFails. The cone curve and
    the quotient are cross-reported in the rationale.
    """
    for name, curve in (("cone_curve", cone_curve), ("dsv_curve", dsv_curve)):
        if len(curve) < 3 or _span_decades(curve) < 2 - 1e-9:
            raise ValueError(f"{name} must span at least two decades")
    tail = _finest(dsv_curve, 2.0)
    order = np.argsort(tail[:, 0])
    rs, vals = tail[order, 0], tail[order, 1]
    notes = []
    if np.all(vals == 0):
        cls = Classification.FAILS
        slope = math.nan
        notes.append("ball indicator identically 0 on the finest two decades")
    else:
        slope = fit_loglog_slope(rs, vals)
        if math.isnan(slope):
            cls = Classification.INDETERMINATE
            notes.append("ball indicator has zero values mixed with positive ones")
        elif slope <= -SLOPE_THRESHOLD:
            cls = Classification.HOLDS
            notes.append(f"ball indicator slope {slope:+.4f}: grows faster than r^(2s)")
        elif slope >= SLOPE_THRESHOLD:
            cls = Classification.FAILS
            notes.append(f"ball indicator slope {slope:+.4f}: tends to 0")
        else:
            cls = Classification.INDETERMINATE
            extra = "" if _monotone(vals) else ", non-monotone"
            notes.append(f"ball indicator slope {slope:+.4f} in the dead band{extra}; "
                         f"terminal value {vals[0]:.6g}")

    cone_cls, cone_slope, cone_terminal = _cone_verdict(cone_curve)
    if math.isnan(cone_slope):
        notes.append(f"cone ratio terminal {cone_terminal:.6g} (vanishing)")
    else:
        notes.append(f"cone ratio slope {cone_slope:+.4f}, terminal {cone_terminal:.6g}")
    notes.append(f"cone criterion {'agrees' if cone_cls == cls else 'disagrees'} ({cone_cls.value})")

    qdiv = None
    if quotient is not None:
        qdiv = bool(quotient.limit.diverged)
        q_cls = Classification.HOLDS if qdiv else Classification.FAILS
        state = "diverges" if qdiv else "stays finite"
        notes.append(f"extension quotient {state} "
                     f"({'agrees' if q_cls == cls else 'disagrees'})")
    return DichotomyVerdict(cls, "; ".join(notes), slope, cone_slope, cone_terminal,
                            cone_cls, qdiv)


def _default_grid(max_radius: float) -> np.ndarray:
    return max_radius * default_t_grid(1e-1, 1e-4, 12)


@dataclass(frozen=True)
class HopfGrids:
    d_grid: Optional[tuple] = None
    r_grid: Optional[tuple] = None
    t_grid: Optional[tuple] = None
    samples_per_ball: int = 9

    def resolve(self, frame: InteriorBallFrame) -> "HopfGrids":
        g = _default_grid(frame.max_radius)
        return HopfGrids(
            tuple(float(v) for v in (self.d_grid if self.d_grid is not None else g)),
            tuple(float(v) for v in (self.r_grid if self.r_grid is not None else g)),
            tuple(float(v) for v in (self.t_grid if self.t_grid is not None else default_t_grid())),
            self.samples_per_ball,
        )


def _curve_json(curve, key) -> list:
    return [{key: float(a), "value": float(b)} for a, b in curve]


@dataclass(frozen=True)
class HopfReport:
    cone_curve: list
    dsv_curve: list
    quotient_curve: QuotientCurve
    kernel: KernelIntegralResult
    classification: Classification
    rationale: str
    params: FracParams
    field_spec: str
    frame: InteriorBallFrame
    beta: float
    checks: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "classification": self.classification.value,
            "rationale": self.rationale,
            "cone_curve": _curve_json(self.cone_curve, "distance"),
            "dsv_curve": _curve_json(self.dsv_curve, "r"),
            "quotient_curve": self.quotient_curve.to_dict(),
            "kernel": self.kernel.to_dict(),
            "params": self.params.to_dict(),
            "field_spec": self.field_spec,
            "frame": self.frame.to_dict(),
            "beta": self.beta,
            "checks": self.checks,
        }


def hopf_report(u: FunctionField, frame: InteriorBallFrame, params: FracParams,
                beta: float = math.pi / 4, grids: Optional[HopfGrids] = None,
                spec: Optional[QuadSpec] = None, probe=None) -> HopfReport:
    """Run every indicator at ``frame.x0`` and classify.

    ``checks`` records the tail bound on the far part of the kernel integral
    and, when the kernel integral is finite, the quotient-limit crosscheck.
    """
    spec = spec or QuadSpec()
    if u.dimension != frame.dimension or params.N != frame.dimension:
        raise ValueError("field, frame and params must share the dimension")
    grids = (grids or HopfGrids()).resolve(frame)
    cone = ConeSpec(frame, beta)
    cone_c = cone_ratio_curve(u, cone, params, grids.d_grid)
    dsv_c = dsv_curve(u, frame, params, grids.r_grid, grids.samples_per_ball)
    qc = quotient_curve(u, frame.x0, params, grids.t_grid, spec)
    split_r = 0.5 * frame.max_radius
    kern = kernel_integral(u, frame.x0, params, spec, inward=frame.inward, beta=beta,
                           split_radius=split_r)
    verdict = classify_dichotomy(cone_c, dsv_c, qc)

    checks = {}
    tlb = tail_lower_bound(u, split_r, params, probe)
    far = kern.far
    checks["tail_bound"] = {
        "split_radius": split_r,
        "lower_bound": tlb,
        "far_part": far.to_dict()["value"],
        "holds": bool(far.diverged or far.value >= tlb - far.error_bound),
    }
    if not kern.estimate.diverged and math.isfinite(kern.estimate.value) \
            and not qc.limit.diverged and math.isfinite(qc.limit.value):
        ok, gap = crosscheck_gap(qc.limit.value, kern, params)
        checks["quotient_crosscheck"] = {"passed": ok, "relative_gap": gap}
    checks["kernel_vs_quotient_divergence"] = {
        "kernel_diverged": kern.estimate.diverged,
        "quotient_diverged": qc.limit.diverged,
        "consistent": kern.estimate.diverged == qc.limit.diverged,
    }
    return HopfReport(cone_c, dsv_c, qc, kern, verdict.classification, verdict.rationale,
                      params, u.spec, frame, float(beta), checks)


def report_to_csv(report: HopfReport) -> str:
    """Long-format CSV of the three curves: ``curve,abscissa,value``."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["curve", "abscissa", "value"])
    for a, b in report.cone_curve:
        w.writerow(["cone", repr(float(a)), repr(float(b))])
    for a, b in report.dsv_curve:
        w.writerow(["dsv", repr(float(a)), repr(float(b))])
    q = report.quotient_curve
    for a, b in zip(q.t_values, q.q_values):
        w.writerow(["quotient", repr(float(a)), repr(float(b))])
    return buf.getvalue()
