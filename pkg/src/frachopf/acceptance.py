"""The acceptance suite, shared by ``frachopf selfcheck`` and the tests.

Each criterion returns a :class:`CriterionResult`. Wall-clock times are
kept on the result for the printed table but never enter the JSON, so two
runs serialize to identical bytes.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .extension import cs_extend_at, kernel_mass, quotient_curve, quotient_limit, quotient_values
from .fields import BallSpec, FunctionField, box, bump, lincomb, power, torsion, zero
from .hopf import (
    Classification,
    ConeSpec,
    InteriorBallFrame,
    classify_dichotomy,
    cone_ratio_curve,
    hopf_report,
)
from .nonlocal_ops import frac_laplacian_at, hopf_condition_check, kernel_integral, tail_lower_bound
from .quad import power_tail_closed_form
from .spectral import Grid1D, assemble_forms, lambda1_estimate, rayleigh_quotient, scaling_check
from .special import FracParams, frac_constants, printed_c_ns

__all__ = ["CriterionResult", "CRITERIA", "run_criterion", "run_suite", "suite_to_dict",
           "suite_json", "format_table"]

S_VALUES = (0.25, 0.5, 0.75)


@dataclass
class CriterionResult:
    number: int
    title: str
    passed: bool
    detail: str
    metrics: dict = field(default_factory=dict)
    seconds: float = 0.0

    def to_dict(self) -> dict:
        return {"criterion": self.number, "title": self.title, "passed": self.passed,
                "detail": self.detail, "metrics": self.metrics}


def _num(x):
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "+inf" if x > 0 else "-inf"
    return x


def _frame1() -> InteriorBallFrame:
    return InteriorBallFrame((1.0,), (-1.0,), 1.0)


def _sign_changing(s: float) -> FunctionField:
    return lincomb([1.0, -0.1], [torsion([0.0], 1.0, s), box(2.0, 3.0)])


def criterion_1() -> tuple:
    t0 = time.perf_counter()
    worst1 = 0.0
    for s in S_VALUES:
        u = torsion([0.0], 1.0, s)
        p = FracParams(1, s)
        for x in (0.0, 0.5, -0.5, 0.9, -0.9):
            worst1 = max(worst1, abs(frac_laplacian_at(u, [x], p).value - 1.0))
    u2 = torsion([0.0, 0.0], 1.0, 0.5)
    p2 = FracParams(2, 0.5)
    pts2 = [(0.0, 0.0), (0.5, 0.0), (0.0, -0.6), (0.3, 0.4), (-0.6363961, 0.6363961)]
    worst2 = max(abs(frac_laplacian_at(u2, list(x), p2).value - 1.0) for x in pts2)
    elapsed = time.perf_counter() - t0
    ok = worst1 <= 1e-3 and worst2 <= 5e-3 and elapsed <= 60.0
    return ok, (f"max |(-D)^s psi - 1|: N=1 {worst1:.2e} (tol 1e-3), "
                f"N=2 {worst2:.2e} (tol 5e-3)"), {
        "max_error_n1": worst1, "max_error_n2": worst2, "within_60s": elapsed <= 60.0}


def criterion_2() -> tuple:
    worst = 0.0
    for N in (1, 2):
        for s in S_VALUES:
            p = FracParams(N, s)
            ratio = printed_c_ns(p) / frac_constants(p).c_ns
            worst = max(worst, abs(ratio / math.pi**N - 1.0))
    worst_pi = 0.0
    for s in S_VALUES:
        p = FracParams(1, s)
        val = frac_laplacian_at(torsion([0.0], 1.0, s), [0.0], p, constant=printed_c_ns(p)).value
        worst_pi = max(worst_pi, abs(val / math.pi - 1.0))
    ok = worst <= 1e-10 and worst_pi <= 1e-3
    return ok, (f"printed/adopted = pi^N to {worst:.1e}; "
                f"printed constant gives pi to {worst_pi:.1e}"), {
        "ratio_rel_error": worst, "printed_torsion_rel_error_vs_pi": worst_pi}


def criterion_3() -> tuple:
    worst = 0.0
    for N in (1, 2):
        for s in S_VALUES:
            for t in (0.01, 0.1, 1.0):
                worst = max(worst, abs(kernel_mass(FracParams(N, s), t).value - 1.0))
    return worst <= 1e-6, f"max |mass - 1| = {worst:.2e} (tol 1e-6)", {"max_error": worst}


def criterion_4() -> tuple:
    u = box(2.0, 3.0)
    p = FracParams(1, 0.5)
    worst = 0.0
    for x in np.linspace(0.0, 4.0, 5):
        for t in np.geomspace(0.01, 1.0, 4):
            exact = (math.atan((3 - x) / t) - math.atan((2 - x) / t)) / math.pi
            worst = max(worst, abs(cs_extend_at(u, [x], float(t), p).value - exact))
    return worst <= 1e-6, f"max error vs arctan form = {worst:.2e} (tol 1e-6)", {"max_error": worst}


def criterion_5() -> tuple:
    u = box(2.0, 3.0)
    p = FracParams(1, 0.5)
    k = kernel_integral(u, [0.0], p)
    _, qs, _, _ = quotient_values(u, [0.0], p, [1e-3])
    target = 1.0 / (6.0 * math.pi)
    q_gap = abs(qs[0] - target) / target
    lim = quotient_limit(quotient_curve(u, [0.0], p), k, p)
    cross_ok = (not lim.warning) and "pass" in lim.note
    k_err = abs(k.estimate.value - 1.0 / 6.0)
    ok = k_err <= 1e-6 and q_gap <= 0.01 and cross_ok
    return ok, (f"kernel error {k_err:.1e}, quotient gap at 1e-3 {q_gap:.1e}, "
                f"crosscheck {'pass' if cross_ok else 'fail'}"), {
        "kernel": k.estimate.value, "quotient_t1e-3": qs[0], "quotient_limit": _num(lim.value),
        "crosscheck_passed": cross_ok}


def criterion_6() -> tuple:
    ok = True
    metrics = {}
    parts = []
    for s in S_VALUES:
        u = torsion([0.0], 1.0, s)
        p = FracParams(1, s)
        k = kernel_integral(u, [1.0], p, inward=[-1.0])
        c = quotient_curve(u, [1.0], p)
        div = k.estimate.diverged and k.estimate.divergence_sign == "+inf"
        good = div and abs(c.fitted_slope + s) <= 0.05
        ok &= good
        metrics[f"s={s}"] = {"kernel_diverged": div, "slope": c.fitted_slope}
        parts.append(f"s={s}: kernel {'+inf' if div else 'finite'}, slope {c.fitted_slope:+.4f}")
    return ok, "; ".join(parts), metrics


def criterion_7() -> tuple:
    p = FracParams(1, 0.5)
    cone = ConeSpec(_frame1(), math.pi / 4)
    grid = [1e-2, 1e-3, 1e-4]
    rt = dict(cone_ratio_curve(torsion([0.0], 1.0, 0.5), cone, p, grid))[1e-4]
    rp = dict(cone_ratio_curve(power([0.0], 1.0, 1.5), cone, p, grid))[1e-4]
    gap = abs(rt / math.sqrt(2.0) - 1.0)
    ok = gap <= 0.01 and rp <= 0.02
    return ok, f"torsion ratio {rt:.6f} (sqrt2 gap {gap:.1e}); power(1.5) ratio {rp:.2e}", {
        "torsion_ratio": rt, "power_ratio": rp}


def criterion_8() -> tuple:
    ok = True
    metrics = {}
    parts = []
    frame = _frame1()
    for s in S_VALUES:
        p = FracParams(1, s)
        cases = [
            ("torsion", torsion([0.0], 1.0, s), Classification.HOLDS, -s),
            ("power(p=s)", power([0.0], 1.0, s), Classification.HOLDS, -s),
            ("power(p=3s)", power([0.0], 1.0, 3 * s), Classification.FAILS, s),
            ("zero", zero(1), Classification.FAILS, None),
            ("lincomb", _sign_changing(s), Classification.HOLDS, None),
        ]
        for name, u, want, slope in cases:
            rep = hopf_report(u, frame, p)
            dsv = rep.to_dict()
            got = rep.classification
            good = got == want
            fitted = _dsv_slope(rep)
            if slope is not None:
                good &= abs(fitted - slope) <= 0.05
            ok &= good
            metrics[f"s={s}:{name}"] = {"classification": got.value, "dsv_slope": _num(fitted),
                                        "kernel_diverged": dsv["kernel"]["diverged"]}
            if not good:
                parts.append(f"s={s} {name}: {got.value} slope {fitted:+.4f}")
    detail = "all regression fields classified as expected" if ok else "; ".join(parts)
    return ok, detail, metrics


def _dsv_slope(rep) -> float:
    return classify_dichotomy(rep.cone_curve, rep.dsv_curve).dsv_slope


def criterion_9() -> tuple:
    p = FracParams(1, 0.5)
    ball = BallSpec((0.0,), 1.0)
    nonneg = [box(2.0, 3.0), torsion([3.0], 1.0, 0.5), power([-3.0], 0.5, 1.5), bump([4.0], 1.0),
              zero(1)]
    ok = True
    metrics = {}
    for g in nonneg:
        res = hopf_condition_check(g, ball, p)
        ok &= res.passed and res.worst_value >= 0
        metrics[g.spec] = {"passed": res.passed, "worst_value": res.worst_value}
    neg = hopf_condition_check(lincomb([-1.0], [box(2.0, 3.0)]), ball, p)
    ok &= (not neg.passed) and neg.worst_value < 0
    metrics["-box(2,3)"] = {"passed": neg.passed, "worst_value": neg.worst_value,
                            "worst_point": list(neg.worst_point)}
    return ok, (f"nonnegative g pass; -box(2,3) fails with worst value {neg.worst_value:.4g} "
                f"at y={neg.worst_point[0]:.3f}"), metrics


def criterion_10() -> tuple:
    t0 = time.perf_counter()
    ok = True
    metrics = {}
    flat_worst = 0.0
    for s in S_VALUES:
        tab = scaling_check(Grid1D(-1.0, 1.0, 40), s, (0.5, 1.0, 2.0, 4.0))
        vals = np.array([v for _, v in tab])
        ok &= bool(np.all(vals > 0))
        flat_worst = max(flat_worst, float(np.max(np.abs(vals / vals[1] - 1.0))))
    ok &= flat_worst <= 1e-10
    grid = Grid1D(-1.0, 1.0, 400)
    forms = assemble_forms(grid, 0.5, "normalized")
    rq = rayleigh_quotient(torsion([0.0], 1.0, 0.5), grid, 0.5, "normalized", forms)
    lam = lambda1_estimate(forms)
    rq_gap = abs(rq / (3 * math.pi / 8) - 1.0)
    ok &= rq_gap <= 0.01 and 0 < lam <= rq
    monotone = True
    chains = {}
    for s in S_VALUES:
        g = Grid1D(-1.0, 1.0, 10)
        seq = []
        for _ in range(4):
            seq.append(lambda1_estimate(assemble_forms(g, s)))
            g = g.refined()
        chains[f"s={s}"] = seq
        monotone &= all(b <= a for a, b in zip(seq, seq[1:])) and seq[-1] > 0
    ok &= monotone
    elapsed = time.perf_counter() - t0
    ok &= elapsed <= 120.0
    metrics.update({"scaling_max_rel_dev": flat_worst, "rayleigh_torsion": rq,
                    "lambda1_normalized_n400": lam, "refinement": chains,
                    "within_120s": elapsed <= 120.0})
    return ok, (f"scaling flat to {flat_worst:.1e}; RQ {rq:.6f} vs 3pi/8 gap {rq_gap:.1e}; "
                f"lambda1 {lam:.6f} <= RQ; refinement {'non-increasing' if monotone else 'NOT monotone'}"
                ), metrics


def criterion_11() -> tuple:
    exact = power_tail_closed_form(1.0, 0.5, 1) == 2.0
    cases = []
    for s in S_VALUES:
        p = FracParams(1, s)
        cases.append((box(2.0, 3.0), [0.0], None, p))
        cases.append((lincomb([1.0, -0.5], [box(2.0, 3.0), box(-4.0, -3.0)]), [0.0], None, p))
        cases.append((_sign_changing(s), [1.0], [-1.0], p))
        cases.append((torsion([0.0], 1.0, s), [1.0], [-1.0], p))
    ok = exact
    checked = 0
    worst_margin = math.inf
    for u, x0, inward, p in cases:
        k = kernel_integral(u, x0, p, inward=inward)
        if k.far.diverged or not math.isfinite(k.far.value):
            continue
        bound = tail_lower_bound(u, k.split_radius, p)
        margin = k.far.value - bound
        worst_margin = min(worst_margin, margin)
        ok &= margin >= -k.far.error_bound
        checked += 1
    return ok, (f"closed form at (1, 0.5, 1) {'== 2' if exact else '!= 2'}; "
                f"{checked} far parts above the bound (min margin {worst_margin:.3g})"), {
        "closed_form_exact": exact, "far_parts_checked": checked, "min_margin": _num(worst_margin)}


CRITERIA = [
    (1, "torsion identity", criterion_1),
    (2, "constant convention", criterion_2),
    (3, "Poisson kernel mass", criterion_3),
    (4, "closed-form extension", criterion_4),
    (5, "quotient-kernel crosscheck", criterion_5),
    (6, "divergence at the boundary", criterion_6),
    (7, "cone ratio", criterion_7),
    (8, "dichotomy classifier", criterion_8),
    (9, "minimum-principle hypothesis", criterion_9),
    (10, "spectral", criterion_10),
    (11, "tail bound", criterion_11),
]


def run_criterion(number: int) -> CriterionResult:
    if number == 12:
        return _determinism()
    for n, title, fn in CRITERIA:
        if n == number:
            t0 = time.perf_counter()
            try:
                ok, detail, metrics = fn()
            except Exception as exc:  # a crash is a failure, not an abort
                ok, detail, metrics = False, f"error: {type(exc).__name__}: {exc}", {}
            return CriterionResult(n, title, bool(ok), detail, metrics,
                                   time.perf_counter() - t0)
    raise ValueError(f"no criterion {number}")


def _serialize(results) -> str:
    return json.dumps([r.to_dict() for r in results], indent=2, allow_nan=False)


def _determinism(reference: Optional[list] = None) -> CriterionResult:
    """Run criteria 1-11 twice (or once more against ``reference``) and
    compare the serialized results byte for byte."""
    t0 = time.perf_counter()
    first = reference if reference is not None else [run_criterion(n) for n, _, _ in CRITERIA]
    second = [run_criterion(n) for n, _, _ in CRITERIA]
    same = _serialize(first) == _serialize(second)
    return CriterionResult(12, "determinism", same,
                           "two runs serialize identically" if same else "runs differ",
                           {"identical": same}, time.perf_counter() - t0)


def run_suite(progress: Optional[Callable[[CriterionResult], None]] = None) -> list:
    results = []
    for n, _, _ in CRITERIA:
        r = run_criterion(n)
        results.append(r)
        if progress:
            progress(r)
    r = _determinism(results)
    results.append(r)
    if progress:
        progress(r)
    return results


def suite_to_dict(results) -> dict:
    return {"passed": all(r.passed for r in results),
            "criteria": [r.to_dict() for r in results]}


def suite_json(results) -> str:
    return json.dumps(suite_to_dict(results), indent=2, allow_nan=False)


def format_line(r: CriterionResult) -> str:
    return f"[{'PASS' if r.passed else 'FAIL'}] {r.number:2d} {r.title:<30s} {r.seconds:7.2f}s  {r.detail}"


def format_table(results) -> str:
    return "\n".join(format_line(r) for r in results)
