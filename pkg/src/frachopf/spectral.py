"""First Dirichlet eigenvalue on an interval from the Gagliardo Rayleigh
quotient, discretised with hat functions on a uniform grid.

On a uniform grid both forms are Toeplitz. With ``z = y - x`` the double
integral for hats ``i`` and ``i + k`` reduces to a single integral

    a(k) = 2 * int_0^inf z^{-1-2s} (2 R(k) - R(k + z) - R(k - z)) dz,

where ``R`` is the autocorrelation of the reference hat (the centred cubic
B-spline). ``R`` is a cubic with integer breakpoints, so on ``[0, 1]`` the
bracket is an even-plus-cubic polynomial and is integrated in closed form;
the remaining panels are regular and go to Gauss-Kronrod. For unit spacing
the entries are then scaled by ``h^{1-2s}``.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.linalg import cho_factor, cho_solve, toeplitz

from ._parallel import pmap
from .fields import FunctionField
from .quad import QuadSpec, integrate_interval
from .special import FracParams, frac_constants

__all__ = [
    "Grid1D",
    "FormPair",
    "Lambda1Result",
    "SpectralConvergenceError",
    "assemble_forms",
    "lambda1_solve",
    "lambda1_estimate",
    "scaling_check",
    "rayleigh_quotient",
    "interval_lambda1",
    "forms_to_csv",
    "scaling_to_csv",
]

CONVENTIONS = ("plain", "normalized")

# Coefficients (-1)^j C(4, j) of the cubic B-spline as a sum of truncated cubes.
_BSPLINE = (1.0, -4.0, 6.0, -4.0, 1.0)


class SpectralConvergenceError(RuntimeError):
    """Inverse iteration did not reach the requested tolerance."""

    def __init__(self, message: str, residual: float, iterations: int):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


@dataclass(frozen=True)
class Grid1D:
    """Uniform partition of ``[a, b]`` with ``n`` interior nodes.

    The two end nodes carry the Dirichlet value zero and have no basis
    function attached.
    """

    a: float
    b: float
    n: int

    def __post_init__(self):
        if not (math.isfinite(self.a) and math.isfinite(self.b)) or not self.a < self.b:
            raise ValueError(f"need finite a < b, got ({self.a}, {self.b})")
        if isinstance(self.n, bool) or int(self.n) != self.n or self.n < 2:
            raise ValueError(f"need n >= 2 interior nodes, got {self.n!r}")
        object.__setattr__(self, "a", float(self.a))
        object.__setattr__(self, "b", float(self.b))
        object.__setattr__(self, "n", int(self.n))

    @property
    def h(self) -> float:
        return (self.b - self.a) / (self.n + 1)

    @property
    def nodes(self) -> np.ndarray:
        """All ``n + 2`` nodes, end points included."""
        return np.linspace(self.a, self.b, self.n + 2)

    @property
    def interior(self) -> np.ndarray:
        return self.nodes[1:-1]

    def scaled(self, t: float) -> "Grid1D":
        """The grid of ``t * [a, b]`` with the same node count."""
        if not t > 0:
            raise ValueError("scale factor must be positive")
        return Grid1D(t * self.a, t * self.b, self.n)

    def refined(self) -> "Grid1D":
        """Nested refinement: every cell halved, ``n -> 2n + 1``."""
        return Grid1D(self.a, self.b, 2 * self.n + 1)

    def to_dict(self) -> dict:
        return {"a": self.a, "b": self.b, "n": self.n}


@dataclass(frozen=True)
class FormPair:
    gagliardo: np.ndarray
    mass: np.ndarray
    convention: str
    grid: Grid1D
    s: float
    warning: bool = False

    def to_dict(self) -> dict:
        return {
            "convention": self.convention,
            "grid": self.grid.to_dict(),
            "s": self.s,
            "warning": self.warning,
        }


def _hat_autocorrelation(x):
    """``R(x) = int phi(y) phi(y + x) dy`` for the unit hat on ``[-1, 1]``."""
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    for j, c in enumerate(_BSPLINE):
        out += c * np.maximum(x + 2.0 - j, 0.0) ** 3
    return out / 6.0


def _r_second(k: int) -> float:
    return float(sum(c * max(k + 2 - j, 0) for j, c in enumerate(_BSPLINE)))


def _r_third_jump(k: int) -> float:
    j = k + 2
    return _BSPLINE[j] if 0 <= j <= 4 else 0.0


def _reference_entry(k: int, s: float, spec: QuadSpec):
    """``a(k)`` for unit spacing; returns ``(value, warning)``."""
    k = abs(int(k))
    w = lambda z: z ** (-1.0 - 2.0 * s)  # noqa: E731
    if k >= 2:
        # Supports are disjoint: only the cross term survives.
        est = integrate_interval(lambda z: _hat_autocorrelation(z - k) * w(z),
                                 k - 2.0, k + 2.0, spec, points=range(k - 1, k + 2))
        return -2.0 * est.value, est.warning
    # On [0, 1]: 2R(k) - R(k+z) - R(k-z) = -R''(k) z^2 - jump R'''(k) z^3 / 6.
    near = -_r_second(k) / (2.0 - 2.0 * s) - _r_third_jump(k) / (6.0 * (3.0 - 2.0 * s))
    rk = float(_hat_autocorrelation(k))
    end = k + 2.0

    def bracket(z):
        return (2.0 * rk - _hat_autocorrelation(k + z) - _hat_autocorrelation(k - z)) * w(z)

    mid = integrate_interval(bracket, 1.0, end, spec, points=range(2, k + 2))
    tail = 2.0 * rk * end ** (-2.0 * s) / (2.0 * s)
    return 2.0 * (near + mid.value + tail), mid.warning


def assemble_forms(grid: Grid1D, s: float, convention: str = "plain",
                   spec: Optional[QuadSpec] = None) -> FormPair:
    """Gagliardo and mass matrices over the hat basis of ``grid``."""
    if not 0.0 < s < 1.0:
        raise ValueError(f"s must lie in (0, 1), got {s!r}")
    if convention not in CONVENTIONS:
        raise ValueError(f"convention must be one of {CONVENTIONS}, got {convention!r}")
    spec = spec or QuadSpec(rel_tol=1e-13, abs_tol=1e-300)
    entries = pmap(lambda k: _reference_entry(k, s, spec), range(grid.n))
    col = np.array([v for v, _ in entries])
    warn = any(wf for _, wf in entries)
    h = grid.h
    scale = h ** (1.0 - 2.0 * s)
    if convention == "normalized":
        scale *= frac_constants(FracParams(1, s)).c_ns / 2.0
    gag = toeplitz(col * scale)
    mcol = np.zeros(grid.n)
    mcol[0] = 2.0 / 3.0
    mcol[1] = 1.0 / 6.0
    mass = toeplitz(mcol * h)
    return FormPair(gag, mass, convention, grid, float(s), warn)


@dataclass(frozen=True)
class Lambda1Result:
    value: float
    vector: np.ndarray
    iterations: int
    residual: float

    def to_dict(self) -> dict:
        return {"lambda1": self.value, "iterations": self.iterations, "residual": self.residual}


def lambda1_solve(forms: FormPair, tol: float = 1e-13, max_iter: int = 10000) -> Lambda1Result:
    """Smallest generalised eigenpair of ``(gagliardo, mass)`` by inverse
    power iteration, stopped when the Rayleigh quotient changes by less than
    ``tol`` relative."""
    G, M = forms.gagliardo, forms.mass
    factor = cho_factor(G)
    x = np.ones(G.shape[0])
    x /= math.sqrt(x @ M @ x)
    lam = float(x @ G @ x)
    for it in range(1, max_iter + 1):
        y = cho_solve(factor, M @ x)
        y /= math.sqrt(y @ M @ y)
        new = float(y @ G @ y)
        x = y
        if abs(new - lam) <= tol * abs(new):
            lam = new
            res = float(np.linalg.norm(G @ x - lam * (M @ x)) / np.linalg.norm(G @ x))
            if x.sum() < 0:
                x = -x
            return Lambda1Result(lam, x, it, res)
        lam = new
    res = float(np.linalg.norm(G @ x - lam * (M @ x)) / np.linalg.norm(G @ x))
    raise SpectralConvergenceError(
        f"inverse iteration did not converge in {max_iter} steps (residual {res:.3g})",
        res, max_iter)


def lambda1_estimate(forms: FormPair, tol: float = 1e-13) -> float:
    """Estimate of the first eigenvalue (the discrete minimum of the quotient)."""
    return lambda1_solve(forms, tol).value


def scaling_check(base: Grid1D, s: float, t_factors: Sequence[float],
                  convention: str = "plain", tol: float = 1e-13) -> list:
    """Rows ``(t, lambda1(t * interval) * t^{2s})``; the second column
    should not depend on ``t``."""
    rows = []
    for t in t_factors:
        t = float(t)
        if not t > 0:
            raise ValueError("scale factors must be positive")
        lam = lambda1_estimate(assemble_forms(base.scaled(t), s, convention), tol)
        rows.append((t, lam * t ** (2.0 * s)))
    return rows


def _interpolant(u: FunctionField, grid: Grid1D) -> np.ndarray:
    if u.dimension != 1:
        raise ValueError("the spectral module works in one dimension")
    return u.values(grid.interior[:, None])


def rayleigh_quotient(u: FunctionField, grid: Grid1D, s: float, convention: str = "plain",
                      forms: Optional[FormPair] = None) -> float:
    """Gagliardo quotient of the nodal interpolant of ``u``."""
    x = _interpolant(u, grid)
    if not np.any(x != 0.0):
        raise ValueError("the nodal interpolant is identically zero")
    if forms is None:
        forms = assemble_forms(grid, s, convention)
    return float(x @ forms.gagliardo @ x) / float(x @ forms.mass @ x)


def interval_lambda1(center: float, r: float, s: float, n: int = 200,
                     convention: str = "plain") -> float:
    """First eigenvalue estimate of ``(center - r, center + r)``."""
    return lambda1_estimate(assemble_forms(Grid1D(center - r, center + r, n), s, convention))


def forms_to_csv(forms: FormPair) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["i", "j", "gagliardo", "mass"])
    n = forms.grid.n
    for i in range(n):
        for j in range(n):
            w.writerow([i, j, repr(float(forms.gagliardo[i, j])), repr(float(forms.mass[i, j]))])
    return buf.getvalue()


def scaling_to_csv(rows: Sequence[tuple]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["t", "lambda1_times_t2s"])
    for t, v in rows:
        w.writerow([repr(float(t)), repr(float(v))])
    return buf.getvalue()
