"""Gamma function and the normalizing constants of the fractional Laplacian,
the Poisson kernel of the extension problem and the torsion function."""

from __future__ import annotations

import math
from dataclasses import dataclass

__all__ = [
    "FracParams",
    "ConstantSet",
    "gamma_fn",
    "frac_constants",
    "printed_c_ns",
    "ball_volume",
]

# Lanczos coefficients for g = 7, n = 9.
_LANCZOS_G = 7.0
_LANCZOS_COEF = (
    0.99999999999980993,
    676.5203681218851,
    -1259.1392167224028,
    771.32342877765313,
    -176.61502916214059,
    12.507343278686905,
    -0.13857109526572012,
    9.9843695780195716e-6,
    1.5056327351493116e-7,
)


def gamma_fn(x: float) -> float:
    """Euler Gamma function for real ``x > 0``.

    Lanczos approximation (g=7, 9 terms); the reflection formula covers
    ``x < 0.5`` so the series is only ever evaluated on ``[0.5, inf)``.
    """
    x = float(x)
    if not x > 0.0 or math.isnan(x):
        raise ValueError(f"gamma_fn is defined here only for x > 0, got {x!r}")
    return _gamma_real(x)


def _gamma_real(x: float) -> float:
    if x < 0.5:
        return math.pi / (math.sin(math.pi * x) * _gamma_real(1.0 - x))
    z = x - 1.0
    acc = _LANCZOS_COEF[0]
    for k, c in enumerate(_LANCZOS_COEF[1:], start=1):
        acc += c / (z + k)
    t = z + _LANCZOS_G + 0.5
    return math.sqrt(2.0 * math.pi) * math.exp((z + 0.5) * math.log(t) - t) * acc


@dataclass(frozen=True)
class FracParams:
    """Space dimension ``N`` and fractional order ``s``."""

    N: int
    s: float

    def __post_init__(self):
        if isinstance(self.N, bool) or int(self.N) != self.N or self.N < 1:
            raise ValueError(f"N must be a positive integer, got {self.N!r}")
        if not 0.0 < self.s < 1.0:
            raise ValueError(f"s must lie in (0, 1), got {self.s!r}")
        object.__setattr__(self, "N", int(self.N))
        object.__setattr__(self, "s", float(self.s))

    @property
    def constants(self) -> "ConstantSet":
        return frac_constants(self)

    def to_dict(self) -> dict:
        return {"N": self.N, "s": self.s}


@dataclass(frozen=True)
class ConstantSet:
    c_ns: float
    p_ns: float
    p_ns_tilde: float
    gamma_ns: float
    omega_n: float

    def to_dict(self) -> dict:
        return {
            "c_ns": self.c_ns,
            "p_ns": self.p_ns,
            "p_ns_tilde": self.p_ns_tilde,
            "gamma_ns": self.gamma_ns,
            "omega_n": self.omega_n,
        }


def ball_volume(N: int) -> float:
    """Volume of the unit ball in R^N, by ``omega_N = 2 pi omega_{N-2} / N``
    from ``omega_0 = 1`` and ``omega_1 = 2`` (exact for N = 1)."""
    if N < 0 or int(N) != N:
        raise ValueError("N must be a nonnegative integer")
    w = 1.0 if N % 2 == 0 else 2.0
    for k in range(2 + N % 2, N + 1, 2):
        w *= 2.0 * math.pi / k
    return w


def frac_constants(params: FracParams) -> ConstantSet:
    """All constants attached to ``(N, s)``.

    ``c_ns`` is the constant for which the operator has Fourier symbol
    ``|xi|^{2s}``, i.e. ``(-Delta)^s (r^2 - |x|^2)_+^s * gamma_ns = 1``.
    """
    N, s = params.N, params.s
    half_n = N / 2.0
    g_ns = gamma_fn(half_n + s)
    c_ns = 4.0**s * math.pi ** (-half_n) * g_ns * s * (1.0 - s) / gamma_fn(2.0 - s)
    p_ns = math.pi ** (-half_n) * g_ns / gamma_fn(s)
    p_tilde = (2.0 * s) ** (2.0 * s) * p_ns
    gamma_ns = 4.0 ** (-s) * gamma_fn(half_n) / (g_ns * gamma_fn(1.0 + s))
    return ConstantSet(
        c_ns=c_ns,
        p_ns=p_ns,
        p_ns_tilde=p_tilde,
        gamma_ns=gamma_ns,
        omega_n=ball_volume(N),
    )


def printed_c_ns(params: FracParams) -> float:
    """The operator constant with ``pi^{+N/2}`` in place of ``pi^{-N/2}``.

    Kept only to diagnose the convention: it equals ``c_ns * pi^N``.
    """
    N, s = params.N, params.s
    return (
        math.pi ** (N / 2.0)
        * 4.0**s
        * gamma_fn(N / 2.0 + s)
        / gamma_fn(2.0 - s)
        * s
        * (1.0 - s)
    )
