"""Scalar fields on R^N used as inputs to the nonlocal operators.

A :class:`FunctionField` wraps a vectorized callable together with the
metadata the quadrature layer relies on: the radius of a centered ball
containing the support, a smoothness tag, and the parameters along a ray
where the field has kinks.
"""

from __future__ import annotations

import csv
import enum
import math
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np

from .special import FracParams, frac_constants

__all__ = [
    "FieldSpecError",
    "Smoothness",
    "FunctionField",
    "BallSpec",
    "SampledField1D",
    "torsion",
    "power",
    "box",
    "bump",
    "lincomb",
    "zero",
    "sampled",
    "make_field",
    "parse_field",
    "read_sampled_csv",
    "field_eval",
    "split_signs",
    "sup_norm_negative_part",
]


class FieldSpecError(ValueError):
    """Malformed field specification or field data."""


class Smoothness(enum.IntEnum):
    C0 = 0
    C2_INTERIOR = 1
    ANALYTIC = 2


def _no_kinks(origin, direction):
    return ()


@dataclass(frozen=True, eq=False)
class FunctionField:
    func: Callable[[np.ndarray], np.ndarray]
    dimension: int
    support_radius: float = math.inf
    smoothness: Smoothness = Smoothness.C0
    spec: str = "<callable>"
    kinks: Callable[[np.ndarray, np.ndarray], Sequence[float]] = field(default=_no_kinks)
    # Ball outside which the field vanishes, when the builder knows one.
    ball: Optional["BallSpec"] = None
    # For N = 2: angles of rays from an origin that graze a kink curve.
    tangents: Callable[[np.ndarray], Sequence[float]] = field(default=lambda o: ())
    # Optional cancellation-free evaluation along a ray: (origin, e, rho) -> values.
    ray_func: Optional[Callable[[np.ndarray, np.ndarray, np.ndarray], np.ndarray]] = None

    def __call__(self, x):
        return field_eval(self, x)

    def values(self, points: np.ndarray) -> np.ndarray:
        """Evaluate on an ``(m, N)`` array without shape checks."""
        return np.asarray(self.func(points), dtype=float)

    def ray_values(self, origin: np.ndarray, direction: np.ndarray, rho: np.ndarray) -> np.ndarray:
        """Values at ``origin + rho * direction`` for a 1-D array ``rho``."""
        if self.ray_func is not None:
            return np.asarray(self.ray_func(origin, direction, rho), dtype=float)
        return self.values(origin[None, :] + rho[:, None] * direction[None, :])

    def ray_kinks(self, origin, direction) -> list:
        """Sorted positive ray parameters ``t`` where ``origin + t*direction``
        crosses a kink of the field."""
        o = np.asarray(origin, dtype=float).reshape(self.dimension)
        e = np.asarray(direction, dtype=float).reshape(self.dimension)
        return sorted({float(t) for t in self.kinks(o, e) if t > 0 and math.isfinite(t)})

    def angle_kinks(self, origin, a: float, b: float) -> list:
        """Ray angles in ``(a, b)`` from ``origin`` (N = 2) along which the
        radial profile changes non-smoothly."""
        if self.dimension != 2:
            return []
        o = np.asarray(origin, dtype=float).reshape(2)
        out = set()
        for ang in self.tangents(o):
            k0 = math.floor((a - ang) / (2 * math.pi))
            for k in range(k0, k0 + 3):
                v = ang + 2 * math.pi * k
                if a < v < b:
                    out.add(float(v))
        return sorted(out)

    def ray_extent(self, origin, direction) -> float:
        """Ray parameter beyond which the field vanishes (inf if unbounded)."""
        if not math.isfinite(self.support_radius):
            return math.inf
        t = _sphere_hits(np.asarray(origin, float), np.asarray(direction, float),
                         np.zeros(self.dimension), self.support_radius)
        return max([0.0] + list(t))


@dataclass(frozen=True)
class BallSpec:
    center: tuple
    radius: float

    def __post_init__(self):
        c = tuple(float(v) for v in np.atleast_1d(np.asarray(self.center, dtype=float)))
        object.__setattr__(self, "center", c)
        if not self.radius > 0:
            raise ValueError("ball radius must be positive")
        object.__setattr__(self, "radius", float(self.radius))

    @property
    def dimension(self) -> int:
        return len(self.center)

    @property
    def center_array(self) -> np.ndarray:
        return np.array(self.center)

    def contains(self, x) -> bool:
        return float(np.linalg.norm(np.asarray(x, float) - self.center_array)) < self.radius


@dataclass(frozen=True)
class SampledField1D:
    nodes: tuple
    values: tuple

    def __post_init__(self):
        nodes = tuple(float(v) for v in self.nodes)
        values = tuple(float(v) for v in self.values)
        if len(nodes) != len(values):
            raise FieldSpecError("nodes and values must have equal length")
        if len(nodes) < 2:
            raise FieldSpecError("a sampled field needs at least two nodes")
        if any(b <= a for a, b in zip(nodes[:-1], nodes[1:])):
            raise FieldSpecError("sampled nodes must be strictly increasing")
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "values", values)


def _sphere_hits(o: np.ndarray, e: np.ndarray, c: np.ndarray, r: float):
    """Roots of ``|o + t e - c| = r`` (unit ``e``), computed without
    cancellation."""
    d = o - c
    b = float(np.dot(d, e))
    q = float(np.dot(d, d)) - r * r
    disc = b * b - q
    if disc < 0:
        return ()
    sq = math.sqrt(disc)
    if b > 0:
        t1 = -b - sq
        t2 = q / t1 if t1 != 0 else 0.0
    else:
        t2 = -b + sq
        t1 = q / t2 if t2 != 0 else 0.0
    return (min(t1, t2), max(t1, t2))


def _fmt(x: float) -> str:
    return repr(float(x))


def _fmt_point(c) -> str:
    return ",".join(_fmt(v) for v in c)


def _as_points(x, N: int) -> tuple:
    arr = np.asarray(x, dtype=float)
    if N == 1 and arr.ndim <= 1:
        pts = arr.reshape(-1, 1)
        return pts, arr.ndim == 0
    if arr.ndim == 1:
        if arr.shape[0] != N:
            raise ValueError(f"point of dimension {arr.shape[0]} given to a field on R^{N}")
        return arr.reshape(1, N), True
    if arr.ndim == 2 and arr.shape[1] == N:
        return arr, False
    raise ValueError(f"points of shape {arr.shape} do not match dimension {N}")


def field_eval(f: FunctionField, x):
    """Evaluate ``f`` at a point (returns float) or at an ``(m, N)`` array.

    For ``N = 1`` a 1-D array is read as ``m`` scalar points.
    """
    pts, single = _as_points(x, f.dimension)
    out = f.values(pts)
    if single:
        return float(out[0])
    return out


def _ball_field(center, r, profile, name, smoothness, extra="") -> FunctionField:
    c = np.atleast_1d(np.asarray(center, dtype=float))
    N = c.shape[0]
    r = float(r)
    if not r > 0:
        raise FieldSpecError(f"{name}: radius must be positive")

    def func(x):
        d2 = np.sum((x - c) ** 2, axis=1)
        inside = d2 < r * r
        out = np.zeros(x.shape[0])
        out[inside] = profile(r * r - d2[inside])
        return out

    def kinks(o, e):
        return _sphere_hits(o, e, c, r)

    def ray_func(o, e, rho):
        out = np.zeros(rho.shape[0])
        hits = _sphere_hits(o, e, c, r)
        if hits:
            t1, t2 = hits
            w = (rho - t1) * (t2 - rho)
            inside = w > 0
            out[inside] = profile(w[inside])
        return out

    def tangents(o):
        if N != 2:
            return ()
        d = c - o
        dist = float(np.hypot(d[0], d[1]))
        if dist < r * (1 - 1e-12):
            return ()
        phi = math.atan2(d[1], d[0])
        half = math.asin(min(1.0, r / dist))
        return (phi - half, phi + half, phi)

    return FunctionField(
        func=func,
        dimension=N,
        support_radius=float(np.linalg.norm(c)) + r,
        smoothness=smoothness,
        spec=f"{name}(center={_fmt_point(c)};r={_fmt(r)}{extra})",
        kinks=kinks,
        ball=BallSpec(tuple(c), r),
        tangents=tangents,
        ray_func=ray_func,
    )


def torsion(center, r: float, s: float) -> FunctionField:
    """``gamma_{N,s} (r^2 - |x - c|^2)_+^s``, whose fractional Laplacian is 1
    in the ball."""
    N = np.atleast_1d(np.asarray(center)).shape[0]
    g = frac_constants(FracParams(N, s)).gamma_ns
    f = _ball_field(center, r, lambda w: g * w**s, "torsion", Smoothness.C2_INTERIOR)
    return f


def power(center, r: float, p: float) -> FunctionField:
    """``(r^2 - |x - c|^2)_+^p`` without normalization."""
    if not p > 0:
        raise FieldSpecError("power: exponent must be positive")
    p = float(p)
    return _ball_field(center, r, lambda w: w**p, "power", Smoothness.C2_INTERIOR,
                       extra=f";p={_fmt(p)}")


def bump(center, r: float) -> FunctionField:
    """Smooth bump supported in the ball, equal to 1 on the sphere of radius
    ``r/2`` and larger inside it."""
    r = float(r)

    def profile(w):
        z2 = 1.0 - w / (r * r)
        return np.exp(4.0 / 3.0 - 1.0 / (1.0 - z2))

    return _ball_field(center, r, profile, "bump", Smoothness.ANALYTIC)


def box(a: float, b: float) -> FunctionField:
    """Indicator of ``[a, b]`` on the real line."""
    a, b = float(a), float(b)
    if not a < b:
        raise FieldSpecError("box: need a < b")

    def func(x):
        return ((x[:, 0] >= a) & (x[:, 0] <= b)).astype(float)

    def kinks(o, e):
        if e[0] == 0:
            return ()
        return ((a - o[0]) / e[0], (b - o[0]) / e[0])

    return FunctionField(func, 1, max(abs(a), abs(b)), Smoothness.C0,
                         f"box(a={_fmt(a)};b={_fmt(b)})", kinks)


def zero(N: int = 1) -> FunctionField:
    return FunctionField(lambda x: np.zeros(x.shape[0]), N, 0.0, Smoothness.ANALYTIC,
                         "lincomb()" if N == 1 else f"zero(N={N})")


def lincomb(coefficients: Sequence[float], fields: Sequence[FunctionField]) -> FunctionField:
    coefs = [float(c) for c in coefficients]
    fields = list(fields)
    if len(coefs) != len(fields):
        raise FieldSpecError("lincomb: coefficient and field counts differ")
    if not fields:
        return zero(1)
    N = fields[0].dimension
    if any(f.dimension != N for f in fields):
        raise FieldSpecError("lincomb: dimension mismatch between members")

    def func(x):
        out = np.zeros(x.shape[0])
        for c, f in zip(coefs, fields):
            out += c * f.values(x)
        return out

    def kinks(o, e):
        ts = []
        for f in fields:
            ts.extend(f.kinks(o, e))
        return ts

    def tangents(o):
        out = []
        for f in fields:
            out.extend(f.tangents(o))
        return out

    def ray_func(o, e, rho):
        out = np.zeros(rho.shape[0])
        for c, f in zip(coefs, fields):
            out += c * f.ray_values(o, e, rho)
        return out

    spec = "lincomb(" + "+".join(f"{_fmt(c)}*{f.spec}" for c, f in zip(coefs, fields)) + ")"
    return FunctionField(
        func, N,
        max(f.support_radius for f in fields),
        Smoothness(min(int(f.smoothness) for f in fields)),
        spec, kinks, tangents=tangents, ray_func=ray_func,
    )


def sampled(data: SampledField1D, spec: Optional[str] = None) -> FunctionField:
    """Piecewise-linear interpolant of the samples, zero outside the nodes."""
    xs = np.array(data.nodes)
    ys = np.array(data.values)

    def func(x):
        t = x[:, 0]
        out = np.interp(t, xs, ys)
        out[(t < xs[0]) | (t > xs[-1])] = 0.0
        return out

    def kinks(o, e):
        if e[0] == 0:
            return ()
        return tuple((xs - o[0]) / e[0])

    return FunctionField(func, 1, float(max(abs(xs[0]), abs(xs[-1]))), Smoothness.C0,
                         spec or f"sampled(n={len(xs)})", kinks)


def read_sampled_csv(path) -> SampledField1D:
    """Read a two-column ``x,value`` CSV file with a header row."""
    path = Path(path)
    try:
        handle = path.open("r", encoding="utf-8", newline="")
    except OSError as exc:
        raise FieldSpecError(f"{path}: cannot open ({exc.strerror})") from None
    nodes, values = [], []
    with handle:
        reader = csv.reader(handle)
        header = next(reader, None)
        if header is None or [h.strip().lower() for h in header] != ["x", "value"]:
            raise FieldSpecError(f"{path}:1: expected header 'x,value'")
        for row in reader:
            line = reader.line_num
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != 2:
                raise FieldSpecError(f"{path}:{line}: expected 2 columns, got {len(row)}")
            try:
                x, v = float(row[0]), float(row[1])
            except ValueError:
                raise FieldSpecError(f"{path}:{line}: non-numeric entry {row!r}") from None
            if not (math.isfinite(x) and math.isfinite(v)):
                raise FieldSpecError(f"{path}:{line}: non-finite entry {row!r}")
            if nodes and x <= nodes[-1]:
                raise FieldSpecError(f"{path}:{line}: nodes must be strictly ascending")
            nodes.append(x)
            values.append(v)
    if len(nodes) < 2:
        raise FieldSpecError(f"{path}: need at least two data rows")
    return SampledField1D(tuple(nodes), tuple(values))


# Field mini-grammar: torsion(center=..;r=..), power(..;p=..), box(a=..;b=..),
# bump(center=..;r=..), lincomb(c*spec+c*spec+...), csv(path).

_NUMBER = r"[-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?"


def _split_top(text: str, sep: str) -> list:
    parts, depth, cur = [], 0, []
    for i, ch in enumerate(text):
        if ch == "(":
            depth += 1
        elif ch == ")":
            depth -= 1
            if depth < 0:
                raise FieldSpecError(f"unbalanced ')' in {text!r}")
        if ch == sep and depth == 0:
            parts.append("".join(cur))
            cur = []
            continue
        cur.append(ch)
    if depth != 0:
        raise FieldSpecError(f"unbalanced '(' in {text!r}")
    parts.append("".join(cur))
    return parts


def _split_terms(text: str) -> list:
    """Split ``c*spec+c*spec`` at top-level '+' signs not inside exponents."""
    terms, depth, start = [], 0, 0
    for i, ch in enumerate(text):
        if ch == "(":
            depth += 1
        elif ch == ")":
            depth -= 1
        elif ch in "+-" and depth == 0 and i > start:
            prev = text[i - 1]
            if prev in "eE" and i >= 2 and (text[i - 2].isdigit() or text[i - 2] == "."):
                continue
            if prev == "*":
                continue
            terms.append(text[start:i])
            start = i + (1 if ch == "+" else 0)
    terms.append(text[start:])
    return [t for t in terms if t]


def _kwargs(body: str, name: str, required: Sequence[str]) -> dict:
    out = {}
    for item in _split_top(body, ";"):
        if not item:
            continue
        if "=" not in item:
            raise FieldSpecError(f"{name}: expected key=value, got {item!r}")
        k, v = item.split("=", 1)
        out[k] = v
    missing = [k for k in required if k not in out]
    extra = [k for k in out if k not in required]
    if missing or extra:
        raise FieldSpecError(f"{name}: expected keys {list(required)}, got {sorted(out)}")
    return out


def _real(text: str, key: str) -> float:
    if not re.fullmatch(_NUMBER, text):
        raise FieldSpecError(f"{key}: not a real number: {text!r}")
    return float(text)


def _reals(text: str, key: str) -> tuple:
    return tuple(_real(v, key) for v in text.split(","))


def parse_field(text: str, s: Optional[float] = None, base_dir=None) -> FunctionField:
    """Build a field from the textual mini-grammar.

    ``s`` is required for ``torsion``; ``base_dir`` resolves relative CSV
    paths.
    """
    raw = text
    text = re.sub(r"\s+", "", text)
    m = re.fullmatch(r"([a-z]+)\((.*)\)", text)
    if not m:
        raise FieldSpecError(f"malformed field spec {raw!r}")
    name, body = m.group(1), m.group(2)
    if name == "torsion":
        kw = _kwargs(body, name, ("center", "r"))
        if s is None:
            raise FieldSpecError("torsion needs the fractional order s")
        return torsion(_reals(kw["center"], "center"), _real(kw["r"], "r"), s)
    if name == "power":
        kw = _kwargs(body, name, ("center", "r", "p"))
        return power(_reals(kw["center"], "center"), _real(kw["r"], "r"), _real(kw["p"], "p"))
    if name == "bump":
        kw = _kwargs(body, name, ("center", "r"))
        return bump(_reals(kw["center"], "center"), _real(kw["r"], "r"))
    if name == "box":
        kw = _kwargs(body, name, ("a", "b"))
        return box(_real(kw["a"], "a"), _real(kw["b"], "b"))
    if name == "zero":
        kw = _kwargs(body, name, ("N",))
        return zero(int(_real(kw["N"], "N")))
    if name == "csv":
        if not body:
            raise FieldSpecError("csv: empty path")
        path = Path(body)
        if base_dir is not None and not path.is_absolute():
            path = Path(base_dir) / path
        return sampled(read_sampled_csv(path), spec=f"csv({body})")
    if name == "lincomb":
        if not body:
            return zero(1)
        coefs, members = [], []
        for term in _split_terms(body):
            cm = re.fullmatch(rf"({_NUMBER})\*(.+)", term)
            if not cm:
                raise FieldSpecError(f"lincomb: term {term!r} is not <real>*<spec>")
            coefs.append(float(cm.group(1)))
            members.append(parse_field(cm.group(2), s=s, base_dir=base_dir))
        return lincomb(coefs, members)
    raise FieldSpecError(f"unknown field builder {name!r}")


def make_field(spec, s: Optional[float] = None, base_dir=None) -> FunctionField:
    """Build a field from a grammar string, a :class:`SampledField1D`, or
    pass a ready :class:`FunctionField` through."""
    if isinstance(spec, FunctionField):
        return spec
    if isinstance(spec, SampledField1D):
        return sampled(spec)
    if isinstance(spec, str):
        return parse_field(spec, s=s, base_dir=base_dir)
    raise FieldSpecError(f"cannot build a field from {type(spec).__name__}")


def split_signs(f: FunctionField) -> tuple:
    """Positive and negative parts ``(max(f, 0), max(-f, 0))``."""
    pos = FunctionField(lambda x: np.maximum(f.values(x), 0.0), f.dimension, f.support_radius,
                        Smoothness.C0, f"pos({f.spec})", f.kinks, tangents=f.tangents,
                        ray_func=lambda o, e, r: np.maximum(f.ray_values(o, e, r), 0.0))
    neg = FunctionField(lambda x: np.maximum(-f.values(x), 0.0), f.dimension, f.support_radius,
                        Smoothness.C0, f"neg({f.spec})", f.kinks, tangents=f.tangents,
                        ray_func=lambda o, e, r: np.maximum(-f.ray_values(o, e, r), 0.0))
    return pos, neg


def _default_probe(f: FunctionField, n: int) -> np.ndarray:
    R = f.support_radius
    if not math.isfinite(R):
        raise ValueError("an explicit probe is required for fields of unbounded support")
    R = max(R, 1e-12)
    axis = np.linspace(-R, R, n)
    if f.dimension == 1:
        return axis[:, None]
    grids = np.meshgrid(*([axis] * f.dimension), indexing="ij")
    return np.stack([g.ravel() for g in grids], axis=1)


def sup_norm_negative_part(f: FunctionField, probe=None) -> float:
    """Largest value of ``max(-f, 0)`` over the probe points.

    This is a lower estimate of the sup norm of the negative part. ``probe``
    is an ``(m, N)`` array of points or an integer count of grid points per
    axis on the box enclosing the support (default 4001 in 1-D, 201 in 2-D).
    """
    if probe is None:
        probe = 4001 if f.dimension == 1 else 201
    if isinstance(probe, (int, np.integer)):
        if probe < 1:
            raise ValueError("empty probe")
        pts = _default_probe(f, int(probe))
    else:
        pts, _ = _as_points(probe, f.dimension)
        if pts.shape[0] == 0:
            raise ValueError("empty probe")
    return float(max(0.0, np.max(-f.values(pts))))
