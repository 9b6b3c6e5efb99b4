"""Command-line entry point ``frachopf``.

A run is described by one JSON config document; flags override single
entries. The resolved config is embedded in every JSON report.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__
from .extension import curve_to_csv, default_t_grid, quotient_curve, quotient_limit
from .fields import FieldSpecError, parse_field
from .hopf import (
    ConeSpec,
    HopfGrids,
    InteriorBallFrame,
    classify_dichotomy,
    cone_ratio_curve,
    dsv_curve,
    hopf_report,
    report_to_csv,
)
from .nonlocal_ops import frac_laplacian_at, kernel_integral
from .quad import QuadSpec
from .spectral import (
    CONVENTIONS,
    Grid1D,
    SpectralConvergenceError,
    assemble_forms,
    lambda1_solve,
    rayleigh_quotient,
    scaling_check,
    scaling_to_csv,
)
from .special import FracParams

COMMANDS = ("flap", "extend", "hopf", "dichotomy", "lambda1", "selfcheck")
FORMATS = ("json", "csv")
S_RANGE = (0.05, 0.95)

EXIT_OK, EXIT_WARN, EXIT_INPUT = 0, 1, 2


class ConfigError(ValueError):
    """Malformed or out-of-range configuration."""


@dataclass
class RunConfig:
    command: str
    params: Optional[FracParams]
    field_spec: Optional[str] = None
    points: Optional[list] = None
    x0: Optional[tuple] = None
    inward: Optional[tuple] = None
    max_radius: float = 1.0
    beta: float = math.pi / 4
    grids: HopfGrids = field(default_factory=HopfGrids)
    quad: QuadSpec = field(default_factory=QuadSpec)
    spectral: dict = field(default_factory=dict)
    out: Optional[str] = None
    format: str = "json"
    base_dir: Optional[str] = None
    raw: dict = field(default_factory=dict)

    def resolved(self) -> dict:
        """Every input that affects the numbers, after defaults."""
        d = {"command": self.command}
        if self.params is not None:
            d.update(self.params.to_dict())
        if self.field_spec is not None:
            d["field"] = self.field_spec
        if self.command == "flap":
            d["points"] = self.points
        if self.command in ("extend", "hopf", "dichotomy"):
            d["x0"] = list(self.x0)
            d["inward"] = list(self.inward)
            d["max_radius"] = self.max_radius
        if self.command in ("hopf", "dichotomy"):
            frame = InteriorBallFrame(self.x0, self.inward, self.max_radius)
            g = self.grids.resolve(frame)
            d["beta"] = self.beta
            d["grids"] = {"d_grid": list(g.d_grid), "r_grid": list(g.r_grid),
                          "samples_per_ball": g.samples_per_ball}
            if self.command == "hopf":
                d["grids"]["t_grid"] = list(g.t_grid)
        if self.command == "extend":
            d["t_grid"] = list(self._t_grid())
        if self.command == "lambda1":
            d["spectral"] = self.spectral
        if self.command not in ("selfcheck", "lambda1"):
            d["quad"] = self.quad.to_dict()
        d["format"] = self.format
        return d

    def _t_grid(self):
        g = self.grids.t_grid
        return tuple(float(v) for v in (g if g is not None else default_t_grid()))


def _reals(value, key: str) -> tuple:
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        value = [value]
    if not isinstance(value, (list, tuple)) or not value:
        raise ConfigError(f"'{key}' must be a number or a list of numbers")
    out = []
    for v in value:
        if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
            raise ConfigError(f"'{key}' must contain finite numbers, got {v!r}")
        out.append(float(v))
    return tuple(out)


def _grid(value, key: str):
    if value is None:
        return None
    if isinstance(value, dict):
        try:
            g = default_t_grid(float(value.get("max", 1e-1)), float(value.get("min", 1e-4)),
                               int(value.get("per_decade", 12)))
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad '{key}': {exc}") from None
        return tuple(float(v) for v in g)
    vals = _reals(value, key)
    if any(v <= 0 for v in vals) or any(b >= a for a, b in zip(vals[:-1], vals[1:])):
        raise ConfigError(f"'{key}' must be positive and strictly decreasing")
    return vals


def _number(raw: dict, key: str, default, kind=float):
    v = raw.get(key, default)
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(f"'{key}' must be a number, got {v!r}")
    if kind is int and int(v) != v:
        raise ConfigError(f"'{key}' must be an integer, got {v!r}")
    return kind(v)


def build_config(raw: dict, base_dir: Optional[str] = None) -> RunConfig:
    """Validate a raw config mapping into a :class:`RunConfig`."""
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    command = raw.get("command")
    if command not in COMMANDS:
        raise ConfigError(f"command must be one of {', '.join(COMMANDS)}, got {command!r}")
    fmt = raw.get("format", "json")
    if fmt not in FORMATS:
        raise ConfigError(f"format must be json or csv, got {fmt!r}")
    cfg = RunConfig(command=command, params=None, format=fmt, out=raw.get("out"),
                    base_dir=base_dir, raw=raw)
    if command == "selfcheck":
        return cfg

    N = _number(raw, "N", 1, int)
    s = _number(raw, "s", 0.5)
    if command == "lambda1":
        if N != 1:
            raise ConfigError("lambda1 works in one dimension only (N = 1)")
    elif N not in (1, 2):
        raise ConfigError(f"N must be 1 or 2, got {N}")
    if not S_RANGE[0] <= s <= S_RANGE[1]:
        raise ConfigError(f"s must lie in [{S_RANGE[0]}, {S_RANGE[1]}], got {s}")
    cfg.params = FracParams(N, s)

    q = raw.get("quad", {})
    if not isinstance(q, dict):
        raise ConfigError("'quad' must be an object")
    unknown = set(q) - {"rel_tol", "abs_tol", "max_subdivisions", "truncation_radius"}
    if unknown:
        raise ConfigError(f"unknown quad keys: {', '.join(sorted(unknown))}")
    try:
        cfg.quad = QuadSpec(**q)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad quad spec: {exc}") from None

    spec_text = raw.get("field")
    if command == "lambda1":
        sp = raw.get("spectral", {})
        if not isinstance(sp, dict):
            raise ConfigError("'spectral' must be an object")
        a = _number(sp, "a", -1.0)
        b = _number(sp, "b", 1.0)
        n = _number(sp, "n", 200, int)
        conv = sp.get("convention", "plain")
        if conv not in CONVENTIONS:
            raise ConfigError(f"convention must be plain or normalized, got {conv!r}")
        tf = _reals(sp.get("t_factors", [0.5, 1.0, 2.0, 4.0]), "t_factors")
        if any(t <= 0 for t in tf):
            raise ConfigError("t_factors must be positive")
        tol = _number(sp, "tol", 1e-13)
        try:
            Grid1D(a, b, n)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        cfg.spectral = {"a": a, "b": b, "n": n, "convention": conv, "t_factors": list(tf),
                        "tol": tol}
        if spec_text is not None:
            cfg.field_spec = _check_field(spec_text, s, N, base_dir)
        return cfg

    if spec_text is None:
        raise ConfigError(f"command {command} needs a 'field'")
    cfg.field_spec = _check_field(spec_text, s, N, base_dir)

    if command == "flap":
        pts = raw.get("points")
        if not isinstance(pts, list) or not pts:
            raise ConfigError("flap needs a non-empty list 'points'")
        cfg.points = []
        for p in pts:
            v = _reals(p, "points")
            if len(v) != N:
                raise ConfigError(f"point {list(v)} does not have dimension {N}")
            cfg.points.append(list(v))
        return cfg

    x0 = _reals(raw.get("x0", [1.0] + [0.0] * (N - 1)), "x0")
    inward = _reals(raw.get("inward", [-1.0] + [0.0] * (N - 1)), "inward")
    if len(x0) != N or len(inward) != N:
        raise ConfigError(f"x0 and inward must have dimension {N}")
    max_radius = _number(raw, "max_radius", 1.0)
    beta = _number(raw, "beta", math.pi / 4)
    try:
        frame = InteriorBallFrame(x0, inward, max_radius)
        ConeSpec(frame, beta)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    cfg.x0, cfg.inward = frame.x0, frame.inward
    cfg.max_radius, cfg.beta = frame.max_radius, beta
    spb = _number(raw, "samples_per_ball", 9, int)
    if spb < 1:
        raise ConfigError("samples_per_ball must be >= 1")
    cfg.grids = HopfGrids(_grid(raw.get("d_grid"), "d_grid"), _grid(raw.get("r_grid"), "r_grid"),
                          _grid(raw.get("t_grid"), "t_grid"), spb)
    return cfg


def _check_field(text, s, N, base_dir) -> str:
    if not isinstance(text, str):
        raise ConfigError("'field' must be a string in the field grammar")
    try:
        f = parse_field(text, s=s, base_dir=base_dir)
    except (FieldSpecError, OSError, ValueError) as exc:
        raise ConfigError(f"bad field spec: {exc}") from None
    if f.dimension != N:
        raise ConfigError(f"field has dimension {f.dimension}, config has N = {N}")
    return text


def _field(cfg: RunConfig):
    return parse_field(cfg.field_spec, s=cfg.params.s, base_dir=cfg.base_dir)


def _frame(cfg: RunConfig) -> InteriorBallFrame:
    return InteriorBallFrame(cfg.x0, cfg.inward, cfg.max_radius)


def _csv_rows(header, rows) -> str:
    lines = [",".join(header)]
    for r in rows:
        lines.append(",".join(repr(v) if isinstance(v, float) else str(v) for v in r))
    return "\n".join(lines) + "\n"


def _run_flap(cfg):
    u = _field(cfg)
    rows, warn = [], False
    for x in cfg.points:
        try:
            e = frac_laplacian_at(u, x, cfg.params, cfg.quad)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        warn |= e.warning or e.diverged
        rows.append({"x": x, **e.to_dict()})
    csv_text = _csv_rows(["x" + str(i) for i in range(cfg.params.N)] + ["value", "error_bound"],
                         [tuple(r["x"]) + (float(r["value"]), float(r["error_bound"]))
                          for r in rows])
    return {"results": rows}, csv_text, warn


def _run_extend(cfg):
    u = _field(cfg)
    p = cfg.params
    curve = quotient_curve(u, cfg.x0, p, cfg._t_grid(), cfg.quad)
    kern = kernel_integral(u, cfg.x0, p, cfg.quad, inward=cfg.inward, beta=cfg.beta,
                           split_radius=0.5 * cfg.max_radius)
    lim = quotient_limit(curve, kern, p)
    warn = curve.warning or lim.warning
    body = {"quotient_curve": curve.to_dict(), "limit": lim.to_dict(), "kernel": kern.to_dict()}
    meta = {"field": cfg.field_spec, "N": p.N, "s": p.s, "x0": list(cfg.x0),
            "fitted_slope": curve.fitted_slope}
    return body, curve_to_csv(curve, meta), warn


def _run_hopf(cfg):
    u = _field(cfg)
    rep = hopf_report(u, _frame(cfg), cfg.params, cfg.beta, cfg.grids, cfg.quad)
    warn = rep.classification.value == "Indeterminate" or rep.quotient_curve.warning \
        or rep.kernel.estimate.warning
    return rep.to_dict(), report_to_csv(rep), warn


def _run_dichotomy(cfg):
    u = _field(cfg)
    frame = _frame(cfg)
    g = cfg.grids.resolve(frame)
    cone_c = cone_ratio_curve(u, ConeSpec(frame, cfg.beta), cfg.params, g.d_grid)
    dsv_c = dsv_curve(u, frame, cfg.params, g.r_grid, g.samples_per_ball)
    verdict = classify_dichotomy(cone_c, dsv_c)
    body = verdict.to_dict()
    body["cone_curve"] = [{"distance": a, "value": b} for a, b in cone_c]
    body["dsv_curve"] = [{"r": a, "value": b} for a, b in dsv_c]
    rows = [("cone", a, b) for a, b in cone_c] + [("dsv", a, b) for a, b in dsv_c]
    csv_text = _csv_rows(["curve", "abscissa", "value"],
                         [(c, float(a), float(b)) for c, a, b in rows])
    return body, csv_text, verdict.classification.value == "Indeterminate"


def _run_lambda1(cfg):
    sp = cfg.spectral
    s = cfg.params.s
    grid = Grid1D(sp["a"], sp["b"], sp["n"])
    forms = assemble_forms(grid, s, sp["convention"])
    res = lambda1_solve(forms, sp["tol"])
    table = scaling_check(grid, s, sp["t_factors"], sp["convention"], sp["tol"])
    base = dict(table).get(1.0, res.value)
    body = {"grid": grid.to_dict(), "convention": sp["convention"], **res.to_dict(),
            "assembly_warning": forms.warning,
            "scaling": [{"t": t, "lambda1_times_t2s": v, "ratio_to_base": v / base}
                        for t, v in table]}
    if cfg.field_spec is not None:
        try:
            body["rayleigh_quotient"] = rayleigh_quotient(_field(cfg), grid, s, sp["convention"],
                                                          forms)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
    return body, scaling_to_csv(table), forms.warning


def _run_selfcheck(cfg):
    from .acceptance import format_line, run_suite, suite_to_dict

    results = run_suite(progress=lambda r: print(format_line(r), flush=True))
    body = suite_to_dict(results)
    rows = [(r.number, r.title, "PASS" if r.passed else "FAIL") for r in results]
    return body, _csv_rows(["criterion", "title", "status"], rows), not body["passed"]


_DISPATCH = {
    "flap": _run_flap,
    "extend": _run_extend,
    "hopf": _run_hopf,
    "dichotomy": _run_dichotomy,
    "lambda1": _run_lambda1,
    "selfcheck": _run_selfcheck,
}


def _json_safe(obj):
    if isinstance(obj, float):
        if math.isnan(obj):
            return "nan"
        if math.isinf(obj):
            return "+inf" if obj > 0 else "-inf"
        return obj
    if isinstance(obj, dict):
        return {k: _json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_safe(v) for v in obj]
    if isinstance(obj, np.generic):
        return _json_safe(obj.item())
    return obj


def render(cfg: RunConfig, body: dict, csv_text: str, warn: bool) -> str:
    if cfg.format == "csv":
        return csv_text
    doc = {"version": __version__, "command": cfg.command, "warning": bool(warn),
           "resolved_config": cfg.resolved(), "report": body}
    return json.dumps(_json_safe(doc), indent=2, allow_nan=False) + "\n"


def write_atomic(path: str, text: str) -> None:
    """Write via a temporary file in the target directory and rename."""
    target = Path(path)
    fd, tmp = tempfile.mkstemp(dir=target.parent if str(target.parent) else ".",
                               prefix=f".{target.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, target)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def run(cfg: RunConfig) -> tuple:
    """Execute ``cfg``; returns ``(exit status, rendered report)``.

    The report is written to ``cfg.out`` when set. Input errors raise
    :class:`ConfigError` before anything is written.
    """
    try:
        body, csv_text, warn = _DISPATCH[cfg.command](cfg)
    except SpectralConvergenceError as exc:
        body, csv_text, warn = {"error": str(exc), "residual": exc.residual}, "", True
    text = render(cfg, body, csv_text, warn)
    if cfg.out:
        write_atomic(cfg.out, text)
    return (EXIT_WARN if warn else EXIT_OK), text


def _parse_override(text: str):
    key, sep, value = text.partition("=")
    if not sep or not key:
        raise ConfigError(f"--set expects key=value, got {text!r}")
    try:
        parsed = json.loads(value)
    except json.JSONDecodeError:
        parsed = value
    return key.strip(), parsed


def _set_path(raw: dict, dotted: str, value) -> None:
    parts = dotted.split(".")
    node = raw
    for p in parts[:-1]:
        nxt = node.get(p)
        if not isinstance(nxt, dict):
            nxt = {}
            node[p] = nxt
        node = nxt
    node[parts[-1]] = value


def make_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="frachopf",
        description="Fractional Laplacian, Poisson extension and boundary-growth diagnostics.")
    ap.add_argument("--version", action="version", version=f"frachopf {__version__}")
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("--config", help="JSON config file")
    ap.add_argument("--out", help="output path (default: standard output)")
    ap.add_argument("--format", choices=FORMATS, help="report format (default json)")
    ap.add_argument("--field", help="field spec, overrides the config")
    ap.add_argument("--N", type=int, help="dimension, overrides the config")
    ap.add_argument("--s", type=float, help="fractional order, overrides the config")
    ap.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                    help="override any config entry (dotted keys, JSON values)")
    return ap


def _load(args) -> tuple:
    raw, base = {}, None
    if args.config:
        path = Path(args.config)
        try:
            raw = json.loads(path.read_text(encoding="utf-8"))
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config {path} is not valid JSON: {exc.msg} "
                              f"(line {exc.lineno})") from None
        if not isinstance(raw, dict):
            raise ConfigError("config must be a JSON object")
        base = str(path.resolve().parent)
    raw = dict(raw)
    raw["command"] = args.command
    for item in args.set:
        k, v = _parse_override(item)
        _set_path(raw, k, v)
    for key in ("field", "N", "s", "out", "format"):
        v = getattr(args, key)
        if v is not None:
            raw[key] = v
    return raw, base


def main(argv=None) -> int:
    args = make_parser().parse_args(argv)
    try:
        raw, base = _load(args)
        cfg = build_config(raw, base)
        status, text = run(cfg)
    except (ConfigError, ValueError) as exc:
        # Precondition failures inside the modules are input errors too.
        print(f"frachopf: error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    if not cfg.out and cfg.command != "selfcheck":
        sys.stdout.write(text)
    elif not cfg.out:
        print("all criteria passed" if status == EXIT_OK else "some criteria FAILED")
    return status


if __name__ == "__main__":
    sys.exit(main())
