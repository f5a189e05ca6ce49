"""Command-line entry point: JSON job configs in, JSON reports out.

Usage::

    nakano <command> --config job.json [--set key.path=value]... [--threads N] [--out report.json]
    nakano validate --config job.json

Exit status is 0 when a job completes, 1 when it completes with a
mathematical negative (an indefinite verdict, a violated falsifier, an
estimate that fails, an inconsistent pushforward) and 2 on any error.  Every
report carries ``"schema": 1`` and the fully resolved config.

A config looks like::

    {
      "command": "check-nakano",
      "grid": {"mins": [-1, -1], "maxs": [1, 1], "points": [41, 41]},
      "fields": {"g": [["exp(-x1^2)", "0"], ["0", "exp(x1^2)"]]},
      "tolerances": {"tau": 1e-7},
      "output": "report.json"
    }

Field values are expressions in x1..xn (y1..ym for the fiber axes of a
``prekopa`` job), numbers, or ``{"file": path}`` pointing to a sampled field
written by :mod:`nakano.fieldio`.  Relative paths resolve against the
config file's directory.
"""
from __future__ import annotations

import argparse
import copy
import json
import os
import sys
import time
import warnings

import numpy as np

from . import expr as ex
from .constructions import (DEFAULT_SCHEDULE, TAU_VIOL, FalsifierConfig, default_config, falsify_scan,
                            plateau_cutoff, prekopa_pushforward, prekopa_verify)
from .diffops import curvature_tensor, d0, gram_field
from .errors import ConfigError, FieldFileError, NakanoError, ShapeError
from .fieldio import read_field, write_field
from .fields import (GridSpec, MatrixField, OneForm, ScalarField, SectionField, check_metric_values,
                     default_names, joint_names, sample_metric, sample_oneform, sample_scalar,
                     sample_section)
from .positivity import DEFAULT_TAU, INDEFINITE, convexity_verdict, nakano_verdict
from .quadrature import QuadratureRule, inner_sections
from .solver import (COLLAR, EPS_REP, TAU_CLOSED, TAU_CONV, bochner_residual, check_optimal_estimate,
                     closedness_residual, minimal_solution, solve_potential)

SCHEMA = 1

COMMANDS = ("curvature", "check-nakano", "check-convex", "solve-d", "check-estimate", "bochner",
            "falsify", "prekopa")

DEFAULT_TOLERANCES = {
    "tau": DEFAULT_TAU,
    "tau_closed": TAU_CLOSED,
    "tau_conv": TAU_CONV,
    "eps_rep": EPS_REP,
    "tau_viol": TAU_VIOL,
    "truncation": 1e-10,
    "collar": COLLAR,
    "tau_sym": None,
    "tau_pd": None,
}

# which field keys each command reads; tuples are alternatives
REQUIRED = {
    "curvature": [("g", "phi", "weights")],
    "check-nakano": [("g", "phi", "weights")],
    "check-convex": [("phi",)],
    "solve-d": [("f", "v")],
    "check-estimate": [("g", "phi", "weights"), ("psi",), ("f", "v")],
    "bochner": [("g", "phi", "weights"), ("alpha",)],
    "falsify": [("g", "phi", "weights")],
    "prekopa": [("g_tilde", "phi_tilde")],
}

TOP_KEYS = {"command", "grid", "fields", "tolerances", "falsifier", "prekopa", "strict", "output",
            "trace_csv", "u_out", "g_out"}


# ---------------------------------------------------------------- config


def load_config(path) -> dict:
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    if not isinstance(cfg, dict):
        raise ConfigError("config must be a JSON object")
    return cfg


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_overrides(cfg: dict, assignments) -> dict:
    """Apply ``key.path=value`` overrides; values are parsed as JSON when possible."""
    cfg = copy.deepcopy(cfg)
    for item in assignments or ():
        key, sep, raw = item.partition("=")
        if not sep or not key:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        parts = key.split(".")
        node = cfg
        for p in parts[:-1]:
            if isinstance(node, list):
                node = node[int(p)]
                continue
            nxt = node.get(p)
            if nxt is None:
                nxt = node[p] = {}
            if not isinstance(nxt, (dict, list)):
                raise ConfigError(f"--set {key}: {p} is not an object")
            node = nxt
        if isinstance(node, list):
            node[int(parts[-1])] = _parse_value(raw)
        else:
            node[parts[-1]] = _parse_value(raw)
    return cfg


def _grid(cfg: dict) -> GridSpec:
    spec = cfg.get("grid")
    if not isinstance(spec, dict):
        raise ConfigError("config needs a grid object with mins, maxs, points")
    try:
        mins, maxs, points = spec["mins"], spec["maxs"], spec["points"]
    except KeyError as exc:
        raise ConfigError(f"grid is missing {exc.args[0]}") from exc
    n = len(mins) if isinstance(mins, list) else (len(points) if isinstance(points, list) else 1)
    as_list = (lambda v: list(v) if isinstance(v, list) else [v] * n)
    return GridSpec(tuple(float(v) for v in as_list(mins)), tuple(float(v) for v in as_list(maxs)),
                    tuple(int(v) for v in as_list(points)))


def _tolerances(cfg: dict) -> dict:
    given = cfg.get("tolerances") or {}
    unknown = set(given) - set(DEFAULT_TOLERANCES)
    if unknown:
        raise ConfigError("unknown tolerance(s): " + ", ".join(sorted(unknown)))
    tol = dict(DEFAULT_TOLERANCES)
    tol.update(given)
    return tol


def _resolve(path, base):
    return path if os.path.isabs(path) else os.path.join(base, path)


class _Ctx:
    """Resolves field specs against one grid and variable naming."""

    def __init__(self, cfg, base, grid, names, tol):
        self.fields = cfg.get("fields") or {}
        self.base = base
        self.grid = grid
        self.names = names
        self.tol = tol

    def _file(self, spec, kind):
        field = read_field(_resolve(spec["file"], self.base))
        if not isinstance(field, kind):
            raise FieldFileError(f"{spec['file']} holds a {type(field).__name__}, expected {kind.__name__}")
        if field.grid != self.grid:
            raise FieldFileError(f"{spec['file']} lives on a different grid")
        return field

    def scalar(self, key) -> ScalarField:
        spec = self.fields[key]
        if isinstance(spec, dict):
            return self._file(spec, ScalarField)
        return sample_scalar(str(spec), self.grid, self.names)

    def metric(self, keys=("g", "phi", "weights")) -> MatrixField:
        g_key, phi_key, w_key = keys
        tps, tpd = self.tol["tau_sym"], self.tol["tau_pd"]
        f = self.fields
        if g_key in f:
            spec = f[g_key]
            if isinstance(spec, dict):
                m = self._file(spec, MatrixField)
                return MatrixField(m.grid, check_metric_values(m.values, tps, tpd))
            if not isinstance(spec, list) or not all(isinstance(row, list) for row in spec):
                raise ShapeError(f"{g_key} must be an r x r array of expressions")
            return sample_metric([[str(e) for e in row] for row in spec], self.grid, tps, tpd, self.names)
        if phi_key in f:
            return MatrixField.from_weight(self.scalar(phi_key), int(f.get("rank", 1)))
        if w_key in f:
            ws = [sample_scalar(str(e), self.grid, self.names) for e in f[w_key]]
            return MatrixField.diagonal(ws)
        raise ConfigError(f"a metric is required ({g_key}, {phi_key} or {w_key})")

    def _cutoff(self):
        sup = self.fields.get("support")
        if sup is None:
            return None
        return plateau_cutoff(sup["center"], float(sup["radius"]), self.grid).values

    def oneform(self, key) -> OneForm:
        spec = self.fields[key]
        if isinstance(spec, dict):
            form = self._file(spec, OneForm)
        else:
            form = sample_oneform([[str(e) for e in comp] for comp in spec], self.grid, self.names)
        chi = self._cutoff()
        if chi is not None:
            form = OneForm(self.grid, form.components * chi[None, ..., None])
        return form

    def exact_form(self) -> OneForm:
        """``f`` given directly, or ``d0`` of the potential ``v`` (cut off before differentiation)."""
        if "f" in self.fields:
            return self.oneform("f")
        spec = self.fields["v"]
        if isinstance(spec, dict):
            v = self._file(spec, SectionField)
        else:
            v = sample_section([str(e) for e in spec], self.grid, self.names)
        chi = self._cutoff()
        if chi is not None:
            v = SectionField(self.grid, v.values * chi[..., None])
        return d0(v)


# ---------------------------------------------------------------- validation


def _check_expr(text, where, out):
    try:
        ex.parse(str(text))
    except NakanoError as exc:
        out.append(f"{where}: {exc}")


def _check_field(key, spec, base, out):
    if isinstance(spec, dict):
        if "file" not in spec:
            out.append(f"fields.{key}: object form needs a 'file' key")
        elif not os.path.exists(_resolve(str(spec["file"]), base)):
            out.append(f"fields.{key}: file not found: {spec['file']}")
        return
    if isinstance(spec, list):
        for i, row in enumerate(spec):
            if isinstance(row, list):
                for j, e in enumerate(row):
                    _check_expr(e, f"fields.{key}[{i}][{j}]", out)
            else:
                _check_expr(row, f"fields.{key}[{i}]", out)
        return
    _check_expr(spec, f"fields.{key}", out)


def validate_config(cfg: dict, base: str = ".", command: str = None) -> list:
    """Dry-run checks without numerics; returns human-readable diagnostics."""
    out = []
    cmd = cfg.get("command")
    if command is not None and cmd is not None and cmd != command:
        out.append(f"command mismatch: argument {command!r} vs config {cmd!r}")
    cmd = cmd or command
    if cmd not in COMMANDS:
        out.append(f"command must be exactly one of {', '.join(COMMANDS)}; got {cmd!r}")
    for k in sorted(set(cfg) - TOP_KEYS):
        out.append(f"unknown config key: {k}")
    try:
        grid = _grid(cfg)
    except (NakanoError, TypeError, ValueError) as exc:
        out.append(f"grid: {exc}")
        grid = None
    try:
        _tolerances(cfg)
    except ConfigError as exc:
        out.append(str(exc))
    fields = cfg.get("fields") or {}
    if not isinstance(fields, dict):
        return out + ["fields must be an object"]
    for key, spec in fields.items():
        if key in ("rank", "support"):
            continue
        _check_field(key, spec, base, out)
    for key in ("g", "g_tilde"):
        spec = fields.get(key)
        if isinstance(spec, list):
            r = len(spec)
            if r == 0 or any(not isinstance(row, list) or len(row) != r for row in spec):
                out.append(f"fields.{key}: r x r entry grid is not square")
    for key in ("f", "alpha"):
        spec = fields.get(key)
        if isinstance(spec, list) and grid is not None and cmd != "prekopa" and len(spec) != grid.n:
            out.append(f"fields.{key}: expected {grid.n} components, got {len(spec)}")
    if cmd in REQUIRED:
        for options in REQUIRED[cmd]:
            if not any(k in fields for k in options):
                out.append(f"{cmd} needs one of fields: {', '.join(options)}")
    if cmd == "falsify":
        fal = cfg.get("falsifier") or {}
        if "radius" not in fal:
            out.append("falsify needs falsifier.radius")
    if cmd == "prekopa":
        n_x = (cfg.get("prekopa") or {}).get("n_x")
        if not isinstance(n_x, int) or grid is None or not 1 <= n_x < grid.n:
            out.append("prekopa needs prekopa.n_x with 1 <= n_x < grid dimension")
    return out


def validate(path) -> list:
    try:
        cfg = load_config(path)
    except ConfigError as exc:
        return [str(exc)]
    return validate_config(cfg, os.path.dirname(os.path.abspath(path)))


# ---------------------------------------------------------------- commands


def _cmd_curvature(ctx, cfg, threads):
    g = ctx.metric()
    theta = curvature_tensor(g)
    M = gram_field(g, theta)
    lam = np.linalg.eigvalsh(M)[..., 0]
    node = np.unravel_index(int(np.argmin(lam.ravel())), g.grid.shape)
    P = np.einsum("...ac,...jkcb->...jkab", g.values, theta.blocks)
    result = {
        "n": g.grid.n,
        "r": g.r,
        "max_abs_theta": float(np.max(np.abs(theta.blocks))),
        "scale": 1.0 + float(np.max(np.abs(P))),
        "min_gram_eigenvalue": float(lam[node]),
        "min_gram_node": [int(i) for i in node],
        "theta_at_min_node": theta.at(node).tolist(),
    }
    return result, {}, 0


def _verdict_exit(rep):
    return 1 if rep.verdict == INDEFINITE else 0


def _cmd_check_nakano(ctx, cfg, threads):
    rep = nakano_verdict(ctx.metric(), ctx.tol["tau"], bool(cfg.get("strict", False)))
    diag = {"worst_on_boundary": rep.worst_on_boundary}
    return rep.to_dict(), diag, _verdict_exit(rep)


def _cmd_check_convex(ctx, cfg, threads):
    rep = convexity_verdict(ctx.scalar("phi"), ctx.tol["tau"], bool(cfg.get("strict", False)))
    diag = {"worst_on_boundary": rep.worst_on_boundary}
    return rep.to_dict(), diag, _verdict_exit(rep)


def _cmd_solve_d(ctx, cfg, threads):
    f = ctx.exact_form()
    u = solve_potential(f, ctx.tol["tau_closed"])
    diag = {"closedness_residual": closedness_residual(f)}
    fields = ctx.fields
    g = ctx.metric() if any(k in fields for k in ("g", "phi", "weights")) else None
    psi = ctx.scalar("psi") if "psi" in fields else None
    result = {"minimal": False}
    if g is not None or psi is not None:
        if g is None:
            g = MatrixField.constant(ctx.grid, np.eye(f.r))
        rule = QuadratureRule(ctx.grid)
        u = minimal_solution(u, g, psi, rule)
        result["minimal"] = True
        result["weighted_norm_sq"] = inner_sections(u, u, g, psi, rule)
    diag["path_residual"] = float(np.max(np.abs(d0(u).components - f.components)))
    result["max_abs_u"] = float(np.max(np.abs(u.values)))
    result["r"] = f.r
    if cfg.get("u_out"):
        write_field(_resolve(cfg["u_out"], ctx.base), u)
        result["u_out"] = cfg["u_out"]
    return result, diag, 0


def _cmd_check_estimate(ctx, cfg, threads):
    t = ctx.tol
    rep = check_optimal_estimate(ctx.metric(), ctx.scalar("psi"), ctx.exact_form(), None,
                                 t["eps_rep"], t["tau_conv"], t["tau_closed"], int(t["collar"]))
    d = rep.to_dict()
    diag = {k: d.pop(k) for k in ("boundary_mass", "closedness_residual", "path_residual", "conclusive")}
    return d, diag, 0 if rep.holds else 1


def _cmd_bochner(ctx, cfg, threads):
    rec = bochner_residual(ctx.oneform("alpha"), ctx.metric(), None, int(ctx.tol["collar"]))
    return rec.to_dict(), {}, 0


def _cmd_falsify(ctx, cfg, threads):
    g = ctx.metric()
    fal = dict(cfg.get("falsifier") or {})
    if "radius" not in fal:
        raise ConfigError("falsify needs falsifier.radius")
    sched = tuple(fal.get("s_schedule", DEFAULT_SCHEDULE))
    if fal.get("center") is None:
        fcfg = default_config(g, float(fal["radius"]), s_schedule=sched)
        if fal.get("xi") is not None:
            fcfg = FalsifierConfig(fcfg.center, fcfg.radius, tuple(fal["xi"]), sched)
    else:
        fcfg = FalsifierConfig(tuple(fal["center"]), float(fal["radius"]),
                               None if fal.get("xi") is None else tuple(fal["xi"]), sched)
    trace = falsify_scan(g, fcfg, None, ctx.tol["tau_viol"], threads)
    d = trace.to_dict()
    diag = {"warnings": d.pop("warnings"), "center_form": d["center_form"]}
    if cfg.get("trace_csv"):
        with open(_resolve(cfg["trace_csv"], ctx.base), "w", newline="") as fh:
            fh.write(trace.to_csv())
        d["trace_csv"] = cfg["trace_csv"]
    return d, diag, 1 if trace.violated else 0


def _cmd_prekopa(ctx, cfg, threads):
    g_tilde = ctx.metric(("g_tilde", "phi_tilde", "weights_tilde"))
    n_x = int((cfg.get("prekopa") or {}).get("n_x", 0))
    t = ctx.tol
    rec = prekopa_verify(g_tilde, n_x, t["tau"], t["truncation"])
    d = rec.to_dict()
    if cfg.get("g_out"):
        write_field(_resolve(cfg["g_out"], ctx.base), prekopa_pushforward(g_tilde, n_x, t["truncation"]))
        d["g_out"] = cfg["g_out"]
    code = 1 if rec.output_verdict == INDEFINITE or not rec.consistent else 0
    return d, {"applicable": rec.applicable}, code


HANDLERS = {
    "curvature": _cmd_curvature,
    "check-nakano": _cmd_check_nakano,
    "check-convex": _cmd_check_convex,
    "solve-d": _cmd_solve_d,
    "check-estimate": _cmd_check_estimate,
    "bochner": _cmd_bochner,
    "falsify": _cmd_falsify,
    "prekopa": _cmd_prekopa,
}


def _status(code):
    return {0: "ok", 1: "negative"}.get(code, "error")


def run(cfg: dict, base: str = ".", command: str = None, threads: int = 1):
    """Execute one job; returns ``(report, exit_code)``.  Never raises for job errors."""
    t0 = time.perf_counter()
    report = {"schema": SCHEMA, "command": command or cfg.get("command"), "config": cfg,
              "tolerances": None, "result": None, "diagnostics": {}, "error": None}
    try:
        problems = validate_config(cfg, base, command)
        if problems:
            raise ConfigError("; ".join(problems))
        cmd = report["command"]
        tol = _tolerances(cfg)
        report["tolerances"] = tol
        grid = _grid(cfg)
        if cmd == "prekopa":
            n_x = cfg["prekopa"]["n_x"]
            names = joint_names(n_x, grid.n - n_x)
        else:
            names = default_names(grid.n)
        ctx = _Ctx(cfg, base, grid, names, tol)
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            result, diag, code = HANDLERS[cmd](ctx, cfg, threads)
        diag["grid"] = grid.to_dict()
        msgs = sorted({str(w.message) for w in caught})
        if msgs:
            diag["warnings"] = sorted(set(diag.get("warnings", [])) | set(msgs))
        report["result"] = result
        report["diagnostics"] = diag
    except NakanoError as exc:
        report["error"] = exc.to_dict()
        code = 2
    except (KeyError, TypeError, ValueError, IndexError) as exc:
        report["error"] = {"code": ConfigError.code, "type": type(exc).__name__, "message": str(exc)}
        code = 2
    except OSError as exc:
        report["error"] = {"code": FieldFileError.code, "type": type(exc).__name__, "message": str(exc)}
        code = 2
    report["exit_code"] = code
    report["status"] = _status(code)
    report["wall_time_s"] = time.perf_counter() - t0
    return report, code


def _jsonable(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, tuple):
        return list(obj)
    raise TypeError(f"not JSON serializable: {type(obj).__name__}")


def dump_report(report) -> str:
    return json.dumps(report, sort_keys=True, indent=2, default=_jsonable, allow_nan=True) + "\n"


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="nakano", description="Curvature positivity checks for metrics on boxes.")
    p.add_argument("command", choices=COMMANDS + ("validate",))
    p.add_argument("--config", required=True, help="JSON job config")
    p.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                   help="override a config value by dotted path (repeatable)")
    p.add_argument("--threads", type=int, default=1, help="worker cap; 1 is deterministic")
    p.add_argument("--out", help="report path (default: config 'output', else stdout)")
    return p


def _emit(text, path):
    if path:
        with open(path, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    base = os.path.dirname(os.path.abspath(args.config))
    if args.command == "validate":
        try:
            cfg = apply_overrides(load_config(args.config), args.overrides)
            diags = validate_config(cfg, base)
        except (ConfigError, IndexError, ValueError) as exc:
            diags = [str(exc)]
        _emit(json.dumps({"schema": SCHEMA, "diagnostics": diags}, indent=2) + "\n", args.out)
        return 0 if not diags else 2
    try:
        cfg = apply_overrides(load_config(args.config), args.overrides)
    except (ConfigError, IndexError, ValueError) as exc:
        err = exc.to_dict() if isinstance(exc, NakanoError) else {"code": ConfigError.code, "message": str(exc)}
        report = {"schema": SCHEMA, "command": args.command, "config": None, "error": err,
                  "exit_code": 2, "status": "error", "result": None, "diagnostics": {}, "tolerances": None,
                  "wall_time_s": 0.0}
        _emit(dump_report(report), args.out)
        return 2
    report, code = run(cfg, base, args.command, max(1, args.threads))
    out = args.out or (_resolve(cfg["output"], base) if isinstance(cfg.get("output"), str) else None)
    _emit(dump_report(report), out)
    return code


if __name__ == "__main__":
    sys.exit(main())
