"""Command-line driver: ``solve``, ``vortex``, ``verify`` and ``ray``.

Exit codes: 0 success, 1 verification failure, 2 solver failure, 3 config error.
"""

from __future__ import annotations

import argparse
import csv
import datetime as _dt
import json
import math
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import yaml

from . import __version__

EXIT_OK, EXIT_VERIFY, EXIT_SOLVER, EXIT_CONFIG = 0, 1, 2, 3
THREADS_ENV = "CYCLIC_HITCHIN_THREADS"
_THREAD_VARS = ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS")


class ConfigError(ValueError):
    pass


# --------------------------------------------------------------------------
# configuration

_SCHEMA: dict[str, Any] = {
    "case": str, "n": int, "boundary": str,
    "domain": {"kind": str, "radius": float, "resolution": int, "periods": list},
    "differential": {"coeff": object, "zeros": list, "t": float, "t_schedule": list},
    "solver": {"tol": float, "max_newton": int, "damping": float, "max_halvings": int,
               "linear_tol": float, "linear_solver": str, "max_sweeps": int},
    "init": {"noise": float},
    "vortex": {"k": list},
    "checks": {"enabled": list, "invert": list, "slack": float},
    "ray": {"mask": list},
    "output": {"dir": str, "prefix": str},
}


def _validate(block: dict, schema: dict, where: str):
    if not isinstance(block, dict):
        raise ConfigError(f"{where or 'config'} must be a mapping")
    for key, val in block.items():
        if key not in schema:
            raise ConfigError(f"unknown key {where + '.' if where else ''}{key}")
        kind = schema[key]
        path = f"{where}.{key}" if where else key
        if isinstance(kind, dict):
            _validate(val, kind, path)
        elif kind is float:
            if isinstance(val, bool) or not isinstance(val, (int, float)):
                raise ConfigError(f"{path} must be a number")
        elif kind is int:
            if isinstance(val, bool) or not isinstance(val, int):
                raise ConfigError(f"{path} must be an integer")
        elif kind is not object and not isinstance(val, kind):
            raise ConfigError(f"{path} must be of type {kind.__name__}")


def _complex(v, path) -> complex:
    if isinstance(v, (int, float)) and not isinstance(v, bool):
        return complex(v)
    if isinstance(v, (list, tuple)) and len(v) == 2:
        return complex(float(v[0]), float(v[1]))
    raise ConfigError(f"{path} must be a number or a [re, im] pair")


@dataclass
class RunConfig:
    case: str
    n: int
    domain: dict
    coeff: complex
    zeros: tuple[complex, ...]
    t: float
    t_schedule: list[float] | None
    solver: dict
    boundary: str = "fuchsian"
    noise: float = 0.0
    vortex_k: list[int] | None = None
    checks: list[str] | None = None
    invert: list[str] = field(default_factory=list)
    slack: float = 1e-8
    mask: tuple[float, float] = (0.3, 0.7)
    out_dir: str = "."
    prefix: str = "run"

    # built lazily so config errors surface before numerical imports
    def spec(self):
        from .hitchin_system import LadderSpec
        return LadderSpec(self.case, self.n)

    def grid(self):
        from .geometry import Domain, build_grid
        d = self.domain
        dom = Domain(d.get("kind", "radial-ball"), int(d.get("resolution", 1000)),
                     float(d.get("radius", 0.9)), tuple(float(p) for p in d.get("periods", (1.0, 1.0))))
        return build_grid(dom)

    def differential(self, degree: int):
        from .geometry import DifferentialField
        return DifferentialField(degree, self.coeff, self.zeros, self.t)

    def solve_config(self):
        from .elliptic_solver import SolveConfig
        return SolveConfig(**self.solver)


def parse_config(raw: dict) -> RunConfig:
    _validate(raw, _SCHEMA, "")
    for key in ("case", "n"):
        if key not in raw:
            raise ConfigError(f"missing required key {key}")
    diff = raw.get("differential", {})
    ray = raw.get("ray", {})
    checks = raw.get("checks", {})
    out = raw.get("output", {})
    mask = ray.get("mask", [0.3, 0.7])
    if len(mask) != 2 or not 0 <= mask[0] < mask[1]:
        raise ConfigError("ray.mask must be [rmin, rmax] with 0 <= rmin < rmax")
    sched = diff.get("t_schedule")
    cfg = RunConfig(
        case=raw["case"], n=raw["n"], domain=raw.get("domain", {}),
        coeff=_complex(diff.get("coeff", 1.0), "differential.coeff"),
        zeros=tuple(_complex(z, "differential.zeros") for z in diff.get("zeros", [])),
        t=float(diff.get("t", 1.0)),
        t_schedule=[float(x) for x in sched] if sched is not None else None,
        solver=raw.get("solver", {}), boundary=raw.get("boundary", "fuchsian"),
        noise=float(raw.get("init", {}).get("noise", 0.0)),
        vortex_k=raw.get("vortex", {}).get("k"),
        checks=checks.get("enabled"), invert=list(checks.get("invert", [])),
        slack=float(checks.get("slack", 1e-8)), mask=(float(mask[0]), float(mask[1])),
        out_dir=out.get("dir", "."), prefix=out.get("prefix", "run"),
    )
    if cfg.boundary not in ("fuchsian", "vortex"):
        raise ConfigError("boundary must be 'fuchsian' or 'vortex'")
    # semantic validation
    from .analysis import ALL_CHECKS
    from .geometry import DomainError
    from .hitchin_system import SpecError
    try:
        cfg.spec()
        cfg.solve_config()
        from .geometry import Domain
        d = cfg.domain
        Domain(d.get("kind", "radial-ball"), int(d.get("resolution", 1000)),
               float(d.get("radius", 0.9)), tuple(d.get("periods", (1.0, 1.0))))
    except (SpecError, DomainError, ValueError, TypeError) as err:
        raise ConfigError(str(err)) from err
    bad = set((cfg.checks or []) + cfg.invert) - set(ALL_CHECKS)
    if bad:
        raise ConfigError(f"unknown checks: {sorted(bad)}")
    if cfg.t_schedule is not None and any(b <= a for a, b in zip(cfg.t_schedule, cfg.t_schedule[1:])):
        raise ConfigError("differential.t_schedule must be strictly increasing")
    return cfg


def load_config(path: str | os.PathLike) -> RunConfig:
    try:
        raw = yaml.safe_load(Path(path).read_text())
    except OSError as err:
        raise ConfigError(f"cannot read config: {err}") from err
    except yaml.YAMLError as err:
        raise ConfigError(f"malformed config: {err}") from err
    return parse_config(raw or {})


# --------------------------------------------------------------------------
# serialization (17 significant digits throughout)


def fmt(x) -> str:
    return format(float(x), ".17g")


def _json(obj, indent=0) -> str:
    # stdlib json cannot fix the float precision, so numbers are written here
    pad, nl = "  " * (indent + 1), "\n"
    if hasattr(obj, "item") and not isinstance(obj, (dict, list, tuple, str)):
        obj = obj.item()  # numpy scalar
    if obj is None:
        return "null"
    if isinstance(obj, bool):
        return "true" if obj else "false"
    if isinstance(obj, int):
        return str(obj)
    if isinstance(obj, float):
        v = float(obj)
        return fmt(v) if math.isfinite(v) else "null"
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{_json(str(k))}: {_json(v, indent + 1)}" for k, v in obj.items()]
        return "{" + nl + ("," + nl).join(items) + nl + "  " * indent + "}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        return "[" + ", ".join(_json(v, indent + 1) for v in obj) + "]"
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def write_json(path: Path, obj: dict):
    path.write_text(_json(obj) + "\n")


def write_csv(path: Path, header: list[str], rows, comments: list[str] = (), footer: list[str] = ()):
    with path.open("w", newline="") as fh:
        for c in comments:
            fh.write(f"# {c}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) if not isinstance(v, str) else v for v in row])
        for c in footer:
            fh.write(f"# {c}\n")


def _base_report(cfg: RunConfig, command: str) -> dict:
    return {
        "command": command, "version": __version__, "case": cfg.case, "n": cfg.n,
        "timestamp": {"created": _dt.datetime.now(_dt.timezone.utc).isoformat()},
    }


def _out(cfg: RunConfig) -> Path:
    p = Path(cfg.out_dir)
    p.mkdir(parents=True, exist_ok=True)
    return p


# --------------------------------------------------------------------------
# commands


def _solve(cfg: RunConfig, seed: int):
    import numpy as np

    from .elliptic_solver import newton_solve
    from .geometry import background_metric, check_differential
    from .hitchin_system import LogMetricTuple, fuchsian_tuple
    from .vortex import vortex_boundary_tuple

    spec, grid = cfg.spec(), cfg.grid()
    q = cfg.differential(spec.q_degree)
    check_differential(q, grid)
    metric = background_metric(grid)
    init = fuchsian_tuple(spec, metric)
    if cfg.noise:
        rng = np.random.default_rng(seed)
        init = LogMetricTuple(init.ref, init.dev + cfg.noise * rng.standard_normal(init.dev.shape))
    bc = vortex_boundary_tuple(spec, q, grid, metric) if cfg.boundary == "vortex" else None
    state, rep = newton_solve(spec, q, grid, init, bc, cfg.solve_config(), metric)
    return spec, grid, q, metric, state, rep


def _field_rows(grid, metric, state, lam):
    for i in range(grid.size):
        z = grid.z[i]
        yield [z.real, z.imag, metric.g0[i], *state.w[:, i], lam[i]]


def cmd_solve(cfg: RunConfig, seed: int = 0) -> int:
    from .analysis import domination_check, pullback_metric
    from .elliptic_solver import SolverError
    from .hitchin_system import canonical, residual

    out = _out(cfg)
    report = _base_report(cfg, "solve")
    try:
        spec, grid, q, metric, state, rep = _solve(cfg, seed)
    except SolverError as err:
        report["error"] = str(err)
        report["solver"] = err.report.to_dict() if err.report else {}
        report["timestamp"]["wall_time"] = report["solver"].pop("wall_time", None)
        write_json(out / f"{cfg.prefix}_report.json", report)
        print(f"solver failure: {err}", file=sys.stderr)
        return EXIT_SOLVER
    state = canonical(state, spec, metric)
    pm = pullback_metric(state, q, spec, grid, metric)
    report["solver"] = rep.to_dict()
    report["timestamp"]["wall_time"] = report["solver"].pop("wall_time")
    report["residual"] = residual(state, q, spec, grid, metric).sup
    report["flags"] = []
    if metric.is_hyperbolic:
        dom = domination_check(pm, metric, grid, spec, q, cfg.slack)
        report["domination"] = {"min_ratio": dom.min_ratio, "max_ratio": dom.max_ratio}
    else:
        import numpy as np
        rg = np.stack(pm.rungs)
        if np.ptp(rg) <= 1e-10 * np.max(np.abs(rg)):
            report["flags"].append("degenerate flat model")
    header = ["x", "y", "g0", *[f"w_{k}" for k in range(1, spec.m + 1)], "lambda_f"]
    write_csv(out / f"{cfg.prefix}_fields.csv", header, _field_rows(grid, metric, state, pm.density))
    write_json(out / f"{cfg.prefix}_report.json", report)
    print(f"solve: converged in {rep.iterations} iterations, residual {fmt(report['residual'])}")
    return EXIT_OK


def cmd_vortex(cfg: RunConfig, seed: int = 0) -> int:
    from .analysis import vortex_family
    from .elliptic_solver import SolverError
    from .geometry import background_metric, check_differential
    from .vortex import VortexSpec, solve_vortex

    out = _out(cfg)
    spec, grid = cfg.spec(), cfg.grid()
    q = cfg.differential(spec.q_degree)
    check_differential(q, grid)
    ks = cfg.vortex_k or vortex_family(spec)
    g0 = background_metric(grid).g0
    report = _base_report(cfg, "vortex")
    report["solutions"] = {}
    report["timestamp"]["wall_time"] = {}
    for k in ks:
        try:
            vs = VortexSpec(cfg.case, cfg.n, int(k))
        except ValueError as err:
            print(f"config error: {err}", file=sys.stderr)
            return EXIT_CONFIG
        try:
            sol = solve_vortex(vs, q, grid, cfg.solve_config())
        except SolverError as err:
            report["error"] = f"k={k}: {err}"
            write_json(out / f"{cfg.prefix}_vortex_report.json", report)
            print(f"solver failure: {err}", file=sys.stderr)
            return EXIT_SOLVER
        lo_m, up_m = sol.bracket_margins(grid)
        rd = sol.report.to_dict()
        report["timestamp"]["wall_time"][str(k)] = rd.pop("wall_time")
        report["solutions"][str(k)] = {"label": vs.label, "alpha": vs.alpha, "solver": rd,
                                       "lower_margin": lo_m, "upper_margin": up_m}
        rows = ([grid.z[i].real, grid.z[i].imag, g0[i], sol.u[i], sol.u_inv[i], sol.lower[i],
                 sol.upper[i]] for i in range(grid.size))
        write_csv(out / f"{cfg.prefix}_vortex_k{k}.csv",
                  ["x", "y", "g0", "u", "u_inv", "lower", "upper"], rows,
                  comments=[f"{vs.label}; alpha = {fmt(vs.alpha)}; bracket: lower <= u_inv < upper"])
        print(f"{vs.label}: k={k} converged in {sol.report.iterations} sweeps")
    write_json(out / f"{cfg.prefix}_vortex_report.json", report)
    return EXIT_OK


def cmd_verify(cfg: RunConfig, seed: int = 0) -> int:
    from .analysis import verify
    from .elliptic_solver import SolverError

    out = _out(cfg)
    report = _base_report(cfg, "verify")
    try:
        spec, grid, q, metric, state, rep = _solve(cfg, seed)
        rd = rep.to_dict()
        report["timestamp"]["wall_time"] = rd.pop("wall_time")
        vr = verify(spec, q, grid, state, rd, cfg.checks, cfg.solve_config(), cfg.invert, cfg.slack)
    except SolverError as err:
        report["error"] = str(err)
        write_json(out / f"{cfg.prefix}_verify.json", report)
        print(f"solver failure: {err}", file=sys.stderr)
        return EXIT_SOLVER
    report.update(vr.to_dict())
    write_json(out / f"{cfg.prefix}_verify.json", report)
    for c in vr.checks:
        tag = "SKIP" if c.skipped else ("PASS" if c.passed else "FAIL")
        m = "" if c.margin is None else f" margin={fmt(c.margin)}"
        print(f"[{tag}] {c.name}{m}")
    ent = next((c for c in vr.checks if c.name == "entropy" and c.margin is not None), None)
    if ent is not None:
        print(f"entropy lower bound min sqrt(-K_gf) = {fmt(ent.margin)}")
    if not vr.passed:
        print("verification failed: " + ", ".join(vr.failing()), file=sys.stderr)
        return EXIT_VERIFY
    return EXIT_OK


def cmd_ray(cfg: RunConfig, seed: int = 0) -> int:
    from .analysis import ray_study, vortex_family
    from .elliptic_solver import SolverError
    from .geometry import check_differential, node_mask

    out = _out(cfg)
    spec, grid = cfg.spec(), cfg.grid()
    q = cfg.differential(spec.q_degree)
    check_differential(q, grid)
    sched = cfg.t_schedule or [cfg.t]
    q1 = cfg.differential(spec.q_degree).scaled(1.0)
    mask = node_mask(grid, *cfg.mask)
    try:
        study = ray_study(spec, q1, grid, sched, mask, cfg.solve_config(), cfg.boundary)
    except SolverError as err:  # a vortex solve along the ray
        print(f"solver failure: {err}", file=sys.stderr)
        return EXIT_SOLVER
    except ValueError as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    ks = vortex_family(spec)
    header = ["t", "ok", *[f"err_h{k}" for k in ks], *[f"gap_u{k}" for k in ks]]
    rows, j = [], 0
    for i, t in enumerate(study.t):
        if study.ok[i]:
            rows.append([t, "1", *[study.errors[k][j] for k in ks], *[study.vortex_gap[k][j] for k in ks]])
            j += 1
        else:
            rows.append([t, "FAILED", *["nan"] * (2 * len(ks))])
    footer = [f"slope_h{k} = {fmt(study.slope[k]) if study.slope[k] is not None else 'none'}" for k in ks]
    footer.append(f"target_slope = {fmt(study.target_slope)}")
    write_csv(out / f"{cfg.prefix}_ray.csv", header, rows, footer=footer)
    for wmsg in study.warnings:
        print(f"warning: {wmsg}", file=sys.stderr)
    for line in footer:
        print(line)
    return EXIT_OK if all(study.ok) else EXIT_SOLVER


COMMANDS = {"solve": cmd_solve, "vortex": cmd_vortex, "verify": cmd_verify, "ray": cmd_ray}


def _set_threads(n: int | None):
    n = n or (int(os.environ[THREADS_ENV]) if os.environ.get(THREADS_ENV) else None)
    if n:
        for var in _THREAD_VARS:
            os.environ[var] = str(n)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="cyclic-hitchin", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp_ = sub.add_parser(name)
        sp_.add_argument("--config", required=True)
        sp_.add_argument("--out", default=None, help="output directory (overrides output.dir)")
        sp_.add_argument("--threads", type=int, default=None,
                         help=f"worker threads (env override: {THREADS_ENV})")
        sp_.add_argument("--seed", type=int, default=0)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    _set_threads(args.threads)
    try:
        cfg = load_config(args.config)
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    if args.out:
        cfg.out_dir = args.out
    try:
        return COMMANDS[args.command](cfg, args.seed)
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except ValueError as err:  # domain/spec problems discovered while building inputs
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
