"""Command line entry point.

Exit codes: 0 success, 1 validation failure, 2 numerical failure, 64 usage error.
Settings come from flags, then the ``[run]`` table of the model config, then
built-in defaults.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import platform
import re
import sys
import time
from pathlib import Path
from typing import Any, Sequence

import numpy as np
import scipy

from . import __version__
from .config import bump_from_table, config_hash, load_bump, load_model
from .errors import InvalidModel, NumericalError, ValidationError
from .mc import MCConfig, estimate_q, simulate_paths
from .model import build_transformed
from .speed import BACKENDS, SpeedDensity

EXIT_OK, EXIT_VALIDATION, EXIT_NUMERICAL, EXIT_USAGE = 0, 1, 2, 64

DEFAULTS: dict[str, Any] = {
    "paths": 100_000,
    "steps": 200,
    "seed": 0,
    "streams": 1,
    "base": 1.0,
    "grid": "200x200",
    "tsteps": 400,
    "ymax": 8.0,
    "z": "-4:4",
    "q_paths": 100_000,
    "q_nodes": 40,
}
# flags whose values may start with '-'
_VALUE_FLAGS = {"--z", "--x0", "--x", "--r-list"}


class UsageParser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def fmt(x: float) -> str:
    return f"{float(x):.17g}"


def _floats(text: str, n: int | None = None) -> list[float]:
    try:
        vals = [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")
    if not vals or (n is not None and len(vals) != n):
        raise argparse.ArgumentTypeError(f"expected {n or 'some'} comma-separated numbers, got {text!r}")
    return vals


def _point(text: str) -> list[float]:
    return _floats(text, 2)


def _grid(text: str) -> tuple[int, int]:
    m = re.fullmatch(r"(\d+)x(\d+)", str(text))
    if not m:
        raise argparse.ArgumentTypeError(f"grid must look like 200x200, got {text!r}")
    return int(m.group(1)), int(m.group(2))


def _range(text: str) -> tuple[float, float]:
    try:
        lo, hi = (float(t) for t in str(text).split(":"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"range must look like -4:4, got {text!r}")
    if not lo < hi:
        raise argparse.ArgumentTypeError(f"empty range {text!r}")
    return lo, hi


def _d(name: str) -> str:
    return f"(default: {DEFAULTS[name]}; overrides [run] {name})"


def _add_mc(p: argparse.ArgumentParser) -> None:
    p.add_argument("--paths", type=int, help=f"Monte Carlo paths {_d('paths')}")
    p.add_argument("--steps", type=int, help=f"time steps per path {_d('steps')}")
    p.add_argument("--seed", type=int, help=f"base seed {_d('seed')}")
    p.add_argument("--streams", type=int, help=f"parallel streams; results do not depend on it {_d('streams')}")


def _add_model(p: argparse.ArgumentParser) -> None:
    p.add_argument("--model", required=True, help="TOML file with a [model] table (required)")
    p.add_argument("--manifest", help="manifest path (default: <first output>.manifest.json; "
                                      "none when writing only to stdout)")


def build_parser() -> UsageParser:
    parser = UsageParser(prog="densym", description="Densities of decoupled 2-D diffusions.")
    parser.add_argument("--version", action="version", version=f"densym {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    p = sub.add_parser("mu", help="speed density at given points")
    _add_model(p)
    p.add_argument("--r-list", required=True, type=_floats, help="comma-separated r values (required)")
    p.add_argument("--base", type=float, help=f"normalisation point {_d('base')}")
    p.add_argument("--backend", choices=("auto",) + BACKENDS, default="auto", help="(default: auto)")
    p.add_argument("--out", help="CSV output path (default: stdout)")

    p = sub.add_parser("transform", help="transformed drift and h")
    _add_model(p)
    p.add_argument("--r-list", required=True, type=_floats, help="comma-separated r values (required)")
    p.add_argument("--convention", choices=("adjoint", "literal"), default="adjoint",
                   help="sign convention of the transformed drift (default: adjoint)")
    p.add_argument("--out", help="CSV output path (default: stdout)")

    p = sub.add_parser("simulate", help="terminal statistics of simulated paths")
    _add_model(p)
    p.add_argument("--x0", required=True, type=_point, help="start point y,z (required)")
    _add_mc(p)
    p.add_argument("--transformed", action="store_true", help="simulate the transformed model (default: off)")
    p.add_argument("--dump-terminal", help="write terminal y,z samples to this CSV (default: off)")
    p.add_argument("--out", help="CSV output path (default: stdout)")

    p = sub.add_parser("estimate-q", help="density of X_T started from rho, at one point")
    _add_model(p)
    p.add_argument("--rho", required=True, help="TOML file with a [rho] table (required)")
    p.add_argument("--x", required=True, type=_point, help="evaluation point y,z with y > 0 (required)")
    p.add_argument("--base", type=float, help=f"speed density normalisation point {_d('base')}")
    _add_mc(p)
    p.add_argument("--out", help="CSV output path (default: stdout)")

    p = sub.add_parser("solve-pde", help="backward PDE solve on a tensor grid")
    _add_model(p)
    p.add_argument("--transformed", action="store_true", help="use the transformed operator (default: off)")
    p.add_argument("--terminal", choices=("rho-over-mu", "rho", "one"), default="rho-over-mu",
                   help="terminal data (default: rho-over-mu)")
    p.add_argument("--rho", help="TOML file with a [rho] table, needed unless --terminal one (default: none)")
    p.add_argument("--grid", type=_grid, help=f"nodes NYxNZ {_d('grid')}")
    p.add_argument("--tsteps", type=int, help=f"time steps {_d('tsteps')}")
    p.add_argument("--ymax", type=float, help=f"far y edge {_d('ymax')}")
    p.add_argument("--z", type=_range, help=f"z range lo:hi {_d('z')}")
    p.add_argument("--stepper", choices=("craig-sneyd", "explicit-euler"), default="craig-sneyd",
                   help="(default: craig-sneyd)")
    p.add_argument("--far-edge", choices=("upwind", "one-sided"), default="upwind", help="(default: upwind)")
    p.add_argument("--out", required=True, help="CSV path for u (required)")
    p.add_argument("--density", help="CSV path for p = mu u; needs --transformed and --terminal rho-over-mu (default: none)")
    p.add_argument("--pgm", help="PGM heatmap of p; needs --density (default: none)")

    p = sub.add_parser("verify", help="symmetry and duality checks")
    _add_model(p)
    p.add_argument("--suite", choices=("chain", "adjoint", "corollary", "theorem1", "all"), default="all",
                   help="(default: all)")
    p.add_argument("--rho", help="TOML file with [rho] and optional [g] tables for theorem1 "
                                 "(default: bumps scaled to the model)")
    _add_mc(p)
    p.add_argument("--q-paths", type=int, help=f"paths per q-grid row {_d('q_paths')}")
    p.add_argument("--report", help="CSV report path (default: stdout)")

    p = sub.add_parser("theorem1", help="E g(X_T) against the integral of g q")
    _add_model(p)
    p.add_argument("--rho", help="TOML file with [rho] and optional [g] tables (default: bumps scaled to the model)")
    p.add_argument("--source", choices=("mc", "pde", "both"), default="both", help="(default: both)")
    _add_mc(p)
    p.add_argument("--q-paths", type=int, help=f"paths per q-grid row {_d('q_paths')}")
    p.add_argument("--q-nodes", type=int, help=f"q-grid nodes per axis {_d('q_nodes')}")
    p.add_argument("--grid", type=_grid, help=f"PDE nodes NYxNZ {_d('grid')}")
    p.add_argument("--tsteps", type=int, help=f"PDE time steps {_d('tsteps')}")
    p.add_argument("--out", help="CSV output path (default: stdout)")
    return parser


# ---------------------------------------------------------------------------

class Run:
    """Resolved settings plus timing and outputs for the manifest."""

    def __init__(self, args: argparse.Namespace, config: dict):
        self.args = args
        self.run_table = dict(config.get("run", {}))
        self.config = config
        self.stages: dict[str, float] = {}
        self.outputs: list[str] = []
        self.resolved: dict[str, Any] = {}

    def opt(self, name: str, parse=None):
        value = getattr(self.args, name, None)
        if value is None:
            value = self.run_table.get(name, DEFAULTS[name])
            if parse is not None:
                try:
                    value = parse(value)
                except argparse.ArgumentTypeError as exc:
                    raise InvalidModel(f"[run] {name}: {exc}") from exc
        self.resolved[name] = value
        return value

    def mc(self) -> MCConfig:
        return MCConfig(self.opt("paths"), self.opt("steps"), seed=self.opt("seed"), n_streams=self.opt("streams"))

    def stage(self, name: str):
        run = self

        class _Timer:
            def __enter__(self):
                self.t = time.perf_counter()

            def __exit__(self, *exc):
                run.stages[name] = run.stages.get(name, 0.0) + time.perf_counter() - self.t

        return _Timer()

    def write(self, path: str | None, text: str) -> None:
        if path is None:
            sys.stdout.write(text)
            return
        Path(path).write_text(text)
        self.outputs.append(path)

    def write_bytes(self, path: str, data: bytes) -> None:
        Path(path).write_bytes(data)
        self.outputs.append(path)

    def manifest(self) -> None:
        target = self.args.manifest or (self.outputs[0] + ".manifest.json" if self.outputs else None)
        if target is None:
            return
        argv_cfg = {k: v for k, v in vars(self.args).items() if k != "manifest"}
        doc = {
            "command": self.args.command,
            "config_hash": config_hash(self.config, argv_cfg, self.resolved),
            "seed": self.resolved.get("seed"),
            "n_streams": self.resolved.get("streams"),
            "settings": self.resolved,
            "versions": {"densym": __version__, "python": platform.python_version(),
                         "numpy": np.__version__, "scipy": scipy.__version__},
            "wall_times": self.stages,
            "outputs": [{"path": p, "sha256": hashlib.sha256(Path(p).read_bytes()).hexdigest()}
                        for p in self.outputs],
        }
        Path(target).write_text(json.dumps(doc, indent=2, sort_keys=True, default=str) + "\n")


def _csv(header: Sequence[str], rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([fmt(v) if isinstance(v, (float, np.floating)) else v for v in row])
    return buf.getvalue()


def _field_csv(grid, values) -> str:
    Y, Z = grid.mesh()
    lines = ["y,z,value"]
    for y, z, v in zip(Y.ravel(), Z.ravel(), np.asarray(values).ravel()):
        lines.append(f"{fmt(y)},{fmt(z)},{fmt(v)}")
    return "\n".join(lines) + "\n"


def pgm_bytes(values: np.ndarray) -> bytes:
    """8-bit heatmap: ``[0, max] -> [0, 255]``, rows are y descending, columns are z."""
    v = np.clip(np.asarray(values, float), 0.0, None)
    top = float(v.max())
    scaled = np.zeros_like(v) if top <= 0 else np.rint(255.0 * v / top)
    img = scaled[::-1, :].astype(np.uint8)
    ny, nz = img.shape
    return f"P5\n{nz} {ny}\n255\n".encode() + img.tobytes()


def _bumps(run: Run, model):
    from .verify import default_payoff, default_rho

    if run.args.rho is None:
        return default_rho(model), default_payoff(model)
    rho, data = load_bump(run.args.rho, "rho")
    g = bump_from_table(data["g"], "g") if "g" in data else default_payoff(model)
    return rho, g


# ---------------------------------------------------------------------------

def cmd_mu(run: Run, model) -> None:
    sd = SpeedDensity(model, base_point=run.opt("base"), backend=run.args.backend)
    r = np.asarray(run.args.r_list)
    with run.stage("mu"):
        lm = np.atleast_1d(sd.log_mu(r))
    run.write(run.args.out, _csv(("r", "log_mu", "mu"), zip(r, lm, np.exp(lm))))


def cmd_transform(run: Run, model) -> None:
    with run.stage("transform"):
        tm = build_transformed(model, convention=run.args.convention)
        r = np.asarray(run.args.r_list)
        vals = np.atleast_1d(tm.beta2_tilde(r))
    run.write(run.args.out, _csv(("r", "beta2_tilde"), zip(r, vals)))


def cmd_simulate(run: Run, model) -> None:
    cfg = run.mc()
    mdl = build_transformed(model).as_model() if run.args.transformed else model
    with run.stage("simulate"):
        s = simulate_paths(mdl, run.args.x0, cfg)
    n = s.y.size
    rows = []
    for name, v in (("y", s.y), ("z", s.z)):
        se = float(np.std(v, ddof=1) / np.sqrt(n)) if n > 1 else 0.0
        rows.append((f"mean_{name}", float(np.mean(v)), se, n, cfg.seed))
    run.write(run.args.out, _csv(("quantity", "value", "std_error", "n_paths", "seed"), rows))
    if run.args.dump_terminal:
        run.write(run.args.dump_terminal, _csv(("y", "z"), zip(s.y.tolist(), s.z.tolist())))


def cmd_estimate_q(run: Run, model) -> None:
    rho, _ = load_bump(run.args.rho, "rho")
    cfg = run.mc()
    sd = SpeedDensity(model, base_point=run.opt("base"))
    with run.stage("estimate-q"):
        est = estimate_q(build_transformed(model), sd, rho, run.args.x, cfg)
    run.write(run.args.out, _csv(("value", "std_error", "n_paths", "seed"),
                                 [(est.value, est.std_error, est.n_paths, est.seed)]))


def cmd_solve_pde(run: Run, model) -> None:
    from .pde import assemble_density, make_grid, solve_backward, terminal_rho_over_mu

    a = run.args
    ny, nz = run.opt("grid", _grid)
    z_lo, z_hi = run.opt("z", _range)
    grid = make_grid(ny, nz, run.opt("ymax"), z_lo, z_hi)
    tsteps = run.opt("tsteps")
    if a.density and not (a.transformed and a.terminal == "rho-over-mu"):
        raise InvalidModel("--density needs --transformed and --terminal rho-over-mu")
    if a.pgm and not a.density:
        raise InvalidModel("--pgm needs --density")
    sd = SpeedDensity(model)
    Y, Z = grid.mesh()
    if a.terminal == "one":
        g = np.ones(grid.shape)
    else:
        if a.rho is None:
            raise InvalidModel(f"--terminal {a.terminal} needs --rho")
        rho, _ = load_bump(a.rho, "rho")
        g = terminal_rho_over_mu(rho, sd, grid) if a.terminal == "rho-over-mu" else rho(Y, Z)
    target = build_transformed(model) if a.transformed else model
    with run.stage("solve"):
        u, report = solve_backward(target, grid, g, tsteps, stepper=a.stepper, far_edge=a.far_edge)
    run.write(a.out, _field_csv(grid, u.values))
    if a.density:
        p = assemble_density(u, sd)
        run.write(a.density, _field_csv(grid, p.values))
        if a.pgm:
            run.write_bytes(a.pgm, pgm_bytes(p.values))
    summary = [("scheme", report.scheme), ("time_steps", report.time_steps),
               ("max_residual_constant_test", fmt(report.max_residual_constant_test)),
               ("min_value", fmt(report.min_value)), ("max_value", fmt(report.max_value)),
               ("upwinded_rows", report.upwinded_rows)]
    sys.stdout.write(_csv(("key", "value"), summary))


def cmd_verify(run: Run, model) -> None:
    from .verify import SuiteBudget, run_suite

    budget = SuiteBudget(n_paths=run.opt("paths"), n_steps=run.opt("steps"), q_grid_paths=run.opt("q_paths"),
                         n_streams=run.opt("streams"))
    rho, g = _bumps(run, model)
    with run.stage(f"verify-{run.args.suite}"):
        rows = run_suite(model, run.args.suite, run.opt("seed"), budget, rho=rho, g=g)
    run.write(run.args.report, _csv(("check", "point", "lhs", "rhs", "residual", "tolerance", "pass"),
                                    ((r.check, r.point, r.lhs, r.rhs, r.residual, r.tolerance, r.passed)
                                     for r in rows)))


def cmd_theorem1(run: Run, model) -> None:
    from .mc import derived_seed, estimate_q_grid
    from .verify import SuiteBudget, _pde_route, q_grid_for, theorem1_two_way_check

    cfg = run.mc()
    rho, g = _bumps(run, model)
    tm = build_transformed(model)
    sd = SpeedDensity(model)
    ny, _ = run.opt("grid", _grid)
    budget = SuiteBudget(pde_nodes=ny, pde_steps=run.opt("tsteps"))
    sources = ("mc", "pde") if run.args.source == "both" else (run.args.source,)
    rows = []
    for source in sources:
        with run.stage(f"q-{source}"):
            if source == "mc":
                grid = q_grid_for(g, run.opt("q_nodes"))
                qcfg = MCConfig(run.opt("q_paths"), cfg.n_steps, seed=derived_seed(cfg.seed, 3),
                                n_streams=cfg.n_streams)
                q, unc = estimate_q_grid(tm, sd, rho, grid.y_nodes, grid.z_nodes, qcfg)
            else:
                q, unc, grid = _pde_route(tm, sd, rho, g, budget)
        with run.stage("expectation"):
            chk = theorem1_two_way_check(model, g, rho, q, grid, cfg.replace(seed=derived_seed(cfg.seed, 2)), unc)
        rows.append((source, chk.lhs.value, chk.lhs.std_error, chk.rhs, chk.rhs_uncertainty,
                     str(chk.passed).lower()))
    run.write(run.args.out, _csv(("source", "lhs", "lhs_std_error", "rhs", "rhs_uncertainty", "pass"), rows))


COMMANDS = {
    "mu": cmd_mu, "transform": cmd_transform, "simulate": cmd_simulate, "estimate-q": cmd_estimate_q,
    "solve-pde": cmd_solve_pde, "verify": cmd_verify, "theorem1": cmd_theorem1,
}


def _join_negative_values(argv: list[str]) -> list[str]:
    out: list[str] = []
    i = 0
    while i < len(argv):
        tok = argv[i]
        if tok in _VALUE_FLAGS and i + 1 < len(argv) and re.match(r"-[\d.]", argv[i + 1]):
            out.append(f"{tok}={argv[i + 1]}")
            i += 2
            continue
        out.append(tok)
        i += 1
    return out


def main(argv: Sequence[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = build_parser().parse_args(_join_negative_values(argv))
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        model, config = load_model(args.model)
        run = Run(args, config)
        COMMANDS[args.command](run, model)
        run.manifest()
    except ValidationError as exc:
        print(f"densym: validation error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except NumericalError as exc:
        print(f"densym: numerical error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (ValueError, OSError) as exc:
        print(f"densym: validation error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    return EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
