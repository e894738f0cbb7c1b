"""Command line interface: ``hyperns <subcommand> [flags]``.

Exit codes: 0 success, 1 failed check or I/O error, 2 config or usage
error, 3 numerical failure, 4 blowup-threshold termination.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from datetime import datetime, timezone
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import __version__
from . import diagnostics as diag
from .config import ConfigError, ParsedConfig, load_config
from .dynamics import (
    BLOWUP,
    NUMERICAL_FAILURE,
    SimConfig,
    make_initial_data,
    run,
)
from .gronwall import (
    ComparisonProblem,
    bound_envelope,
    classify_divergence,
    criterion_integral,
    integrate_comparison,
)
from .io import (
    CheckpointError,
    TraceFormatError,
    read_checkpoint,
    read_trace,
    write_checkpoint,
    write_trace,
)
from .spectral import fft_workers
from .symbols import parse_symbol

log = logging.getLogger("hyperns")

EXIT_OK = 0
EXIT_FAIL = 1
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3
EXIT_BLOWUP = 4

SUBCOMMANDS = ("run", "criterion", "gronwall", "envelope", "decay-test")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hyperns",
        description="Hyperdissipative Navier-Stokes simulator and energy-method diagnostics",
    )
    parser.add_argument("subcommand", choices=SUBCOMMANDS)
    parser.add_argument("--config", type=Path, help="config file")
    parser.add_argument("--out", type=Path, help="output file (trace or table CSV)")
    parser.add_argument("--checkpoint", type=Path, help="write the final solver state here")
    parser.add_argument("--resume", type=Path, help="continue from this checkpoint")
    parser.add_argument("--seed", type=int, help="override the initial-data seed")
    parser.add_argument("--quiet", action="store_true", help="only print warnings and errors")
    return parser


class _Manifest:
    def __init__(self, parsed: Optional[ParsedConfig], command: str, seed: Optional[int]):
        self.data = {
            "command": command,
            "config_hash": parsed.canonical_hash if parsed else None,
            "seed": seed,
            "version": __version__,
            "start_time": datetime.now(timezone.utc).isoformat(),
            "end_time": None,
            "termination_reason": None,
            "artifacts": [],
        }

    def add(self, path: Path) -> None:
        self.data["artifacts"].append(str(path))

    def write(self, path: Path, reason: str) -> None:
        self.data["end_time"] = datetime.now(timezone.utc).isoformat()
        self.data["termination_reason"] = reason
        path.write_text(json.dumps(self.data, indent=2) + "\n")


def _manifest_path(out: Path) -> Path:
    return out.with_name(out.name + ".manifest.json")


def _need_config(args, task: str) -> ParsedConfig:
    if args.config is None:
        raise ConfigError(f"subcommand needs --config with a [{_SECTION[task]}] section")
    try:
        parsed = load_config(args.config)
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from None
    if parsed.task != task:
        raise ConfigError(f"{args.config}: expected a [{_SECTION[task]}] config, got {parsed.task}")
    return parsed


_SECTION = {"run": "simulation", "gronwall": "comparison", "criterion": "criterion", "envelope": "envelope"}


def cmd_run(args) -> int:
    parsed = _need_config(args, "run")
    sim = parsed.sim
    params = dict(parsed.initial_params)
    if args.seed is not None:
        if args.seed < 0 or args.seed >= 2**64:
            raise ConfigError(f"--seed must be an unsigned 64-bit integer, got {args.seed}")
        params["seed"] = args.seed
    out = args.out or Path("trace.csv")
    manifest = _Manifest(parsed, "run", params.get("seed"))

    lattice = sim.lattice()
    start = None
    if args.resume is not None:
        start = read_checkpoint(args.resume)
        if not start.u.lattice.compatible(lattice):
            raise ConfigError(f"checkpoint lattice {start.u.lattice!r} does not match config")
        if not start.u.divergence_free:
            raise CheckpointError(f"{args.resume}: stored field is not divergence-free")
        result = run(sim, start=start)
    else:
        try:
            u0 = make_initial_data(parsed.initial_kind, lattice, **params)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"initial data: {exc}") from None
        result = run(sim, u0)

    trace = result.trace
    if start is not None and out.exists():
        previous = read_trace(out)
        earlier = diag.EnergyTrace(previous.data[previous.t <= start.t])
        trace = diag.fill_ratio(earlier.concat(trace), sim.growth_function, sim.q)
    write_trace(trace, out)
    manifest.add(out)
    if args.checkpoint is not None:
        write_checkpoint(result.state, args.checkpoint)
        manifest.add(args.checkpoint)
    manifest_path = _manifest_path(out)
    manifest.add(manifest_path)
    manifest.write(manifest_path, result.reason)

    log.info("%s at t=%.6g after %d steps", result.reason, result.state.t, result.state.step_count)
    if result.detail:
        log.info("%s", result.detail)
    if result.reason == NUMERICAL_FAILURE:
        return EXIT_NUMERICAL
    if result.reason == BLOWUP:
        return EXIT_BLOWUP
    return EXIT_OK


def cmd_criterion(args) -> int:
    parsed = _need_config(args, "criterion")
    sec = parsed.values["criterion"]
    g, q, S = parsed.growth, sec["q"], sec["S"]
    value = criterion_integral(g, q, S)
    report = classify_divergence(g, q)
    print(f"g = {g.name()}, q = {q}")
    print(f"integral_1^S ds/(s g(s)^q) at S = {S:.6g}: {value:.15g}")
    print(report.table())
    if report.limit_estimate is not None:
        print(f"extrapolated limit: {report.limit_estimate:.12g}")
    print(f"classification: {report.verdict}")
    if args.out is not None:
        rows = np.column_stack([report.exponents[1:], report.partial[1:], report.increments])
        np.savetxt(args.out, rows, delimiter=",", header="log2_S,integral,increment", comments="", fmt="%.17g")
        manifest = _Manifest(parsed, "criterion", None)
        manifest.add(args.out)
        manifest.write(_manifest_path(args.out), report.verdict)
    return EXIT_OK


def cmd_gronwall(args) -> int:
    parsed = _need_config(args, "gronwall")
    prob = parsed.comparison
    trace_path = parsed.values["comparison"]["forcing_trace"]
    if trace_path:
        tr = read_trace(trace_path)
        prob = ComparisonProblem(
            C=prob.C, g=prob.g, E0=prob.E0, t_end=prob.t_end, forcing=(tr.t, tr.a),
            q=prob.q, rtol=prob.rtol,
        )
    result = integrate_comparison(prob)
    print(result.describe())
    if args.out is not None:
        np.savetxt(args.out, np.column_stack([result.times, result.values]), delimiter=",",
                   header="t,E", comments="", fmt="%.17g")
        manifest = _Manifest(parsed, "gronwall", None)
        manifest.add(args.out)
        manifest.write(_manifest_path(args.out), result.outcome)
    return EXIT_BLOWUP if result.blew_up else EXIT_OK


def cmd_envelope(args) -> int:
    parsed = _need_config(args, "envelope")
    sec = parsed.values["envelope"]
    trace = read_trace(sec["trace"])
    C = sec["C"]
    if C is None:
        C = diag.empirical_constant(trace, parsed.growth, sec["q"])
    report = bound_envelope(trace, C, parsed.growth, sec["q"])
    print(f"empirical C = {C:.12g}")
    print(f"rows = {len(trace)}, violations = {report.violations.size}, "
          f"worst margin = {report.worst_margin:.6e}")
    if args.out is not None:
        np.savetxt(args.out, np.column_stack([report.times, report.E_k, report.envelope]),
                   delimiter=",", header="t,E_k,envelope", comments="", fmt="%.17g")
        manifest = _Manifest(parsed, "envelope", None)
        manifest.add(args.out)
        manifest.write(_manifest_path(args.out), "dominated" if report.dominated else "violated")
    return EXIT_OK if report.dominated else EXIT_FAIL


DECAY_TOLERANCE = 1e-6


def taylor_green_decay_error(sim: SimConfig) -> float:
    """Relative L2 error of a Taylor-Green run against exp(-m(sqrt 2)^2 t) u0."""
    lattice = sim.lattice()
    u0 = make_initial_data("taylor_green_2d", lattice)
    result = run(sim, u0)
    rate = sim.symbol.squared(math.sqrt(2.0) * lattice.unit)
    exact = math.exp(-rate * result.state.t) * u0.coeffs
    return float(np.linalg.norm(result.state.u.coeffs - exact) / np.linalg.norm(exact))


def cmd_decay_test(args) -> int:
    if args.config is not None:
        parsed = _need_config(args, "run")
        if parsed.sim.d != 2:
            raise ConfigError("decay-test needs d = 2")
        sims = [parsed.sim]
    else:
        sims = [
            SimConfig(d=2, n=64, dt=1e-3, t_end=0.1, symbol=parse_symbol(name, 2))
            for name in ("navier_stokes", "critical", "hyper:2")
        ]
    ok = True
    for sim in sims:
        err = taylor_green_decay_error(sim)
        passed = err <= DECAY_TOLERANCE
        ok &= passed
        print(f"{'PASS' if passed else 'FAIL'} symbol={sim.symbol.name()} relative error {err:.3e}")
    return EXIT_OK if ok else EXIT_FAIL


COMMANDS = {
    "run": cmd_run,
    "criterion": cmd_criterion,
    "gronwall": cmd_gronwall,
    "envelope": cmd_envelope,
    "decay-test": cmd_decay_test,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    logging.basicConfig(
        level=logging.WARNING if args.quiet else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        fft_workers()
        return COMMANDS[args.subcommand](args)
    except ConfigError as exc:
        log.error("config error: %s", exc)
        return EXIT_CONFIG
    except (CheckpointError, TraceFormatError, OSError) as exc:
        log.error("%s", exc)
        return EXIT_FAIL
    except ValueError as exc:
        log.error("%s", exc)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
