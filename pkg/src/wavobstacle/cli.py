"""Command line entry point: ``wavobstacle {run,verify,convergence,presets}``."""
from __future__ import annotations

import argparse
import logging
import sys

import numpy as np

from .errors import ConfigError, WavObstacleError
from .evolution import run_evolution
from .scenario_io import (
    PRESET_NAMES,
    build_scenario,
    exact_solution,
    load_config,
    preset,
    serialize_config,
    write_outputs,
)
from . import verification as ver

log = logging.getLogger("wavobstacle")

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise _UsageError(message)


class _UsageError(Exception):
    pass


def _add_source(p):
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--config", metavar="FILE", help="YAML scenario file")
    g.add_argument("--preset", metavar="NAME", help=f"built-in scenario ({', '.join(PRESET_NAMES)})")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="wavobstacle", description="Hyperbolic obstacle problems in 1D.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("run", help="run a scenario and write CSV/JSON outputs")
    _add_source(p)
    p.add_argument("--out", metavar="DIR", help="output directory (default: config output.dir)")
    p.add_argument("--stride", type=int, help="write every k-th snapshot")
    p.add_argument("--osc-tol", type=float, default=0.02, help="energy stabilisation tolerance")

    p = sub.add_parser("verify", help="run a scenario and check the discrete estimates")
    _add_source(p)
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("convergence", help="refinement study")
    _add_source(p)
    p.add_argument("--levels", type=int, default=3)

    p = sub.add_parser("presets", help="list presets or print one as YAML")
    p.add_argument("name", nargs="?")
    return parser


def _config(args):
    if args.preset is not None:
        return preset(args.preset)
    return load_config(args.config)


def _cmd_run(args):
    cfg = _config(args)
    stride = args.stride if args.stride is not None else cfg.output["stride"]
    if stride < 1:
        raise ConfigError("--stride must be >= 1")
    out = args.out if args.out is not None else cfg.output["dir"]
    record = run_evolution(build_scenario(cfg))
    report = ver.detect_stabilization(record, args.osc_tol)
    for path in write_outputs(record, report, out, cfg, stride):
        log.info("wrote %s", path)
    return EXIT_OK


def verify_record(record, seed: int = 0) -> list:
    """Run every applicable check; returns (name, passed, detail) rows."""
    sc = record.scenario
    rows = []
    tol_e = ver.energy_tolerance(record)
    r = ver.check_energy_monotone(record, tol_e)
    rows.append(("energy non-increasing", r.passed, f"max increase {r.worst:.3e} (tol {tol_e:.1e})"))
    r = ver.check_key_estimate(record, tol_e)
    rows.append(("key estimate max E_i <= E_0", r.passed, f"max excess {r.worst:.3e}"))
    if sc.lower is not None:
        worst_feas = float(np.max(
            sc.lower.interior_values[None, :] - record.snapshots[1:, 1:-1], initial=-np.inf
        ))
        rows.append(("feasibility u >= g", worst_feas <= 1e-9, f"max violation {max(worst_feas, 0):.3e}"))
        if sc.upper is None:
            tol = ver.variational_tolerance(record)
            rep = ver.check_variational_inequality(record, tol)
            rows.append((
                "variational inequality",
                rep.passed,
                f"stationarity {rep.stationarity.max():.2e}, complementarity "
                f"{rep.complementarity.max():.2e} (tol {tol:.1e})",
            ))
        stab = ver.detect_stabilization(record, 0.02)
        rows.append((
            "stabilisation (informational)",
            True,
            f"t_bar={stab.t_bar}, impacts={len(stab.impacts)}",
        ))
    else:
        rep = ver.check_weak_form_free(record, ver.random_test_functions(record, 20, seed))
        rows.append(("discrete weak form", rep.max_relative <= 1e-8, f"max relative residual {rep.max_relative:.2e}"))
    return rows


def _cmd_verify(args):
    cfg = _config(args)
    record = run_evolution(build_scenario(cfg))
    rows = verify_record(record, args.seed)
    width = max(len(r[0]) for r in rows)
    for name, ok, detail in rows:
        print(f"{'PASS' if ok else 'FAIL'}  {name:<{width}}  {detail}")
    return EXIT_OK if all(ok for _, ok, _ in rows) else EXIT_FAIL


def _cmd_convergence(args):
    cfg = _config(args)
    if args.levels < 2:
        raise ConfigError("--levels must be >= 2")
    table = ver.convergence_study(build_scenario(cfg), exact_solution(cfg), args.levels)
    print(f"# reference: {table.reference}")
    print("n_cells,n_steps,error_max,error_l2_space_time,error_at_T,rate")
    for r in table.rows:
        rate = "" if r.rate is None else f"{r.rate:.4f}"
        print(f"{r.n_cells},{r.n_steps},{r.error_max:.6e},{r.error_l2_space_time:.6e},{r.error_at_T:.6e},{rate}")
    return EXIT_OK


def _cmd_presets(args):
    if args.name is None:
        for name in PRESET_NAMES:
            flag = " (experimental)" if preset(name).experimental else ""
            print(f"{name}{flag}")
    else:
        print(serialize_config(preset(args.name)), end="")
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        print(f"wavobstacle: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(message)s",
        stream=sys.stderr,
    )
    handler = {
        "run": _cmd_run,
        "verify": _cmd_verify,
        "convergence": _cmd_convergence,
        "presets": _cmd_presets,
    }[args.command]
    try:
        return handler(args)
    except ConfigError as exc:
        print(f"wavobstacle: config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (WavObstacleError, OSError) as exc:
        print(f"wavobstacle: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
