"""Command-line entry point.

Value precedence: command-line flag > ``--params`` JSON file > built-in defaults.
"""

from __future__ import annotations

import argparse
import json
import sys
import tempfile
import time
from pathlib import Path

import numpy as np

from .controllers import SynthesisError
from .experiments import (
    DEFAULT_SEED,
    boundary_sweep,
    default_threads,
    design_controllers,
    nonlinear_compare,
    random_sweep,
)
from .plant import PlantParams, solve_linear_reference, solve_nonlinear_reference
from .safety_filter import FilterError
from .sim import SimConfig, SimulationError, simulate, write_trajectory_csv

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_NUMERICAL = 3

# keys a --params file may carry besides the plant parameters
RUN_KEYS = {"alpha": 1000.0, "dt": 10e-6, "t_end": 50e-3, "seed": DEFAULT_SEED, "n": 1000}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _float(text: str) -> float:
    try:
        return float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"cannot parse number {text!r}") from None


def _int(text: str) -> int:
    try:
        return int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"cannot parse integer {text!r}") from None


def _vec2(text: str) -> tuple[float, float]:
    parts = text.split(",")
    if len(parts) != 2:
        raise argparse.ArgumentTypeError(f"expected two comma-separated numbers, got {text!r}")
    return _float(parts[0]), _float(parts[1])


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--params", metavar="FILE", help="JSON file with plant parameters (R [ohm], L [H], "
                        "V [V], E [V], omega_nom [rad/s], I_max [A], V_nom [V], S_nom [VA], I_nom [A]) "
                        "and optionally alpha, dt, t_end, seed, n")
    common.add_argument("--out", metavar="DIR", default=".", help="output directory (default: current directory)")
    common.add_argument("--alpha", type=_float, help="barrier class-K gain [1/s] (default 1000)")
    common.add_argument("--dt", type=_float, help="integration step [s] (default 1e-5)")
    common.add_argument("--t-end", dest="t_end", type=_float, help="simulation length [s] (default 0.05)")
    common.add_argument("--control-hold", choices=["stage", "zoh"], default="stage",
                        help="evaluate the law at every RK4 stage, or hold it over each step (default stage)")
    common.add_argument("--threads", type=_int, default=None, help="worker threads [-] (default: all cores)")
    common.add_argument("--dump-trajectories", action="store_true", help="also write per-case trajectory CSVs")
    common.add_argument("--decimate", type=_int, default=1, help="keep every k-th row in trajectory CSVs [-]")

    parser = _Parser(
        prog="safe-inverter",
        description="Current-limiting safety filter for a grid-forming inverter.",
        epilog="Flags override --params file values, which override the built-in defaults.",
    )
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    sub.add_parser("synthesize", parents=[common], help="print LQR and safe gains as JSON")

    single = sub.add_parser("single", parents=[common], help="simulate one case and write its trajectory CSV")
    single.add_argument("--controller", choices=["lqr", "safe-k", "cbf"], default="cbf")
    single.add_argument("--x0", type=_vec2, default=(-1.55, -4.76), help="initial current I_d,I_q [A]")
    single.add_argument("--magnitude", type=_float, default=None, help="reference current magnitude [A] "
                        "(signed; default I_max)")
    single.add_argument("--plant", choices=["linear", "nonlinear"], default="linear")

    sub.add_parser("boundary-sweep", parents=[common], help="100 initial conditions on the current limit")
    rnd = sub.add_parser("random-sweep", parents=[common], help="random initial conditions and references")
    rnd.add_argument("--seed", type=_int, default=None, help=f"PRNG seed [-] (default {DEFAULT_SEED})")
    rnd.add_argument("-n", "--n", dest="n", type=_int, default=None, help="number of cases [-] (default 1000)")
    sub.add_parser("nonlinear-compare", parents=[common], help="filtered LQR on linear vs nonlinear plant")
    return parser


def _resolve(args) -> tuple[PlantParams, dict]:
    file_values = {}
    if args.params:
        try:
            with open(args.params) as fh:
                file_values = json.load(fh)
        except OSError as exc:
            raise UsageError(f"cannot read params file: {exc}") from None
        except json.JSONDecodeError as exc:
            raise UsageError(f"params file is not valid JSON: {exc}") from None
        if not isinstance(file_values, dict):
            raise UsageError("params file must hold a JSON object")
    run = {k: file_values.pop(k, default) for k, default in RUN_KEYS.items()}
    try:
        params = PlantParams.from_dict(file_values)
    except (TypeError, ValueError) as exc:
        raise UsageError(f"invalid plant parameters: {exc}") from None
    for key in RUN_KEYS:
        value = getattr(args, key, None)
        if value is not None:
            run[key] = value
    return params, run


def _prepare_out(path: str) -> Path:
    out = Path(path)
    try:
        out.mkdir(parents=True, exist_ok=True)
        with tempfile.NamedTemporaryFile(dir=out):
            pass
    except OSError as exc:
        raise PermissionError(f"cannot write to output directory {out}: {exc}") from None
    return out


def _synthesize(design) -> dict:
    safe = design.safe
    return {
        "K_lqr": design.K_lqr.tolist(),
        "K_safe": safe.K.tolist(),
        "lambda": safe.lam,
        "eig_max": safe.eig_max,
        "certificate": {
            "eigvec_residual": safe.eigvec_residual,
            "eig_max_minus_lambda": safe.eig_max - safe.lam,
            "margin": safe.margin,
            "valid": safe.valid,
        },
        "x_star": design.reference.x_star.tolist(),
        "u_star": design.reference.u_star,
    }


def _attach_vector_values(argv: list[str]) -> list[str]:
    """Join ``--x0 -1.5,-4`` into ``--x0=-1.5,-4`` so a leading minus is not read as a flag."""
    out, i = [], 0
    while i < len(argv):
        if argv[i] == "--x0" and i + 1 < len(argv):
            out.append(f"--x0={argv[i + 1]}")
            i += 2
        else:
            out.append(argv[i])
            i += 1
    return out


def run(argv=None) -> int:
    parser = build_parser()
    argv = _attach_vector_values(list(sys.argv[1:] if argv is None else argv))
    try:
        try:
            args = parser.parse_args(argv)
        except SystemExit as exc:  # --help
            return int(exc.code or 0)
        params, run_cfg = _resolve(args)
        cfg = SimConfig(dt=float(run_cfg["dt"]), t_end=float(run_cfg["t_end"]), control_hold=args.control_hold)
        if args.decimate < 1:
            raise UsageError("--decimate must be a positive integer")
        threads = args.threads if args.threads is not None else default_threads()
        if threads < 1:
            raise UsageError("--threads must be at least 1")
        out = _prepare_out(args.out)
    except UsageError as exc:
        print(f"safe-inverter: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ValueError as exc:
        print(f"safe-inverter: error: invalid configuration: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except PermissionError as exc:
        print(f"safe-inverter: error: {exc}", file=sys.stderr)
        return EXIT_USAGE

    dump = out if args.dump_trajectories else None
    try:
        t0 = time.perf_counter()
        design = design_controllers(params, alpha=float(run_cfg["alpha"]))
        if args.command == "synthesize":
            payload = _synthesize(design)
            payload["runtime_s"] = time.perf_counter() - t0
            print(json.dumps(payload, indent=2))
            return EXIT_OK
        if args.command == "single":
            magnitude = params.I_max if args.magnitude is None else args.magnitude
            if args.plant == "linear":
                ref = solve_linear_reference(magnitude, design.plant, params.I_max)
            else:
                if magnitude < 0:
                    raise UsageError("--magnitude must be non-negative for the nonlinear plant")
                ref = solve_nonlinear_reference(magnitude, params)
            traj = simulate(args.plant, design.controllers[args.controller], np.array(args.x0), ref, cfg, params,
                            design.weights)
            path = out / f"trajectory_{args.controller}_{args.plant}.csv"
            write_trajectory_csv(traj, path, args.decimate)
            print(json.dumps({"csv": str(path), "cost": traj.cost, "max_current": traj.max_current,
                              "min_h": traj.min_h, "unsafe": traj.unsafe, "x_star": ref.x_star.tolist(),
                              "u_star": ref.u_star}, indent=2))
            return EXIT_OK
        if args.command == "boundary-sweep":
            report = boundary_sweep(design, cfg, threads, dump_dir=dump, decimate=args.decimate)
        elif args.command == "random-sweep":
            if int(run_cfg["n"]) < 1:
                raise UsageError("-n must be at least 1")
            report = random_sweep(design, int(run_cfg["n"]), int(run_cfg["seed"]), cfg, threads,
                                  dump_dir=dump, decimate=args.decimate)
        else:
            report = nonlinear_compare(design, cfg, threads, dump_dir=dump, decimate=args.decimate)
        target = report.write(out)
        print(json.dumps({"summary": str(target / "summary.json"), "aggregates": report.aggregates()}, indent=2))
        return EXIT_OK
    except UsageError as exc:
        print(f"safe-inverter: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (SimulationError, SynthesisError, FilterError, ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"safe-inverter: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except ValueError as exc:
        print(f"safe-inverter: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"safe-inverter: error: cannot write output: {exc}", file=sys.stderr)
        return EXIT_USAGE


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
