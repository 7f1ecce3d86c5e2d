"""Command line entry point: ``run``, ``verify`` and ``table``."""
from __future__ import annotations

import argparse
import sys
from typing import List, Optional

import hho_afem
from hho_afem import error, util
from hho_afem.afem.benchmarks import benchmark
from hho_afem.afem.enums import ProblemId
from hho_afem.afem.loop import convergence_rates, read_history, run_afem, write_csv
from hho_afem.afem.marking import aitken_extrapolate
from hho_afem.afem.verify import run_suites
from hho_afem.config import Config
from hho_afem.fem.mesh import read_mesh
from hho_afem.fem.solve import SolverConfig


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hho-afem",
        description="Adaptive hybrid high-order runs with guaranteed lower energy bounds",
    )
    parser.add_argument("--version", action="version", version=hho_afem.VERSION)
    subparsers = parser.add_subparsers(dest="command", required=True)

    run = subparsers.add_parser("run", help="Run one benchmark and write its convergence CSV")
    run.add_argument("--problem", choices=[str(item) for item in ProblemId])
    run.add_argument("--k", type=int)
    run.add_argument("--theta", type=float)
    run.add_argument("--max-ndof", dest="max_ndof", type=int)
    run.add_argument("--out", help="CSV path; stdout when omitted")
    run.add_argument("--config", help="Flat key = value file")
    run.add_argument("--mesh", help="Initial mesh in the plain-text format")
    run.add_argument("--poincare-constant", dest="poincare_constant", type=float)
    run.add_argument("--tolerance", type=float)
    run.add_argument("--max-iterations", dest="max_iterations", type=int)
    run.add_argument("--alpha", type=float)
    run.add_argument("--num-threads", dest="num_threads", type=int)
    run.add_argument("--condense", action="store_const", const=True, default=None)

    verify = subparsers.add_parser("verify", help="Run the property suites")
    verify.add_argument("--seed", type=int, default=0)
    verify.add_argument("--quick", action="store_true", help="Smaller sample sizes")

    table = subparsers.add_parser("table", help="Convergence rates from a CSV")
    table.add_argument("csv")
    table.add_argument("--columns", nargs="+", default=["RHS", "gap", "err_stress", "err_grad"])
    table.add_argument("--last", type=int, default=3, help="Levels used in the fit (0: all)")
    table.add_argument("--reference", type=float, help="Reference energy for E-LEB")
    table.add_argument(
        "--aitken", action="store_true", help="Extrapolate the reference energy from Eh"
    )
    return parser


def _run_settings(args: argparse.Namespace) -> dict:
    settings = dict(hho_afem.config.values)
    if args.config:
        try:
            settings.update(Config.read(path=args.config))
        except OSError as err:
            raise error.ConfigurationError(
                f"Cannot read config file '{args.config}'", details={"reason": str(err)}
            )
    overrides = {
        key: getattr(args, key)
        for key in (
            "problem",
            "k",
            "theta",
            "max_ndof",
            "out",
            "mesh",
            "poincare_constant",
            "tolerance",
            "max_iterations",
            "alpha",
            "num_threads",
            "condense",
        )
    }
    return Config.merge(settings, overrides)


def _command_run(args: argparse.Namespace) -> int:
    settings = _run_settings(args)
    if "problem" not in settings:
        raise error.ConfigurationError("No problem given; use --problem or a config file")
    if settings.get("num_threads") is not None:
        hho_afem.num_threads = settings["num_threads"]

    solver = SolverConfig(
        **{
            key: settings[key]
            for key in ("tolerance", "max_iterations", "condense")
            if key in settings
        }
    )
    options = {
        key: settings[key]
        for key in ("k", "theta", "max_ndof", "poincare_constant", "alpha")
        if key in settings
    }
    mesh = read_mesh(settings["mesh"]) if settings.get("mesh") else None
    config = benchmark(settings["problem"], solver=solver, mesh=mesh, **options)

    out = settings.get("out")
    records = run_afem(config, out=out)
    if out is None:
        write_csv(records, sys.stdout)
    else:
        util.log_info("Wrote convergence history", path=out, levels=len(records))

    return 0 if records and records[-1].converged else 1


def _command_verify(args: argparse.Namespace) -> int:
    results = run_suites(seed=args.seed, quick=args.quick)
    for result in results:
        status = "ok" if result.passed else "FAILED"
        print(f"{result.name:<28} {status}")
    return 0 if all(result.passed for result in results) else 1


def _command_table(args: argparse.Namespace) -> int:
    history = read_history(args.csv)
    reference = args.reference
    if args.aitken:
        extrapolation = aitken_extrapolate(history["Eh"].dropna().to_numpy())
        print(
            f"aitken reference energy {extrapolation.value:.10g}"
            + (" (degenerate)" if extrapolation.degenerate else "")
        )
        if reference is None:
            reference = extrapolation.value

    rates = convergence_rates(
        history,
        columns=args.columns,
        last=args.last or None,
        reference_energy=reference,
    )
    print(rates.to_string(index=False, float_format=lambda value: f"{value:.4f}"))
    return 0


_COMMANDS = {"run": _command_run, "verify": _command_verify, "table": _command_table}


def main(argv: Optional[List[str]] = None) -> int:
    """
    Runs the command line interface.

    Returns
    -------
        0 on success, 1 when a run or suite fails, 2 on usage or
        configuration errors.
    """
    parser = build_parser()
    args = parser.parse_args(argv)

    try:
        return _COMMANDS[args.command](args)
    except (error.HHOError, error.ValidationError) as err:
        print(f"hho-afem: error: {err}", file=sys.stderr)
        return 2
