import sys
import argparse
import logging.handlers
from typing import Any, Sequence

from dotenv import dotenv_values

from core.randsrc import MemoryGuardError
from core.theory import (C_SUB, ConvergenceError, build_constants, c_of, critical_p, default_params,
                         giant_prediction, leading_order_survival, subcritical_bound)
from services.harness import (ExperimentConfig, Regime, Report, calibrate_c_sub, run_branching_suite,
                              run_census_sweep, run_exploration_sweep)
from services.reports import ReportFormat, csv_text, json_text, write_records

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_USAGE = 2

logger = logging.getLogger("hypergiant")


def configure_logging(verbose: bool = False) -> None:
    logging.basicConfig(
        format="[%(asctime)s] %(levelname)s in %(module)s: %(message)s",
        handlers=[
            # Prints to sys.stderr
            logging.StreamHandler(),
            # Writes to a log file which rotates every 1mb, or gets overwritten when the app is restarted
            logging.handlers.RotatingFileHandler(
                filename="simulator.log",
                mode='w',
                maxBytes=1024 * 1024,
                backupCount=3
            )
        ],
        level=logging.DEBUG if verbose else logging.INFO,
        force=True,
    )


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--n", type=int)
    common.add_argument("--k", type=int)
    common.add_argument("--j", type=int)
    common.add_argument("--eps", type=float)
    common.add_argument("--regime", choices=[regime.value for regime in Regime])
    common.add_argument("--trials", type=int)
    common.add_argument("--seed", type=int)
    common.add_argument("--p", type=float, help="Edge probability, overriding (1 +- eps) p_g")
    common.add_argument("--lam", type=float)
    common.add_argument("--delta", type=float)
    common.add_argument("--xi", type=float)
    common.add_argument("--gamma", type=float)
    common.add_argument("--progeny-cap", dest="progeny_cap", type=int)
    common.add_argument("--max-edges", dest="max_edges", type=int)
    common.add_argument("--workers", type=int)
    common.add_argument("--track-lower-coupling", dest="track_lower_coupling", action="store_true", default=None)
    common.add_argument("--save-edges", dest="save_edges", action="store_true", default=None,
                        help="With --out, also write every sampled hypergraph as an edge-set file")
    common.add_argument("--edges", dest="edges_file", help="Edge-set file to decompose instead of sampling")
    common.add_argument("--config", help="dotenv-style key=value experiment file")
    common.add_argument("--out", help="Output directory for reports")
    common.add_argument("--format", choices=[fmt.value for fmt in ReportFormat])
    common.add_argument("--verbose", action="store_true")

    parser = argparse.ArgumentParser(
        prog="hypergiant",
        description="Giant j-components of random k-uniform hypergraphs",
    )
    commands = parser.add_subparsers(dest="command", required=True)
    commands.add_parser("census", parents=[common], help="Sample hypergraphs and decompose them into j-components")
    commands.add_parser("explore", parents=[common], help="Breadth-first explorations with all degree checks")
    commands.add_parser("branching", parents=[common], help="Galton-Watson laws and coupled runs")
    constants = commands.add_parser("constants", parents=[common], help="Print the degree-bound constants")
    constants.add_argument("--alpha", type=float)
    commands.add_parser("predict", parents=[common], help="Print critical probability and giant predictions")
    sweep = commands.add_parser("sweep", parents=[common], help="Census sweep over an eps grid in both regimes")
    sweep.add_argument("--eps-grid", dest="eps_grid", help="Comma-separated eps values")
    sweep.add_argument("--calibrate", action="store_true", help="Print the subcritical constant C_sub")
    return parser


CONFIG_KEYS = ("n", "k", "j", "eps", "regime", "trials", "seed", "p", "lam", "delta", "xi", "gamma",
               "progeny_cap", "max_edges", "out", "format", "workers", "track_lower_coupling", "save_edges",
               "edges_file")


def merged_values(args: argparse.Namespace) -> dict[str, Any]:
    """File values first, explicit flags on top."""
    values: dict[str, Any] = {}
    if args.config:
        values.update({key.lower(): value for key, value in dotenv_values(args.config).items()})
    for key in CONFIG_KEYS:
        flag = getattr(args, key, None)
        if flag is not None:
            values[key] = flag
    return values


def resolve_config(args: argparse.Namespace) -> ExperimentConfig:
    """
    :raises ValueError: If required keys are missing or a value does not parse.
    """
    return ExperimentConfig.from_mapping(merged_values(args))


def emit(report: Report) -> int:
    config = report.config
    if config.out:
        write_records(report.records, report.summary(), config.out, report.kind, config.format)
    else:
        match config.format:
            case ReportFormat.CSV:
                sys.stdout.write(csv_text(report.records, report.kind))
            case ReportFormat.JSON:
                sys.stdout.write(json_text({"trials": report.records, **report.summary()}))
    for check in report.checks:
        level = logging.INFO if check.passed else logging.ERROR
        logger.log(level, f"Check {check.name}: {'pass' if check.passed else 'FAIL'} "
                          f"(observed {check.observed}, target {check.target}) {check.detail}")
    return EXIT_OK if report.passed else EXIT_CHECK_FAILED


def print_constants(values: dict[str, Any], alpha: float | None) -> int:
    try:
        k, j, eps = int(values["k"]), int(values["j"]), float(values["eps"])
    except KeyError as e:
        raise ValueError(f"Missing config key: {e.args[0]}") from e
    constants = build_constants(k, j, eps, alpha)
    sys.stdout.write(f"k: {k}\nj: {j}\neps: {eps}\nalpha: {constants.alpha!r}\n"
                     f"c: {constants.c}\n")
    sys.stdout.write(csv_text(constants.to_rows(), "constants"))
    return EXIT_OK


def print_prediction(config: ExperimentConfig) -> int:
    n, k, j, eps = config.n, config.k, config.j, config.eps
    prediction = giant_prediction(n, k, j, eps)
    params = default_params(n, k, j, eps, config.delta)
    lines = {
        "critical_p": critical_p(n, k, j),
        "p": prediction.p,
        "survival": prediction.survival,
        "leading_order_survival": leading_order_survival(eps, c_of(k, j)),
        "giant_asymptotic_size": prediction.asymptotic_size,
        "giant_solver_size": prediction.solver_size,
        "subcritical_bound": subcritical_bound(n, j, eps, C_SUB),
        "lam": params.lam,
        "xi": params.xi,
        "gamma": params.gamma,
    }
    sys.stdout.write("".join(f"{key}: {value!r}\n" for key, value in lines.items()))
    return EXIT_OK


def run_sweep(config: ExperimentConfig, eps_grid: str | None, calibrate: bool) -> int:
    if calibrate:
        sys.stdout.write(f"c_sub: {calibrate_c_sub(config)!r}\n")
        return EXIT_OK
    grid = [float(value) for value in eps_grid.split(",")] if eps_grid else [config.eps]
    records: list[dict[str, Any]] = []
    passed = True
    for eps in grid:
        for regime in Regime:
            report = run_census_sweep(config.with_overrides(eps=eps, regime=regime))
            passed &= report.passed
            records.append({"eps": eps, "regime": regime.value, **report.aggregate,
                            "passed": report.passed})
    summary = {"kind": "sweep", "config": config.to_dict(), "passed": passed}
    if config.out:
        write_records(records, summary, config.out, "sweep", config.format)
    else:
        sys.stdout.write(csv_text(records, "sweep", columns=sorted({key for record in records for key in record})))
    return EXIT_OK if passed else EXIT_CHECK_FAILED


def cli(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_USAGE if e.code else EXIT_OK
    configure_logging(args.verbose)
    try:
        if args.command == "constants":
            return print_constants(merged_values(args), args.alpha)
        config = resolve_config(args)
        match args.command:
            case "census":
                return emit(run_census_sweep(config))
            case "explore":
                return emit(run_exploration_sweep(config))
            case "branching":
                return emit(run_branching_suite(config))
            case "predict":
                return print_prediction(config)
            case "sweep":
                return run_sweep(config, args.eps_grid, args.calibrate)
    except (ValueError, MemoryGuardError, ConvergenceError) as e:
        logger.error(str(e))
        return EXIT_USAGE
    return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(cli())
