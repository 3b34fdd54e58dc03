"""Main entry point to run MIMO-FAS simulation campaigns."""

import argparse
import logging
import sys
from pathlib import Path

from .campaign import run_campaign
from .config import (
    CampaignConfig,
    Experiment,
    Settings,
    load_raw_config,
    validate_config,
)
from .errors import (
    BracketError,
    CombinationLimitError,
    DomainError,
    InfeasibleSelectionError,
    NumericalRankError,
)
from .report import CampaignReport

#: Create logger for this file.
logger = logging.getLogger()

#: Output directory when neither the command line, the configuration nor
#: the environment sets one.
DEFAULT_OUTPUT_DIR: Path = Path("results")

#: Errors of a campaign that cannot run.
SIMULATION_ERRORS: tuple[type[Exception], ...] = (
    BracketError,
    CombinationLimitError,
    DomainError,
    InfeasibleSelectionError,
    NumericalRankError,
)


def _add_run_options(parser: argparse.ArgumentParser) -> None:
    """Add the options overriding a campaign configuration."""
    parser.add_argument(
        "--seed",
        type=int,
        help="Campaign seed",
        dest="seed",
    )
    parser.add_argument(
        "--trials",
        type=int,
        help="Number of trials per point",
        dest="trials",
    )
    parser.add_argument(
        "--threads",
        type=int,
        help="Number of worker threads, all cores by default",
        dest="threads",
    )
    parser.add_argument(
        "--out",
        type=Path,
        help="Output directory",
        dest="out",
    )


def _create_argument_parser() -> argparse.ArgumentParser:
    """Create the list of arguments supported and return the parser."""
    parser = argparse.ArgumentParser(prog="mimo-fas")
    parser.add_argument(
        "-v",
        "--verbose",
        action="store_true",
        help="Verbose mode",
        dest="verbose",
    )
    commands = parser.add_subparsers(dest="command")

    run = commands.add_parser("run", help="Run a campaign")
    run.add_argument(
        "config",
        action="store",
        help="Configuration file",
        metavar="config.json",
    )
    run.add_argument(
        "--snr-db",
        type=float,
        help="Transmit SNR in dB",
        dest="snr_db",
    )
    _add_run_options(run)

    validate = commands.add_parser("validate", help="Check a configuration")
    validate.add_argument(
        "config",
        action="store",
        help="Configuration file",
        metavar="config.json",
    )

    dmt = commands.add_parser("dmt", help="Tabulate tradeoff curves")
    dmt.add_argument("--rank-rx", type=int, default=23, dest="rank_rx")
    dmt.add_argument("--rank-tx", type=int, default=23, dest="rank_tx")
    dmt.add_argument("--n-min", type=int, default=4, dest="n_min")
    dmt.add_argument(
        "--aperture",
        type=float,
        default=1.0,
        help="Side of the square aperture in wavelengths",
        dest="aperture",
    )
    dmt.add_argument("--out", type=Path, dest="out")

    table1 = commands.add_parser(
        "table1",
        help="Tabulate the effective rank versus aperture",
    )
    table1.add_argument(
        "--xi",
        type=float,
        default=1e-3,
        help="Eigenvalue threshold",
        dest="xi",
    )
    table1.add_argument(
        "--ports",
        type=int,
        default=10,
        help="Ports along each dimension",
        dest="ports",
    )
    table1.add_argument("--out", type=Path, dest="out")
    return parser


def _apply_overrides(raw: dict, args: argparse.Namespace) -> dict:
    """Return `raw` updated with the command line options."""
    raw = dict(raw)
    for name in ("seed", "trials", "threads"):
        if (value := getattr(args, name, None)) is not None:
            raw[name] = value
    if getattr(args, "snr_db", None) is not None:
        raw["scenario"] = {**raw.get("scenario", {}), "snr_db": args.snr_db}
    return raw


def _exit_on_diagnostics(raw: dict) -> CampaignConfig:
    """Return the configuration or exit with its diagnostics."""
    diagnostics = validate_config(raw)
    if diagnostics:
        sys.exit("\n".join(diagnostics))
    return CampaignConfig.model_validate(raw)


def _output_dir(config: CampaignConfig, out: Path | None) -> Path | None:
    """Return the output directory, None to write on standard output."""
    return out or config.output or Settings().output_dir


def _log_to_stderr() -> None:
    """Move the log records written on standard output to standard error."""
    for handler in logging.getLogger().handlers:
        if (
            isinstance(handler, logging.StreamHandler)
            and handler.stream is sys.stdout
        ):
            handler.setStream(sys.stderr)


def _run(config: CampaignConfig, output_dir: Path | None) -> None:
    """Run `config` and write its results."""
    if output_dir is None:
        # Standard output only carries the results table.
        _log_to_stderr()
    logger.debug(config.model_dump_json())
    try:
        result = run_campaign(config)
    except SIMULATION_ERRORS as error:
        sys.exit(str(error))
    report = CampaignReport(result)
    if output_dir is None:
        sys.stdout.write(report.csv_content())
        return
    report.write(output_dir)


def _load(config_file: str) -> dict:
    """Return the raw configuration or exit with the parsing error."""
    try:
        raw = load_raw_config(config_file)
    except (OSError, ValueError) as error:
        sys.exit(f"{config_file}: {error}")
    if not isinstance(raw, dict):
        sys.exit(f"{config_file}: configuration must be a mapping")
    return raw


def main(argv: list[str] | None = None) -> None:
    """Entry point of campaign runner script."""
    # Parse command line
    parser = _create_argument_parser()
    args = parser.parse_args(argv)

    log_level = logging.DEBUG if args.verbose else logging.INFO

    # Create logger
    logging.basicConfig(
        stream=sys.stdout,
        format="%(asctime)s - %(levelname)s - %(message)s",
        level=log_level,
    )

    if args.command == "validate":
        diagnostics = validate_config(_load(args.config))
        if diagnostics:
            sys.exit("\n".join(diagnostics))
        logger.info("%s is valid", args.config)
        return

    if args.command == "run":
        raw = _apply_overrides(_load(args.config), args)
        config = _exit_on_diagnostics(raw)
        _run(config, _output_dir(config, args.out) or DEFAULT_OUTPUT_DIR)
        return

    if args.command == "dmt":
        raw = {
            "experiment": Experiment.DMT.value,
            "scenario": {
                "rx": {"w1": args.aperture, "w2": args.aperture},
                "tx": {"w1": args.aperture, "w2": args.aperture},
                "n_rx": args.n_min,
                "n_tx": args.n_min,
            },
            "dmt": {"rank_rx": args.rank_rx, "rank_tx": args.rank_tx},
        }
        config = _exit_on_diagnostics(raw)
        _run(config, _output_dir(config, args.out))
        return

    if args.command == "table1":
        raw = {
            "experiment": Experiment.TABLE1.value,
            "scenario": {"rx": {"n1": args.ports, "n2": args.ports}},
            "xi": args.xi,
        }
        config = _exit_on_diagnostics(raw)
        _run(config, _output_dir(config, args.out))
        return

    parser.print_usage()
