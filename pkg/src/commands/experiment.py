"""Experiment subcommands: run, sweep, check and bands."""

import argparse
import logging
import sys
from pathlib import Path

from ..artifacts import (
    bands_csv,
    resonances_csv,
    summary_json,
    write_all,
    write_atomic,
    write_checks,
)
from ..config import ExperimentConfig, load_config, parse_spacings, with_overrides
from ..errors import ConfigError, NumericalFailure
from ..pipeline import build_model, run_experiment
from .registry import command

logger = logging.getLogger(__name__)


def prepare_config(args: argparse.Namespace) -> ExperimentConfig:
    """Load the config named on the command line and apply the flag overrides."""
    config = load_config(args.config)
    jobs = args.jobs
    if jobs is None and "jobs" not in config.solver.model_fields_set:
        jobs = args.environment.jobs
    return with_overrides(
        config,
        modes=args.modes,
        grid=args.grid,
        seed=args.seed,
        out=args.out,
        jobs=jobs,
        spacings=parse_spacings(args.spacings) if args.spacings else None,
    )


def output_dir(args: argparse.Namespace, config: ExperimentConfig) -> Path:
    return Path(config.output_dir or args.environment.output_dir)


# ============================================================================
# Command Handlers
# ============================================================================


@command("run", "solve every configured spacing and write all result files")
def handle_run(args: argparse.Namespace) -> int:
    if args.check:
        return handle_check(args)
    config = prepare_config(args)
    model = build_model(config)
    report = run_experiment(config, model=model)
    write_all(model, report, output_dir(args, config))
    return 0


@command("sweep", "solve a list of spacings and print the consolidated resonance table")
def handle_sweep(args: argparse.Namespace) -> int:
    if args.check:
        return handle_check(args)
    config = prepare_config(args)
    if not args.spacings and not config.sweep:
        raise ConfigError("sweep needs --spacings or a 'sweep' list in the config")
    model = build_model(config)
    report = run_experiment(config, model=model)
    write_all(model, report, output_dir(args, config))
    sys.stdout.write(resonances_csv(report))
    return 0


@command("check", "run the invariant suite on the first spacing and write checks.json")
def handle_check(args: argparse.Namespace) -> int:
    config = prepare_config(args)
    report = run_experiment(config, checks_only=True)
    out = output_dir(args, config)
    write_checks(report, out)
    write_atomic(out / "summary.json", summary_json(report))

    failed = [c for c in report.all_checks if not c.passed]
    if failed:
        names = ",".join(sorted({c.name for c in failed}))
        raise NumericalFailure(
            f"{len(failed)} of {len(report.all_checks)} invariant checks failed", checks=names
        )
    logger.info(f"All {len(report.all_checks)} invariant checks passed")
    return 0


@command("bands", "write the band structure of every background to bands.csv")
def handle_bands(args: argparse.Namespace) -> int:
    config = prepare_config(args)
    model = build_model(config)
    write_atomic(output_dir(args, config) / "bands.csv", bands_csv(model))
    return 0
