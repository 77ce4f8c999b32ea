"""Command-line entry point: resonances of strips with distant perturbations."""

import argparse
import logging
import sys

from .commands import handle_command, register_subcommands
from .config import load_environment
from .errors import EmptyProblem, StripResonanceError

logger = logging.getLogger(__name__)

LOG_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"


def configure_logging(level: str, verbose: bool = False) -> None:
    """Log to stdout; diagnostics for failures go to stderr separately."""
    logging.basicConfig(
        level=logging.DEBUG if verbose else getattr(logging, level, logging.INFO),
        format=LOG_FORMAT,
        handlers=[logging.StreamHandler(sys.stdout)],
        force=True,
    )


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", default=None, help="output directory")
    common.add_argument("--modes", type=int, default=None, help="transverse modes M")
    common.add_argument("--grid", type=int, default=None, help="grid points per period cell")
    common.add_argument("--seed", type=int, default=None, help="seed of the gauge check")
    common.add_argument("--jobs", type=int, default=None, help="parallel spacings")
    common.add_argument(
        "--spacings",
        default=None,
        help="sweep, e.g. '2,2;4,4;6,6' (use '2,2/3,3' for one pair per connector)",
    )
    common.add_argument("--check", action="store_true", help="run the invariant suite only")
    common.add_argument("--verbose", "-v", action="store_true", help="debug logging")

    parser = argparse.ArgumentParser(
        prog="strip-resonances",
        description="Resonances of Schrodinger operators on a strip with distant perturbations",
    )
    subparsers = parser.add_subparsers(dest="command", required=True)
    register_subcommands(subparsers, common)
    return parser


def main(argv: list[str] | None = None) -> int:
    """Main entry point; returns the process exit status."""
    args = build_parser().parse_args(argv)
    try:
        args.environment = load_environment()
    except StripResonanceError as e:
        print(e.diagnostic(), file=sys.stderr)
        return e.exit_code
    configure_logging(args.environment.log_level, args.verbose)

    try:
        return handle_command(args)
    except EmptyProblem as e:
        logger.info(f"Nothing to compute: {e.message}")
        print(e.diagnostic(), file=sys.stderr)
        return e.exit_code
    except StripResonanceError as e:
        logger.debug(f"{type(e).__name__}: {e.message}", exc_info=True)
        logger.error(e.message)
        print(e.diagnostic(), file=sys.stderr)
        return e.exit_code
    except KeyboardInterrupt:
        logger.info("Stopped by user")
        return 130


if __name__ == "__main__":
    sys.exit(main())
