"""Subcommand system using decorator-based registration."""

import argparse
import logging
from dataclasses import dataclass
from typing import Callable, Dict

logger = logging.getLogger(__name__)

Handler = Callable[[argparse.Namespace], int]


@dataclass(frozen=True)
class Command:
    name: str
    help: str
    handler: Handler
    needs_config: bool = True


# Global registry for subcommands
_commands: Dict[str, Command] = {}


def command(name: str, help: str, needs_config: bool = True):
    """
    Decorator to register a subcommand handler.

    Example:
        @command("run", "run the full pipeline")
        def handle_run(args):
            # handler code, returns the exit status
    """

    def decorator(func: Handler) -> Handler:
        _commands[name] = Command(name=name, help=help, handler=func, needs_config=needs_config)
        logger.debug(f"Registered command: '{name}'")
        return func

    return decorator


def registered_commands() -> list[Command]:
    return [_commands[name] for name in sorted(_commands)]


def register_subcommands(
    subparsers: argparse._SubParsersAction, common: argparse.ArgumentParser
) -> None:
    """Add one subparser per registered command, each taking the shared options."""
    for entry in registered_commands():
        parser = subparsers.add_parser(entry.name, help=entry.help, parents=[common])
        if entry.needs_config:
            parser.add_argument("config", help="experiment config (.json, .yaml or .yml)")
        parser.set_defaults(command=entry.name)


def handle_command(args: argparse.Namespace) -> int:
    """Dispatch to the handler registered under ``args.command``."""
    entry = _commands.get(args.command)
    if entry is None:
        raise KeyError(f"unknown command '{args.command}'")
    logger.info(f"Executing command '{entry.name}'")
    return entry.handler(args)
