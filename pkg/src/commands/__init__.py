"""Command-line subcommands."""

from . import experiment  # noqa: F401  registers the handlers
from .registry import command, handle_command, register_subcommands, registered_commands

__all__ = ["command", "handle_command", "register_subcommands", "registered_commands"]
