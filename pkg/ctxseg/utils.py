import logging
from typing import Any, Callable

import typer
from rich.logging import RichHandler

from .__version__ import __version__
from .config import cfg


def option_callback(func: Callable) -> Callable:  # type: ignore
    def wrapper(cls: Any, value: str) -> None:
        if not value:
            return
        func(cls, value)
        raise typer.Exit()

    return wrapper


@option_callback
def get_ctxseg_version(*_args: Any) -> None:
    """
    Displays the current installed version of ctxseg
    """
    typer.echo(f"ctxseg {__version__}")


def configure_logging(level: str = "") -> None:
    """
    Routes library logging through rich, at ``LOG_LEVEL`` unless given.
    """
    logging.basicConfig(
        level=(level or cfg.get("LOG_LEVEL")).upper(),
        format="%(message)s",
        datefmt="[%X]",
        handlers=[RichHandler(rich_tracebacks=True, show_path=False)],
        force=True,
    )
