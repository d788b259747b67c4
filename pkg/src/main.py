"""
Main entry point for the plate command-line application.
"""

import logging
import os
import sys
from functools import wraps

import typer
from numpy.linalg import LinAlgError
from rich.console import Console
from rich.logging import RichHandler
from rich.markup import escape
from scipy.sparse.linalg import ArpackError
from threadpoolctl import threadpool_limits

from src.commands import register_commands
from src.models.errors import ConfigError, NumericalError, PlateError, VerificationFailure

console = Console(stderr=True)
logger = logging.getLogger(__name__)


class PlateApp(typer.Typer):
    """Typer application with exception handlers keyed by exception class."""

    def __init__(self, **kwargs):
        super().__init__(**kwargs)
        self.error_handlers = {}

    def errorhandler(self, exc_class):
        def register(handler):
            self.error_handlers[exc_class] = handler
            return handler
        return register

    def handle(self, exc):
        for cls in type(exc).__mro__:
            if cls in self.error_handlers:
                return self.error_handlers[cls](exc)
        raise exc

    def guarded(self, command):
        """Wrap a command so that registered exceptions become exit codes."""
        @wraps(command)
        def run(*args, **kwargs):
            try:
                return command(*args, **kwargs)
            except PlateError as exc:
                raise typer.Exit(code=self.handle(exc))
            except (LinAlgError, ArpackError, ArithmeticError) as exc:
                error = NumericalError(f"{type(exc).__name__}: {exc}", stage="numerics")
                raise typer.Exit(code=self.handle(error)) from exc
        return run


def configure_logging(level):
    root = logging.getLogger()
    for handler in list(root.handlers):
        if isinstance(handler, RichHandler):
            root.removeHandler(handler)
    root.addHandler(RichHandler(console=console, show_path=False, rich_tracebacks=True))
    root.setLevel(level.upper())


def thread_limit():
    value = os.environ.get("PLATE_THREADS")
    if not value:
        return None
    try:
        limit = int(value)
    except ValueError as exc:
        raise ConfigError(f"PLATE_THREADS must be a positive integer, got '{value}'") from exc
    if limit < 1:
        raise ConfigError(f"PLATE_THREADS must be a positive integer, got '{value}'")
    return limit


def create_app():
    """Create and configure the plate application."""
    app = PlateApp(name="plate", help="Nonconforming finite elements for the biharmonic plate.",
                   add_completion=False, no_args_is_help=True)

    @app.callback()
    def setup(
        ctx: typer.Context,
        log_level: str = typer.Option("WARNING", "--log-level", envvar="PLATE_LOG_LEVEL",
                                      help="Logging level for the console handler."),
    ):
        configure_logging(log_level)
        try:
            limit = thread_limit()
        except ConfigError as exc:
            raise typer.Exit(code=app.handle(exc))
        if limit is not None:
            # lives until the process exits
            ctx.with_resource(threadpool_limits(limits=limit))
            logger.info("thread pools limited to %d", limit)

    # Register commands
    register_commands(app)

    # Error handlers
    @app.errorhandler(ConfigError)
    def config_error(exc):
        console.print(f"[red]configuration error[/red] {escape(str(exc))}")
        return exc.exit_code

    @app.errorhandler(VerificationFailure)
    def verification_failure(exc):
        console.print(f"[red]verification failed[/red] {escape(str(exc))}")
        return exc.exit_code

    @app.errorhandler(PlateError)
    def plate_error(exc):
        console.print(f"[red]error[/red] {escape(str(exc))}")
        return exc.exit_code

    return app


app = create_app()


def main():
    app()


if __name__ == "__main__":
    sys.exit(main())
