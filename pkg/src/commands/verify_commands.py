"""
Property verification command.
"""

from pathlib import Path
from typing import List, Optional

import typer
from rich.console import Console

from src.config import load_config
from src.models.errors import VerificationFailure
from src.models.reporting import checks_table
from src.models.verification import run_checks

console = Console()


def run_verification(seed, names=None):
    """Run the named checks, print the result table and raise on any failure."""
    results = run_checks(seed, names or None)
    console.print(checks_table(results, seed))
    failed = [result for result in results if not result.passed]
    for result in failed:
        console.print(f"{result.name}: {result.description}")
    if failed:
        raise VerificationFailure([result.name for result in failed])
    return results


def verify(
    config_path: Optional[Path] = typer.Option(None, "--config", "-c", help="Optional INI run configuration."),
    out: Optional[Path] = typer.Option(None, "--out", "-o", help="Unused; accepted for a uniform CLI."),
    svg: Optional[bool] = typer.Option(None, "--svg/--no-svg", help="Unused; accepted for a uniform CLI."),
    check: List[str] = typer.Option([], "--check", help="Run only this check (repeatable)."),
    seed: Optional[int] = typer.Option(None, "--seed", help="Seed of the random samples."),
):
    """Run the property checks; exits with 4 if any of them fails."""
    names = list(check)
    if config_path is not None:
        config = load_config(str(config_path))
        seed = config.study.seed if seed is None else seed
        names = names or list(config.study.checks)
    run_verification(20240101 if seed is None else seed, names)
