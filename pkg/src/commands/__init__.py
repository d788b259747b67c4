"""
Commands package initialization.
"""

from src.commands import run_commands, verify_commands


def register_commands(app):
    """Register the CLI commands with the application, each guarded by its error handlers."""
    # Run commands
    app.command("solve")(app.guarded(run_commands.solve))
    app.command("study")(app.guarded(run_commands.study))
    app.command("adapt")(app.guarded(run_commands.adapt))
    app.command("cr")(app.guarded(run_commands.cr))

    # Verification
    app.command("verify")(app.guarded(verify_commands.verify))
