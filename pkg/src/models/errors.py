"""
Exception hierarchy for the plate solver.

Every error carries the process exit code the CLI maps it to and, once it has
crossed a pipeline boundary, the stage it was raised in.
"""


class PlateError(Exception):
    """Base class for all errors raised by the plate package."""

    exit_code = 3

    def __init__(self, message, stage=None):
        super().__init__(message)
        self.message = message
        self.stage = stage

    def with_stage(self, stage):
        """Return the same error tagged with the pipeline stage it escaped from."""
        if self.stage is None:
            self.stage = stage
        return self

    def __str__(self):
        if self.stage:
            return f"[{self.stage}] {self.message}"
        return self.message


class ConfigError(PlateError):
    """Unparseable or invalid run configuration."""

    exit_code = 2

    def __init__(self, message, field=None, line=None):
        where = ""
        if field:
            where = f"{field}: "
        if line is not None:
            where = f"line {line}: {where}"
        super().__init__(where + message, stage="config")
        self.field = field
        self.line = line


class DataAssumptionError(PlateError):
    """Source data that the requested estimator is not valid for."""

    exit_code = 2

    def __init__(self, message, assumption):
        super().__init__(f"{message} (violates {assumption})", stage="estimate")
        self.assumption = assumption


class MeshError(PlateError):
    exit_code = 2


class QuadratureError(PlateError):
    exit_code = 2


class SpaceError(PlateError):
    pass


class TransferError(PlateError):
    pass


class SourceError(PlateError):
    exit_code = 2


class NumericalError(PlateError):
    """Numerical failure in a solve, eigensolve or refinement."""

    exit_code = 3


class SolverError(NumericalError):
    def __init__(self, message, smallest_pivot=None, residual=None):
        details = []
        if smallest_pivot is not None:
            details.append(f"smallest pivot {smallest_pivot:.3e}")
        if residual is not None:
            details.append(f"relative residual {residual:.3e}")
        if details:
            message = f"{message} ({', '.join(details)})"
        super().__init__(message, stage="solve")
        self.smallest_pivot = smallest_pivot
        self.residual = residual


class RefinementError(NumericalError):
    def __init__(self, message):
        super().__init__(message, stage="refine")


class VerificationFailure(PlateError):
    """One or more named property checks failed."""

    exit_code = 4

    def __init__(self, failed):
        self.failed = list(failed)
        super().__init__("failed checks: " + ", ".join(self.failed), stage="verify")
