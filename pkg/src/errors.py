# src/errors.py
"""
Error taxonomy shared by the estimators, the simulator and the CLI.

Every error derives from PeacError and from the builtin a caller would
expect for the same situation (ValueError for bad inputs, RuntimeError for
numerical breakdowns), so `except ValueError` keeps working.
"""


class PeacError(Exception):
    """Root of all peac-bench errors."""


class PhysicalityWarning(UserWarning):
    """A signal violates |baseline| + amplitude <= 1 (reported, never rejected)."""


# ---------------------------------------------------------------------------
# Input errors
# ---------------------------------------------------------------------------


class InvalidParameterError(PeacError, ValueError):
    pass


class SingularParameterError(InvalidParameterError):
    """Parameter value at which the requested quantity is singular (e.g. sigma = 0)."""


class ConfigError(PeacError, ValueError):
    pass


class DatasetSchemaError(PeacError, ValueError):
    """Dataset table violates its schema. `rows` lists offending row indices."""

    def __init__(self, message: str, rows=None):
        self.rows = list(rows) if rows is not None else []
        if self.rows:
            shown = ", ".join(str(r) for r in self.rows[:20])
            more = "" if len(self.rows) <= 20 else f" (+{len(self.rows) - 20} more)"
            message = f"{message} [rows: {shown}{more}]"
        super().__init__(message)


class IncompleteDatasetError(DatasetSchemaError):
    pass


# ---------------------------------------------------------------------------
# Degenerate geometry / inversion errors
# ---------------------------------------------------------------------------


class DegenerateError(PeacError, ValueError):
    pass


class DivisionDegenerateError(DegenerateError):
    pass


class DegenerateRangeError(DegenerateError):
    pass


class DegenerateGeometryError(DegenerateError):
    pass


class BranchDegenerateError(DegenerateError):
    pass


class UndefinedPhaseError(PeacError, ValueError):
    pass


class InconsistentAmplitudeError(PeacError, ValueError):
    pass


class NoSolutionError(PeacError, ValueError):
    pass


class SignConventionError(PeacError, ValueError):
    pass


# ---------------------------------------------------------------------------
# Numerical failures
# ---------------------------------------------------------------------------


class NumericalError(PeacError, RuntimeError):
    def __init__(self, message: str, diagnostics=None):
        self.diagnostics = dict(diagnostics or {})
        super().__init__(message)


class FitFailureError(NumericalError):
    """A fit did not converge. `best_params` holds the best point reached."""

    def __init__(self, message: str, best_params=None, diagnostics=None):
        self.best_params = best_params
        super().__init__(message, diagnostics)


class NumericalIntegrationError(NumericalError):
    pass
