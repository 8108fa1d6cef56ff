# emslb_pkg/errors.py
"""
Exception hierarchy. Every error carries the process exit code the CLI
reports for it: 2 for invalid input, 3 for numerical accuracy problems,
1 for everything else.
"""


class EmslbError(Exception):
    """Base class for all library errors."""
    exit_code = 1


# --- Validation (exit code 2) ---
class InvalidArgumentError(EmslbError, ValueError):
    exit_code = 2


class DegenerateGeometryError(EmslbError, ValueError):
    """Coincident points, zero range and similar geometric degeneracies."""
    exit_code = 2


class DegenerateDirectionError(DegenerateGeometryError):
    """A direction was requested for the zero vector."""


class PoleSingularityError(DegenerateGeometryError):
    """Azimuth derivatives are undefined on the polar axis."""


class ConfigValidationError(EmslbError, ValueError):
    exit_code = 2

    def __init__(self, problems):
        if isinstance(problems, str):
            problems = [problems]
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


class UnknownExperimentError(ConfigValidationError):
    pass


# --- Numerical (exit code 3) ---
class SingularCovarianceError(EmslbError, ArithmeticError):
    exit_code = 3


class UnidentifiableParametersError(EmslbError, ArithmeticError):
    exit_code = 3

    def __init__(self, message, cond_number=float("inf")):
        self.cond_number = cond_number
        super().__init__(message)


class AccuracyError(EmslbError, ArithmeticError):
    exit_code = 3

    def __init__(self, message, diagnostic=None):
        self.diagnostic = diagnostic or {}
        super().__init__(message)


# --- I/O (exit code 1) ---
class OutputError(EmslbError, OSError):
    exit_code = 1

    def __init__(self, message, path=None):
        self.path = path
        super().__init__(message)
