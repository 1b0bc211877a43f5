"""
Exception hierarchy shared by the numerical kernels, the harness and the CLI.
"""

import numpy as np


class CapacityLossError(Exception):
    """Base class for every error raised by this package"""


class DomainError(CapacityLossError, ValueError):
    """Argument outside the domain of a function (Ei(0), λ <= 0, ...)"""


class RangeError(CapacityLossError, OverflowError):
    """Result not representable as a finite float"""


class SingularMatrixError(CapacityLossError, np.linalg.LinAlgError):
    """Matrix is singular or not positive-definite.

    `value` carries the offending minimum eigenvalue (or singular value).
    """

    def __init__(self, message: str, value: float):
        super().__init__(f"{message} (minimum value {value:.3e})")
        self.value = value


class ConfigurationError(CapacityLossError, ValueError):
    """System dimensions or parameters that cannot be realized"""


class ConfigParseError(ConfigurationError):
    def __init__(self, message: str, line: int, column: int):
        super().__init__(f"line {line}, column {column}: {message}")
        self.line = line
        self.column = column


class ConvergenceError(CapacityLossError, RuntimeError):
    def __init__(self, message: str, last_objective: float, iterations: int):
        super().__init__(f"{message} after {iterations} iterations "
                         f"(last objective {last_objective:.10g})")
        self.last_objective = last_objective
        self.iterations = iterations


class ExperimentError(CapacityLossError):
    """Too many trials of an experiment failed"""

    def __init__(self, message: str, failures: int, trials: int):
        super().__init__(f"{message}: {failures}/{trials} trials failed")
        self.failures = failures
        self.trials = trials
