"""
Exception types for qsp-lab
"""


class QSPError(RuntimeError):
    """Base class for numerical failures raised by qsp-lab"""


class GridError(QSPError, ValueError):
    """Bad grid arguments, grid mismatch or a corrupted linear system"""


class ConfigError(QSPError, ValueError):
    """Invalid configuration file or parameter set"""


class NonFiniteEncountered(QSPError):
    """A NaN or Inf appeared inside an iterative solve"""


class MaxIterExceeded(QSPError):
    """Iteration budget exhausted; ``solution`` holds the best iterate"""

    def __init__(self, message: str, solution=None):
        super().__init__(message)
        self.solution = solution


class BracketError(QSPError):
    """A scan failed to bracket the maximiser or the sign change it looks for"""


class StepCollapse(QSPError):
    """Armijo backtracking exhausted without an acceptable step"""


class NonConvergence(QSPError):
    """Mountain-pass run stopped above tolerance; ``critical_point`` holds the best iterate"""

    def __init__(self, message: str, critical_point=None):
        super().__init__(message)
        self.critical_point = critical_point


class ThresholdViolation(UserWarning):
    """Level is not below the thresholds that certify compactness"""
