# src/errors.py
"""
Exception hierarchy shared by every module.

The CLI maps these onto exit codes:
    DataError   -> 2  (bad shapes, labels, partitions, files)
    SolverError -> 3  (step underflow, SVD non-convergence, aborted training)
"""

from typing import Iterable, List, Optional


class MtlError(Exception):
    pass


class DataError(MtlError):
    """Invalid input data. `issues` keeps every violated invariant, not just the first."""

    def __init__(self, message: str, issues: Optional[Iterable[str]] = None):
        self.issues: List[str] = list(issues) if issues is not None else [message]
        super().__init__(message)


class FormatError(DataError):
    pass


class SolverError(MtlError):
    pass


class TrainingError(SolverError):
    """Raised when a solver fails mid-training; keeps what was computed so far."""

    def __init__(self, message: str, report=None, model=None):
        super().__init__(message)
        self.report = report
        self.model = model
