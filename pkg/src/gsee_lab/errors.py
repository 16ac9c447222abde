"""Exception types shared across the package."""

from __future__ import annotations


class GseeError(Exception):
    """Base class for all package errors."""


class NotHermitian(GseeError):
    pass


class NotNormalized(GseeError):
    pass


class DegenerateGroundGap(GseeError):
    pass


class DomainViolation(GseeError):
    pass


class WeightSumViolation(GseeError):
    pass


class EmptySpectrum(GseeError):
    pass


class DegreeCapExceeded(GseeError):
    pass


class QuadratureFailure(GseeError):
    pass


class InvalidParameters(GseeError):
    pass


class OracleFailure(GseeError):
    pass


class PromiseViolationDetected(GseeError):
    pass


class LemmaViolation(GseeError):
    pass


class TrialCapExhausted(GseeError):
    """Raised when rejection sampling hits its trial budget.

    The partially filled run is attached as ``run`` so callers can inspect it.
    """

    def __init__(self, message: str, run=None):
        super().__init__(message)
        self.run = run


class NoAcceptedSamples(GseeError):
    """Raised when the refinement stage accepts nothing.

    ``acceptance_rate`` carries the observed rate (zero) and ``rounds`` the
    number of rounds attempted.
    """

    def __init__(self, message: str, rounds: int = 0, expected_rate: float | None = None):
        super().__init__(message)
        self.rounds = rounds
        self.expected_rate = expected_rate
