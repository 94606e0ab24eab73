"""Exception types raised across the toolkit."""

from __future__ import annotations


class SteraError(Exception):
    """Base class for all toolkit errors."""


# --- capture log container ---------------------------------------------------

class BadMagicError(SteraError):
    """File does not start (or end) with the MCAP magic bytes."""


class UnsupportedCompressionError(SteraError):
    """A chunk record declares a compression codec; only uncompressed chunks are read."""


class SchemaMismatchError(SteraError):
    """A channel payload (or record framing) does not match its declared schema."""


class MissingIntrinsicsError(SteraError):
    """The log contains no camera intrinsics message."""


# --- geometry ----------------------------------------------------------------

class InvalidDepthError(SteraError, ValueError):
    """Depth value at or below the validity floor."""


class OutOfBoundsError(SteraError, ValueError):
    """Pixel coordinate outside the image."""


class MissingStreamError(SteraError):
    """A required stream (pose, depth, ...) is absent from the session."""


# --- trajectory metrics ------------------------------------------------------

class DegenerateInputError(SteraError, ValueError):
    """Point sets too small or degenerate for rigid alignment."""


class InsufficientOverlapError(SteraError):
    """Too few associated pose pairs to evaluate a metric."""


class NoRevisitError(SteraError):
    """No marker was sighted more than once."""


class NonPositiveHoursError(SteraError, ValueError):
    """Scaling-law input must be a positive number of hours."""


# --- hand kinematics ---------------------------------------------------------

class NoDataError(SteraError):
    """Not enough valid samples to compute a statistic."""


# --- labels ------------------------------------------------------------------

class EmptyCorpusError(SteraError):
    """Label statistics requested over an empty span corpus."""


# --- hierarchy ---------------------------------------------------------------

class InvalidTreeError(SteraError):
    """Statistics requested for a tree that fails validation."""

    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__(f"tree fails validation with {len(self.violations)} violation(s)")


class EmptyInputError(SteraError, ValueError):
    """Tree builder called with no spans."""


class ServiceUnreachableError(SteraError):
    """External tree-generation endpoint could not be reached."""


class ValidationExhaustedError(SteraError):
    """Every attempt of the external tree generator produced an invalid tree."""

    def __init__(self, attempts: int, violations):
        self.attempts = attempts
        self.violations = list(violations)
        super().__init__(
            f"no valid tree after {attempts} attempt(s); "
            f"last attempt had {len(self.violations)} violation(s)"
        )


# --- synthetic generator -----------------------------------------------------

class JointBehindCameraError(SteraError):
    """Generator configuration placed a hand joint at or behind the camera plane."""


class InfeasiblePlanError(SteraError, ValueError):
    """Requested defect counts cannot be placed in a corpus of the given size."""
