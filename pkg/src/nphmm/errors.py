"""Exception hierarchy.

Two broad classes matter to callers: input errors (bad files, bad flags,
incompatible data) and numeric failures (a fit that cannot proceed). The CLI
maps the former to exit code 2 and the latter to exit code 3.
"""


class NPHMMError(Exception):
    """Base class for all package errors."""


class InputError(NPHMMError):
    """Invalid user input: files, flags, incompatible data/family pairs."""


class NumericError(NPHMMError):
    """A numeric procedure failed (degenerate state, no usable start, ...)."""


class DimensionMismatchError(InputError):
    """Model and data dimensions are inconsistent."""


class NonUniqueStationaryError(NumericError):
    """The transition matrix is reducible; the stationary distribution is
    not unique and an initial distribution must be supplied explicitly."""


class SequenceTooShortError(InputError):
    """The observation sequence is shorter than the operation requires."""


class IncompatibleFamilyError(InputError):
    """Emission family cannot model the given observation kind."""


class DegenerateDataError(InputError):
    """Too little variety in the data for the requested number of states."""


class EmptyStateError(NumericError):
    """A state received (numerically) zero posterior mass; the EM run is
    aborted and the restart loop decides what to do."""


class ZeroWeightError(NumericError):
    """An M-step received zero total weight."""


class UnderdispersedError(NumericError):
    """Weighted variance <= weighted mean: the negative binomial is
    degenerate. Carries near-Poisson fallback parameters (dispersion capped)."""

    def __init__(self, message, fallback=None):
        super().__init__(message)
        self.fallback = fallback  # (r, p) or None


class RankDeficientError(InputError):
    """A construction would produce a rank-deficient proportion matrix."""


class KTooLargeError(InputError):
    """Exhaustive permutation search supports at most 10 states."""


class LengthMismatchError(InputError):
    """Two sequences that must have equal length do not."""


class EmptyGridError(InputError):
    """A search grid is empty."""


class DegenerateDenominatorError(NumericError):
    """A kernel-weight update denominator underflowed to zero."""


class DegenerateVarianceWarning(UserWarning):
    """A Gaussian component variance hit its lower floor."""


class FitFailedError(NumericError):
    """Every restart of a fit failed."""


class DataFileError(InputError):
    """A data file could not be parsed; message carries the line number."""


class ModelFileError(InputError):
    """A model or config file is malformed or violates an invariant."""
