"""Exception types raised across the package.

Everything derives from :class:`GrowthSegError` so callers can catch the
package's failures with a single except clause. Input/validation problems and
numerical failures get distinct classes because the CLI maps them to
different exit codes.
"""


class GrowthSegError(Exception):
    """Base class for all growthseg errors."""


# --- data model -----------------------------------------------------------

class LeadingZeroError(GrowthSegError):
    """Running sum starts at zero; trim leading zero years before cumulating."""


class NonPositiveValueError(GrowthSegError):
    """Logarithm requested for a value <= 0."""


class TooShortError(GrowthSegError):
    """Series has too few entries for the requested operation."""


class KindMismatchError(GrowthSegError):
    """Operation received a series/panel of the wrong kind."""


class EmptyInputError(GrowthSegError):
    """No data where at least one value is required."""


class NegativeOffsetError(GrowthSegError):
    """Year lies before the series anchor year."""


# --- fitting --------------------------------------------------------------

class DegenerateDesignError(GrowthSegError):
    """Design matrix has no usable variation (e.g. all time points equal)."""


class NoConvergenceError(GrowthSegError):
    """Iterative fit failed to converge from every starting point."""


class CapacityCollapseError(GrowthSegError):
    """Saturating fit drove the capacity down onto the initial volume."""


class UnorderedBreakpointsError(GrowthSegError):
    """Breakpoint years must be strictly increasing."""


class InfeasibleSegmentationError(GrowthSegError):
    """Cannot place the requested number of segments at minimum length."""


class UnknownSourceError(GrowthSegError):
    """Source id not present in the fitted panel."""


# --- imputation -----------------------------------------------------------

class NoCompleteBackboneError(GrowthSegError):
    """Imputation needs at least one source observed over the full range."""


class ChainDivergenceError(GrowthSegError):
    """Sampler produced a non-finite draw."""


class LengthMismatchError(GrowthSegError):
    """Parallel lists of estimates and standard errors differ in length."""


# --- model selection ------------------------------------------------------

class MixedConventionError(GrowthSegError):
    """Likelihood-based and MSE-based scores cannot be ranked together."""


class NonPositiveSSEError(GrowthSegError):
    """MSE-based score requires a positive error sum of squares."""


class NonPositiveGrowthError(GrowthSegError):
    """Doubling time is undefined for growth rates <= 0."""


class AllFitsFailedError(GrowthSegError):
    """Every candidate model in a sweep failed to fit."""


# --- file formats ---------------------------------------------------------

class ParseError(GrowthSegError):
    """Malformed input file; carries the 1-based line number."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class DuplicateYearError(ParseError):
    """Same year appears twice."""


class GapInYearsError(ParseError):
    """Years must be strictly increasing with no gaps."""


class InteriorMissingError(ParseError):
    """Missing values allowed only at the head/tail of a level series."""


class InvalidSpecError(GrowthSegError):
    """Simulation spec is internally inconsistent."""
