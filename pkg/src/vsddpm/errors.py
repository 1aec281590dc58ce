"""Exception hierarchy shared by every module.

Each error derives from :class:`VsddpmError` and from the closest builtin
so callers can catch either.
"""


class VsddpmError(Exception):
    """Base class for all package errors."""


# volume / io
class InvariantViolation(VsddpmError, ValueError):
    pass


class MalformedHeader(VsddpmError, ValueError):
    pass


class UnsupportedDatatype(VsddpmError, ValueError):
    pass


class UnsupportedEndianness(VsddpmError, ValueError):
    pass


class TruncatedPayload(VsddpmError, ValueError):
    pass


class SidecarMismatch(VsddpmError, ValueError):
    pass


class IoFailure(VsddpmError, OSError):
    pass


# shapes and indices
class ShapeMismatch(VsddpmError, ValueError):
    pass


class StepOutOfRange(VsddpmError, IndexError):
    pass


class IndexOutOfRange(VsddpmError, IndexError):
    pass


class CountMismatch(VsddpmError, ValueError):
    pass


# schedule
class InvalidBetaRange(VsddpmError, ValueError):
    pass


class StepCountTooLarge(VsddpmError, ValueError):
    pass


# denoiser
class DegenerateDesign(VsddpmError, ValueError):
    pass


# losses
class WindowTooLarge(VsddpmError, ValueError):
    pass


class TooManyScalesForShape(VsddpmError, ValueError):
    pass


class ExtractorShapeMismatch(VsddpmError, ValueError):
    pass


class PhaseMismatch(VsddpmError, ValueError):
    pass


class EpochOutOfRange(VsddpmError, ValueError):
    pass


# planner / tiler
class WindowLargerThanVolume(VsddpmError, ValueError):
    pass


class InvalidOverlap(VsddpmError, ValueError):
    pass


class BudgetInfeasible(VsddpmError, ValueError):
    pass


class InfeasibleAtMinimumOverlap(BudgetInfeasible):
    pass


# normalize
class DomainMismatch(VsddpmError, ValueError):
    pass


class ZeroStd(VsddpmError, ValueError):
    pass


class EmptyStatsRegion(VsddpmError, ValueError):
    pass


class MissingGlobalStats(VsddpmError, ValueError):
    pass


class StatsMismatch(VsddpmError, ValueError):
    pass


# metrics
class EmptyMask(VsddpmError, ValueError):
    pass


# augment
class AngleOutOfRange(VsddpmError, ValueError):
    pass


class FactorOutOfRange(VsddpmError, ValueError):
    pass


class NegativeSigma(VsddpmError, ValueError):
    pass


class OrderTooHigh(VsddpmError, ValueError):
    pass
