"""Domain error types shared across the toolkit.

Every error carries a stable name so the CLI can print module-qualified
identifiers (e.g. ``trace.GapTooLong``) and exit 1.
"""


class WattscopeError(Exception):
    """Base class for all domain errors."""

    module = "wattscope"

    @property
    def qualified_name(self) -> str:
        return f"{self.module}.{type(self).__name__}"


# trace
class MalformedRow(WattscopeError):
    module = "trace"


class IrregularInterval(WattscopeError):
    module = "trace"


class GapTooLong(WattscopeError):
    module = "trace"


class InfeasibleSpec(WattscopeError):
    module = "trace"


class MixedInputs(WattscopeError):
    module = "trace"


class LengthMismatch(WattscopeError):
    module = "trace"


# powermodel
class Underdetermined(WattscopeError):
    module = "powermodel"


class NonMonotoneFit(WattscopeError):
    module = "powermodel"


class OutOfRange(WattscopeError):
    module = "powermodel"


# characterize
class ZeroMean(WattscopeError):
    module = "characterize"


class SeriesTooShort(WattscopeError):
    module = "characterize"


# nn
class ShapeMismatch(WattscopeError):
    module = "nn"


class EmptyDataset(WattscopeError):
    module = "nn"


class DegenerateTarget(WattscopeError):
    module = "nn"


class ModelFormatError(WattscopeError):
    module = "nn"


# baselines
class UnknownJob(WattscopeError):
    module = "baselines"


class StateSpaceTooLarge(WattscopeError):
    module = "baselines"


# library
class DuplicateKey(WattscopeError):
    module = "library"


class IoFailure(WattscopeError):
    module = "library"


class EmptyLibrary(WattscopeError):
    module = "library"


# monitor
class NonPositiveAggregate(WattscopeError):
    module = "monitor"


# eval
class ZeroMeanTruth(WattscopeError):
    module = "eval"


class UnknownScenario(WattscopeError):
    module = "eval"
