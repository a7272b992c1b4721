"""Exception hierarchy for the resotrim toolkit.

Every error carries a short machine-readable ``category`` slug used by the
CLI for stderr reporting and exit-status semantics.
"""


class ResotrimError(Exception):
    category = "error"


class DomainError(ResotrimError):
    """An argument is outside the mathematical domain of an operation."""

    category = "domain"


class InvalidParamsError(ResotrimError):
    category = "invalid-params"


class OutOfRangeError(ResotrimError):
    """Requested trim exceeds the remaining shoelace range."""

    category = "out-of-range"

    def __init__(self, message, max_shift):
        super().__init__(message)
        self.max_shift = max_shift


class UnmatchableError(ResotrimError):
    category = "unmatchable"


class UnderdeterminedError(ResotrimError):
    category = "underdetermined"


class NoResonanceError(ResotrimError):
    category = "no-resonance"


class InvalidTraceError(ResotrimError):
    category = "invalid-trace"


class ParseError(ResotrimError):
    category = "parse"

    def __init__(self, message, line=None):
        super().__init__(message)
        self.line = line


class ValidationError(ResotrimError):
    category = "validation"

    def __init__(self, message, paths=()):
        super().__init__(message)
        self.paths = list(paths)


class CutoffError(ResotrimError):
    """Charge-basis cutoff too small for the requested accuracy."""

    category = "cutoff"


class InversionError(ResotrimError):
    category = "inversion-failed"


class DirectionError(ResotrimError):
    """A trim was requested in the physically impossible direction."""

    category = "direction"


class EstimationError(ResotrimError):
    category = "estimation"


class UndefinedConditionalError(EstimationError):
    category = "undefined-conditional"

    def __init__(self, message, condition):
        super().__init__(message)
        self.condition = condition
