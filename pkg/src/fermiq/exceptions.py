"""Exception hierarchy shared by all fermiq modules."""


class FermiqError(Exception):
    """Base class for all library errors."""


class MalformedInputError(FermiqError, ValueError):
    """Input has the wrong shape or violates a required symmetry."""


class SymmetryViolationError(MalformedInputError):
    pass


class DomainError(FermiqError, ValueError):
    """A phase-space point lies outside the closed classical domain."""


class DecompositionError(FermiqError, ArithmeticError):
    pass


class ResourceLimitError(FermiqError):
    """Requested mode count exceeds what a brute-force routine supports."""


class StepSizeError(FermiqError, ValueError):
    pass


class ConditioningError(FermiqError, ArithmeticError):
    pass


class ConstantTableError(FermiqError, ArithmeticError):
    """Two independent closed forms for the same constant disagree."""


class InconclusiveRunError(FermiqError):
    """A Monte-Carlo run produced no usable samples."""
