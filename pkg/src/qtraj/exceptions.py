"""Exception hierarchy.

Every error carries the CLI exit code it maps to, so the command line layer can
translate failures without a lookup table.
"""


class QTrajError(Exception):
    exit_code = 1


class InvalidInputError(QTrajError, ValueError):
    exit_code = 2


class ZeroVectorError(InvalidInputError):
    pass


class AnnihilationError(InvalidInputError):
    """A matrix maps the representative of a ray to (numerically) zero."""


class InvalidModelError(InvalidInputError):
    pass


class InvalidParameterError(InvalidInputError):
    pass


class ParseError(InvalidInputError):
    pass


class BudgetError(QTrajError):
    exit_code = 2


class NumericalFailureError(QTrajError, ArithmeticError):
    exit_code = 4


class DeadStateError(NumericalFailureError):
    """Total outcome probability vanished; an event of probability zero."""


class InsufficientResolutionError(NumericalFailureError):
    pass


class AssumptionError(QTrajError):
    exit_code = 3


class MultipleFixedPointsError(AssumptionError):
    def __init__(self, dimension, message=None):
        self.dimension = dimension
        super().__init__(
            message or f"channel has a {dimension}-dimensional space of fixed points"
        )
