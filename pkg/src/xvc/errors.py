"""Exception types shared across the package."""


class ContractError(ValueError):
    """A precondition on shapes, sizes or configuration was violated."""


class DomainError(ArithmeticError):
    """An operand is outside the mathematical domain of an operation.

    ``operand`` is the zero-based index of the offending operand, when known.
    """

    def __init__(self, message, operand=None):
        super().__init__(message)
        self.operand = operand


class GraphError(RuntimeError):
    """Misuse of the differentiation tape (e.g. backward run twice)."""
