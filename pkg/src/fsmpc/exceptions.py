class NumericDomainError(ArithmeticError):
    """A computation produced a non-finite value or left its valid domain."""


class PreconditionError(ValueError):
    """An argument violates a documented precondition."""


class NoValidStepError(RuntimeError):
    """No flexible step satisfies the contraction test.

    Raised only if the feasibility chain is broken, i.e. the OCP solution
    handed to the step selector does not satisfy the average descent
    constraint.
    """


class SearchExhaustedError(RuntimeError):
    pass
