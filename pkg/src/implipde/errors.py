"""Exception hierarchy for the implipde package."""

from __future__ import annotations


class ImplipdeError(Exception):
    """Base class for all package errors."""


class ExprSyntaxError(ImplipdeError):
    """Malformed expression source. Carries the byte offset of the offending token."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (offset {offset})")
        self.offset = offset


class UnknownFunctionError(ExprSyntaxError):
    """An identifier was called like a function but is not registered."""

    def __init__(self, name: str, offset: int):
        super().__init__(f"unknown function '{name}'", offset)
        self.name = name


class UnboundVariableError(ImplipdeError):
    """Evaluation hit a variable with no binding."""

    def __init__(self, name: str):
        super().__init__(f"unbound variable '{name}'")
        self.name = name


class EvalDomainError(ImplipdeError):
    """Evaluation left the real domain (log of nonpositive, division by zero,
    overflow, or any non-finite intermediate)."""


class ArityError(ImplipdeError):
    """An expression uses variables outside the set its slot allows."""


class NoRootError(ImplipdeError):
    """No root found: bracket without sign change, or iteration diverged."""


class SingularPointError(ImplipdeError):
    """|dC/dphi| fell below the singular threshold; derivative formulas are unreliable here."""


class ZeroDerivativeError(ImplipdeError):
    """An operation divides by a gradient component that is (numerically) zero."""


class RankDeficientSystemError(ImplipdeError):
    """The coefficient-recovery system is singular; the matrix is not determined."""


class GateNotSatisfiedError(ImplipdeError):
    """The determinant-vanishing precondition does not hold for the given matrix."""


class EmptyLevelSetError(ImplipdeError):
    """Level-set sampling found no admissible points."""


class SolverCoverageError(ImplipdeError):
    """Too large a fraction of sample points failed to solve."""


class ScenarioError(ImplipdeError):
    """Scenario file failed to parse or validate. Carries a 1-based line number."""

    def __init__(self, message: str, line: int | None = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line
