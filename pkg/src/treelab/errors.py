"""Exception hierarchy.

Two families matter to callers: :class:`ValidationError` for bad input
(the CLI maps it to exit code 2) and :class:`NumericalError` for a
computation that ran but could not certify its answer (exit code 1).
"""

from __future__ import annotations


class TreelabError(Exception):
    """Base class for every error raised by the package."""


class ValidationError(TreelabError, ValueError):
    """Input violates a documented precondition."""


class NumericalError(TreelabError, ArithmeticError):
    """A numerical procedure failed to meet its own accuracy contract."""


# graph_core
class DegreeTooSmall(ValidationError):
    pass


class NonPositiveLength(ValidationError):
    pass


class DanglingEndpoint(ValidationError):
    pass


class EqualBoundaryPoints(ValidationError):
    pass


# resolvent
class NegativeLambda(ValidationError):
    pass


class Diverged(NumericalError):
    pass


class NotConverged(NumericalError):
    pass


class DepthTooSmall(ValidationError):
    pass


class TailNotControlled(NumericalError):
    pass


# heat_kernel
class SourceTooCloseToBoundary(ValidationError):
    pass


class StepTooLarge(ValidationError):
    pass


class IterationStalled(NumericalError):
    pass


# brownian_mc
class VarianceExplosion(NumericalError):
    pass


# thermo
class NotStronglyConnected(ValidationError):
    pass


class PowerIterationStalled(NumericalError):
    pass


# asymptotics
class FitRejected(NumericalError):
    pass


class WindowContaminated(NumericalError):
    pass
