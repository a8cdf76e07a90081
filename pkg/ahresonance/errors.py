from __future__ import annotations


class AhResonanceError(Exception):
    """Base class; ``exit_code`` is what the CLI returns for it."""
    exit_code = 1


class ValidationError(AhResonanceError):
    exit_code = 2


class OracleFailure(AhResonanceError):
    exit_code = 3


class NumericalError(AhResonanceError):
    exit_code = 4


# model / grid validation
class NonPositiveWarp(ValidationError):
    pass


class BadEvenness(ValidationError):
    pass


class BadDomain(ValidationError):
    pass


class OutOfDomain(ValidationError):
    pass


class BadParameters(ValidationError):
    pass


class GridModelMismatch(ValidationError):
    pass


class MissingAbsorptionAtEdge(ValidationError):
    pass


class ConfigError(ValidationError):
    pass


class SupportViolation(ValidationError):
    pass


class NonRealZ(ValidationError):
    pass


class OutsideNeighborhood(ValidationError):
    pass


class WindowViolation(ValidationError):
    pass


class NotCharacteristic(ValidationError):
    pass


# numerical failures
class BranchCut(NumericalError):
    pass


class SquareRootFailure(NumericalError):
    pass


class StepFailure(NumericalError):
    pass


class NoConvergence(NumericalError):
    def __init__(self, message: str, trace=None):
        super().__init__(message)
        self.trace = list(trace or [])


class SpuriousCandidate(NumericalError):
    pass


class ContourThroughPole(NumericalError):
    pass


class RankDeficientProbe(NumericalError):
    pass


class AtPole(NumericalError):
    pass


class IndicialDegeneracy(NumericalError):
    pass


class FrobeniusDivergence(NumericalError):
    pass


def exit_code_for(exc: BaseException) -> int:
    return getattr(exc, "exit_code", 1)
