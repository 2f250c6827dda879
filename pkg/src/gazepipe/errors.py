"""Exception hierarchy.

``InputError`` subclasses signal bad or insufficient inputs (CLI exit code 1);
``ComputationError`` subclasses signal a failure while processing valid-looking
inputs (CLI exit code 2).
"""
from __future__ import annotations


class GazeError(Exception):
    pass


class InputError(GazeError, ValueError):
    pass


class ComputationError(GazeError, RuntimeError):
    pass


# geometry
class DegenerateLandmarks(InputError):
    pass


class DegenerateGeometry(InputError):
    pass


class OutOfHemisphere(InputError):
    pass


class OpposedDirections(InputError):
    pass


class CoincidentPoints(InputError):
    pass


class PoseDivergence(ComputationError):
    pass


class BehindCamera(ComputationError):
    pass


class RollResidual(ComputationError):
    pass


# imaging
class SingularWarp(InputError):
    pass


# dataset io
class ParseError(InputError):
    def __init__(self, message: str, path=None, line: int | None = None):
        loc = ""
        if path is not None:
            loc = f"{path}:"
        if line is not None:
            loc += f"{line}:"
        super().__init__(f"{loc} {message}" if loc else message)
        self.path = path
        self.line = line


class ValidationError(InputError):
    pass


class EmptyInput(InputError):
    pass


class EmptyOutput(ComputationError):
    pass


# regressors
class ShapeMismatch(InputError):
    pass


class EmptyTrainingSet(InputError):
    pass


class SingularSystem(ComputationError):
    pass


class NonFiniteLoss(ComputationError):
    def __init__(self, iteration: int, loss: float):
        super().__init__(f"non-finite training loss {loss!r} at iteration {iteration}")
        self.iteration = iteration


# synth
class OutOfRangeGaze(InputError):
    pass


# harness
class TooFewPersons(InputError):
    pass


class EmptyArchive(InputError):
    pass


class InsufficientBins(InputError):
    pass


class NoPairedSamples(InputError):
    pass
