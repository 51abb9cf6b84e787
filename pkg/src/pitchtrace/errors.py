"""Exception hierarchy shared across the package.

Every error raised on bad input data derives from :class:`DataError` so the
CLI can map it to exit code 2 in one place.
"""

from __future__ import annotations


class DataError(Exception):
    """Base class for errors caused by invalid input data."""


class OutOfBounds(DataError):
    def __init__(self, coordinate, message: str | None = None):
        self.coordinate = coordinate
        super().__init__(message or f"coordinate out of bounds: {coordinate!r}")


class InsufficientFrames(DataError):
    pass


class InsufficientCorrespondences(DataError):
    pass


class DegenerateConfiguration(DataError):
    pass


class ProjectionAtInfinity(DataError):
    pass


class DegenerateInterpolation(DataError):
    pass


class InsufficientObservations(DataError):
    def __init__(self, agents, message: str | None = None):
        self.agents = list(agents)
        super().__init__(message or f"agents with fewer than 2 observed frames: {self.agents}")


class DimensionError(DataError):
    pass


class NumericalInstability(DataError):
    def __init__(self, term: str):
        self.term = term
        super().__init__(f"non-finite value in loss term '{term}'")


class TrainingDiverged(DataError):
    def __init__(self, epoch: int):
        self.epoch = epoch
        super().__init__(f"training diverged at epoch {epoch}")


class GridMismatch(DataError):
    pass


class RangeError(DataError):
    pass


class HorizonUnderrun(DataError):
    def __init__(self, horizon_s: float, needed: int, available: int):
        self.horizon_s = horizon_s
        super().__init__(
            f"horizon {horizon_s:g}s needs {needed} frames, sequence has {available}"
        )


class EmptyReport(DataError):
    pass


class PolicyFault(DataError):
    def __init__(self, step: int):
        self.step = step
        super().__init__(f"policy produced non-finite displacement at step {step}")


class ParseError(DataError):
    def __init__(self, line: int, reason: str, path=None):
        self.line = line
        self.reason = reason
        self.path = path
        where = f"{path}:" if path is not None else "line "
        super().__init__(f"{where}{line}: {reason}")


class TooFewMatches(DataError):
    pass
