"""Exception hierarchy.

Every error raised by the library derives from :class:`DalnError`; the class
name is what the command line reports on standard error.
"""


class DalnError(Exception):
    """Base class for all library errors."""


# network construction and queries
class NetworkError(DalnError):
    pass


class CycleDetected(NetworkError):
    def __init__(self, cycle):
        self.cycle = tuple(cycle)
        super().__init__(
            "directed cycle through segments " + " -> ".join(str(s) for s in self.cycle)
        )


class DanglingVertexRef(NetworkError):
    pass


class NonpositiveLength(NetworkError):
    pass


class MissingLengthAndCoords(NetworkError):
    pass


class UnknownSegment(NetworkError, KeyError):
    def __str__(self):
        return Exception.__str__(self)


class UnknownVertex(NetworkError, KeyError):
    def __str__(self):
        return Exception.__str__(self)


class InvalidLocation(NetworkError):
    pass


class NoRootDesignated(NetworkError):
    pass


class RootCannotReach(NetworkError):
    pass


class AmbiguousAllocation(NetworkError):
    pass


class IsolatedVertex(NetworkError):
    pass


class NonpositiveFactor(NetworkError):
    pass


# patterns
class PatternError(DalnError):
    pass


class UnknownPoint(PatternError, KeyError):
    def __str__(self):
        return Exception.__str__(self)


class DuplicateLocation(PatternError):
    pass


class UnknownMark(PatternError):
    pass


# models and simulation
class ModelError(DalnError):
    pass


class NegativeRate(ModelError):
    pass


class NonfiniteIntensity(ModelError):
    pass


class RootSolveFailure(ModelError):
    pass


class BoundViolation(ModelError):
    pass


# inference
class InferenceError(DalnError):
    pass


class DomainError(InferenceError):
    """An observed point has zero conditional intensity (log-likelihood -inf)."""


class DegenerateData(InferenceError):
    pass


class NonConvergence(InferenceError):
    pass


class ZeroLengthSegment(InferenceError):
    pass


class EmptySample(InferenceError):
    pass


class FormatError(DalnError, ValueError):
    """A file does not follow its declared format."""
