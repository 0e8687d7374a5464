"""Exception hierarchy shared across the simulator."""


class TacfootError(Exception):
    """Base class for all simulator errors."""


class UnreachableTarget(TacfootError):
    pass


class Unsupported(TacfootError):
    pass


class OutOfFrame(TacfootError):
    pass


class TrackingLost(TacfootError):
    pass


class LengthMismatch(TacfootError, ValueError):
    pass


class DegenerateArc(TacfootError, ValueError):
    pass


class NoTransition(TacfootError):
    """The tap arc never crossed the edge, so no reference can be chosen."""


class SingularKernel(TacfootError):
    pass


class Unfitted(TacfootError):
    pass


class EdgeLost(TacfootError):
    """A verification arc did not bracket the dissimilarity minimum."""


class SearchExhausted(TacfootError):
    pass


class ConfigError(TacfootError):
    """Invalid experiment configuration; ``path`` names the offending field."""

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


class ParseError(TacfootError):
    def __init__(self, message: str, line: int | None = None):
        prefix = f"line {line}: " if line is not None else ""
        super().__init__(prefix + message)
        self.line = line
