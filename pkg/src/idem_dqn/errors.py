"""Exception hierarchy shared by every module of the package."""


class IdemError(Exception):
    """Base class for all errors raised by idem_dqn."""


class ConfigError(IdemError, ValueError):
    pass


# map ingestion
class MapError(IdemError, ValueError):
    pass


class NonRectangular(MapError):
    pass


class MissingStartOrGoal(MapError):
    pass


class DuplicateStartOrGoal(MapError):
    pass


class Unsolvable(MapError):
    pass


# environment dynamics
class SteppedAfterTermination(IdemError, RuntimeError):
    pass


class NoValidRelocation(IdemError, RuntimeError):
    pass


class IndexOutOfRange(IdemError, IndexError):
    pass


# network / optimizer
class DimensionMismatch(IdemError, ValueError):
    pass


class NonFiniteGradient(IdemError, FloatingPointError):
    pass


# replay
class EmptyBuffer(IdemError, RuntimeError):
    pass


class NonFiniteTDError(IdemError, FloatingPointError):
    pass


class UnoccupiedSlot(IdemError, IndexError):
    pass


class BufferBelowWarmup(IdemError, RuntimeError):
    pass
