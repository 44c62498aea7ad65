"""Exception hierarchy shared by every module."""


class LidarcError(ValueError):
    """Base class for all toolkit errors."""


class SizeNotMultipleOf16(LidarcError):
    pass


class SizeNotMultipleOf4(LidarcError):
    pass


class NonFinitePoint(LidarcError):
    def __init__(self, index: int, path=None):
        self.index = index
        where = f" in {path}" if path is not None else ""
        super().__init__(f"non-finite value at point {index}{where}")


class LengthMismatch(LidarcError):
    pass


class DegenerateSpec(LidarcError):
    pass


class EmptyCloud(LidarcError):
    pass


class IndexOutOfRange(LidarcError):
    pass


class MissingBeamIds(LidarcError):
    pass


class DegeneratePoint(LidarcError):
    pass


class TooFewPoints(LidarcError):
    pass


class IndivisibleBeamCount(LidarcError):
    pass


class NoInstancesFound(LidarcError):
    pass


class DegenerateFov(LidarcError):
    pass


class DegenerateBounds(LidarcError):
    pass


class NoValidClasses(LidarcError):
    pass


class EmptyList(LidarcError):
    pass


class WrongCorruptionCount(LidarcError):
    pass


class ZeroCleanScore(LidarcError):
    pass
