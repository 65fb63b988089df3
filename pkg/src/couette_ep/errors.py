"""Exception types raised across the package."""


class CouetteEPError(Exception):
    """Base class for all package errors."""


class StepSizeUnderflow(CouetteEPError):
    """The adaptive controller wanted a step below ``dt_min``."""

    def __init__(self, message, mode=None, t=None):
        super().__init__(message)
        self.mode = mode
        self.t = t


class UnknownProfile(CouetteEPError):
    pass


class MissingMode(CouetteEPError):
    pass


class SeriesTooShort(CouetteEPError):
    pass


class DegenerateData(CouetteEPError):
    """The lower-bound functional vanished at a sampled time."""


class ConfigParse(CouetteEPError):
    pass


class IoFailure(CouetteEPError):
    pass


class UnknownAxis(CouetteEPError):
    pass
