"""Exception hierarchy shared by all fastbss modules."""


class BSSError(Exception):
    """Base class for every error raised by fastbss."""


class SingularMatrix(BSSError, ValueError):
    """A matrix that must be inverted is numerically singular."""


class SingularUpdate(SingularMatrix):
    """A row update hit a singular system even after the retry perturbation."""


class SingularDemixing(SingularMatrix):
    pass


class SingularDiagonalizer(SingularMatrix):
    pass


class SingularMixing(SingularMatrix):
    pass


class DegenerateCovariance(BSSError, ValueError):
    pass


class EmptySignal(BSSError, ValueError):
    pass


class ConfigMismatch(BSSError, ValueError):
    pass


class UnsupportedFormat(BSSError, ValueError):
    pass


class CorruptHeader(BSSError, ValueError):
    pass


class LengthMismatch(BSSError, ValueError):
    pass


class SilentReference(BSSError, ValueError):
    pass
