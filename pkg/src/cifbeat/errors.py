"""Exception types raised across the package.

Every error derives from :class:`CifError` so the CLI can report any of them
as a single machine-readable line.
"""


class CifError(Exception):
    """Base class for all package errors."""


# record_io
class BadHeader(CifError, ValueError):
    pass


class MissingPayload(CifError, FileNotFoundError):
    pass


class LengthMismatch(CifError, ValueError):
    pass


class TruncatedPayload(CifError, ValueError):
    pass


class NonNumericLine(CifError, ValueError):
    pass


# preprocess
class EmptySignal(CifError, ValueError):
    pass


class TooShort(CifError, ValueError):
    pass


class ShiftTooLarge(CifError, ValueError):
    pass


# dataset / detector
class RecordTooShort(CifError, ValueError):
    pass


class NoPositives(CifError, ValueError):
    pass


# model
class ShapeMismatch(CifError, ValueError):
    pass


class DivergedLoss(CifError, FloatingPointError):
    pass


class TooFewRecords(CifError, ValueError):
    pass


class BadMagic(CifError, ValueError):
    pass


class VersionMismatch(CifError, ValueError):
    pass


# scorer
class EmptyInput(CifError, ValueError):
    pass


class UnknownFormat(CifError, ValueError):
    pass


# config / synth
class BadConfig(CifError, ValueError):
    pass
