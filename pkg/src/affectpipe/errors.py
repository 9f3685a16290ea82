"""Exception hierarchy.

Every error raised on bad *data* derives from :class:`DataError`; the command
line maps those to exit status 1. Programming errors (wrong argument types and
the like) stay as the usual built-in exceptions.
"""


class AffectPipeError(Exception):
    """Base class for all package errors."""


class DataError(AffectPipeError):
    """Input data violates a contract."""


# ingest
class ParseError(DataError):
    def __init__(self, message, path=None, row=None):
        self.path = path
        self.row = row
        where = ""
        if path is not None:
            where = f"{path}"
            if row is not None:
                where += f", row {row}"
            where += ": "
        super().__init__(where + message)


class RateMismatch(DataError):
    pass


class MissingFile(DataError):
    pass


class SchemaMismatch(DataError):
    pass


# dsp
class InsufficientData(DataError):
    pass


class GapInWindow(DataError):
    pass


class MissingBaseline(DataError):
    pass


class TooShort(DataError):
    pass


class NoBeatsDetected(DataError):
    pass


# eda
class SolverDiverged(DataError):
    def __init__(self, message, status=None):
        self.status = status
        super().__init__(message)


# features
class MissingKind(DataError):
    pass


# labeling
class WrongCount(DataError):
    pass


class OutOfRange(DataError):
    pass


class UnresolvedAmbiguity(DataError):
    def __init__(self, message, instances=()):
        self.instances = tuple(instances)
        super().__init__(message)


class MissingProfile(DataError):
    pass


# classifiers / evaluation
class SingleClass(DataError):
    pass


class EmptyDataset(DataError):
    pass


class LengthMismatch(DataError):
    pass


class ClassTooSmall(DataError):
    pass


# lmm
class RankDeficient(DataError):
    pass


class NotConverged(DataError):
    pass
