"""Exception hierarchy.

``DataError`` subclasses signal problems with inputs (bad domain, wrong shape,
degenerate data); ``NumericError`` subclasses signal numerical breakdown.
The CLI maps them to distinct exit codes.
"""


class KFCError(Exception):
    pass


class DataError(KFCError, ValueError):
    pass


class NumericError(KFCError, ArithmeticError):
    pass


class DomainError(DataError):
    pass


class DimensionMismatch(DataError):
    pass


class LengthMismatch(DataError):
    pass


class InvalidK(DataError):
    pass


class EmptyResult(DataError):
    pass


class EmptyCluster(DataError):
    pass


class DegenerateRow(DataError):
    pass


class DegeneratePartition(DataError):
    pass


class InvalidSpec(DataError):
    pass


class EmptyGrid(DataError):
    pass
