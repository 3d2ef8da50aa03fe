"""Exception hierarchy.

Each class carries the CLI exit code it maps to, so the command layer can
translate any library failure without a lookup table.
"""


class SsrgrError(Exception):
    exit_code = 1


class InvalidConfigError(SsrgrError, ValueError):
    exit_code = 1


class DataError(SsrgrError, ValueError):
    exit_code = 2


class InvalidLabelsError(DataError):
    pass


class InvalidSplitError(DataError):
    pass


class ParseError(DataError):
    pass


class NormalizationError(DataError):
    pass


class ModelFileError(DataError):
    pass


class NumericError(SsrgrError, ArithmeticError):
    exit_code = 3


class NumericInputError(NumericError):
    pass


class DegenerateGraphError(NumericError):
    pass


class IndefiniteLaplacianError(NumericError):
    pass


class InvalidKernelError(NumericError):
    pass
