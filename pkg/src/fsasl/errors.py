"""Exception hierarchy.

Every exception carries a short ``kind`` string that the command-line layer
copies into its machine-readable error report.
"""


class FsaslError(Exception):
    kind = "error"


class DataError(FsaslError, ValueError):
    kind = "data"


class ParseError(DataError):
    """Malformed row in an input file."""


class DimensionMismatchError(DataError):
    pass


class NonNumericCellError(ParseError):
    pass


class ZeroVarianceError(DataError):
    pass


class ConfigError(FsaslError, ValueError):
    kind = "config"


class SolverError(FsaslError, RuntimeError):
    kind = "solver"


class ConvergenceError(SolverError):
    """A subsolver did not reach its tolerance within its iteration budget."""

    def __init__(self, message, residual=None, index=None):
        super().__init__(message)
        self.residual = residual
        self.index = index


class SingularSystemError(SolverError):
    pass
