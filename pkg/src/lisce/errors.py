"""Exception hierarchy.

Numerical failures derive from :class:`NumericalError`, configuration
problems from :class:`ConfigError`, file-format problems from
:class:`FileFormatError`.  The CLI maps these families onto exit codes.
"""


class LisError(Exception):
    pass


class ConfigError(LisError, ValueError):
    pass


class ParseError(ConfigError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class UnknownKey(ParseError):
    pass


class MissingRequired(ConfigError):
    pass


class NumericalError(LisError, ArithmeticError):
    pass


class NotHermitian(NumericalError):
    pass


class NotPSD(NumericalError):
    pass


class NotPD(NumericalError):
    pass


class ConvergenceError(NumericalError):
    pass


class SingularNormalMatrix(NumericalError):
    pass


class NonMonotone(NumericalError):
    pass


class DegenerateEstimate(NumericalError):
    pass


class DivergenceError(NumericalError):
    pass


class InvalidRho(ConfigError):
    pass


class InsufficientPilots(ConfigError):
    pass


class ShapeMismatch(LisError, ValueError):
    pass


class OddAntennaCount(ShapeMismatch):
    pass


class SchemaMismatch(LisError, ValueError):
    pass


class FileFormatError(LisError, OSError):
    pass


class BadMagic(FileFormatError):
    pass


class VersionMismatch(FileFormatError):
    pass


class TruncatedFile(FileFormatError):
    pass


class ChecksumMismatch(FileFormatError):
    pass
