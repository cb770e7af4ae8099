"""Exception types raised across the toolkit."""


class PdVoiceError(Exception):
    """Base class for every error raised by pdvoice."""


class MissingFile(PdVoiceError, FileNotFoundError):
    pass


class HeaderMismatch(PdVoiceError, ValueError):
    def __init__(self, expected, found):
        self.expected = list(expected)
        self.found = list(found)
        missing = [c for c in self.expected if c not in self.found]
        extra = [c for c in self.found if c not in self.expected]
        super().__init__(
            f"CSV header does not match the telemonitoring schema; "
            f"expected {self.expected}, found {self.found} "
            f"(missing={missing}, unexpected={extra})"
        )


class RowParseError(PdVoiceError, ValueError):
    def __init__(self, row, column, token):
        self.row, self.column, self.token = row, column, token
        super().__init__(f"row {row}, column {column!r}: cannot parse {token!r}")


class NonFiniteValue(PdVoiceError, ValueError):
    def __init__(self, row, column):
        self.row, self.column = row, column
        super().__init__(f"row {row}, column {column!r}: non-finite value")


class InvalidStageConfig(PdVoiceError, ValueError):
    pass


class EmptyGroup(PdVoiceError, ValueError):
    pass


class KTooLarge(PdVoiceError, ValueError):
    pass


class EmptyTable(PdVoiceError, ValueError):
    pass


class UnknownColumn(PdVoiceError, KeyError):
    pass


class TooFewMinoritySamples(PdVoiceError, ValueError):
    pass


class SingleClass(PdVoiceError, ValueError):
    pass


class EmptyCandidates(PdVoiceError, ValueError):
    pass


class DegenerateTarget(PdVoiceError, ValueError):
    pass


class ShapeMismatch(PdVoiceError, ValueError):
    pass


class NonFiniteInput(PdVoiceError, ValueError):
    pass


class NonFiniteObjective(PdVoiceError, FloatingPointError):
    pass


class NoEligibleSubjects(PdVoiceError, ValueError):
    pass


class WindowTooLong(PdVoiceError, ValueError):
    pass


class EmptyWindow(PdVoiceError, ValueError):
    pass


class LengthMismatch(PdVoiceError, ValueError):
    pass


class EmptyInput(PdVoiceError, ValueError):
    pass


class ZeroVariance(PdVoiceError, ValueError):
    """R-squared requested for a target with no variance."""


class ConfigError(PdVoiceError, ValueError):
    def __init__(self, field, message):
        self.field = field
        super().__init__(f"{field}: {message}")


class FoldFailed(PdVoiceError, RuntimeError):
    """A cross-validation fold raised; ``fold`` is its zero-based index."""

    def __init__(self, fold, cause):
        self.fold = fold
        self.cause = cause
        super().__init__(f"fold {fold} failed: {type(cause).__name__}: {cause}")
