"""Exception hierarchy shared across the package."""


class UrysohnError(Exception):
    """Base class for all package errors."""


class SeriesTooShort(UrysohnError, ValueError):
    pass


class LengthMismatch(UrysohnError, ValueError):
    pass


class LevelOutOfRange(UrysohnError, ValueError):
    pass


class MalformedModel(UrysohnError, ValueError):
    """Raised when a model fails validation.

    ``problems`` holds one ``(field, message)`` pair per violated check.
    """

    def __init__(self, problems):
        if isinstance(problems, str):
            problems = [("model", problems)]
        self.problems = list(problems)
        text = "; ".join(f"{field}: {msg}" for field, msg in self.problems)
        super().__init__(text)


class TooLarge(UrysohnError, ValueError):
    pass


class Inconsistent(UrysohnError, ArithmeticError):
    pass


class BadPinPattern(UrysohnError, ValueError):
    pass


class InsufficientQueries(UrysohnError, ValueError):
    pass


class SingularGeometry(UrysohnError, ArithmeticError):
    pass


class NonFinite(UrysohnError, ArithmeticError):
    """A simulated state left the finite range; ``step`` is the first bad index."""

    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step


class BadBlockSize(UrysohnError, ValueError):
    pass


class DegenerateReference(UrysohnError, ValueError):
    pass
