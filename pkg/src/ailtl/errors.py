"""Exception hierarchy shared by every module of the package."""


class AiltlError(Exception):
    """Base class for all errors raised by :mod:`ailtl`."""


class TimeOverflowError(AiltlError, OverflowError):
    pass


class TraceError(AiltlError):
    """Malformed, non-monotonic, or otherwise unusable trace input."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class GroundnessError(AiltlError):
    """A literal needed a variable that no earlier conjunct had bound."""

    def __init__(self, variables, where=""):
        self.variables = tuple(sorted(variables))
        names = ", ".join(self.variables)
        msg = f"unbound variable(s) {names}"
        if where:
            msg += f" in {where}"
        super().__init__(msg)


class ParseError(AiltlError):
    def __init__(self, message, span=None, expected=()):
        self.span = span
        self.expected = tuple(sorted(set(expected)))
        text = message
        if span is not None:
            text = f"{span.line}:{span.column}: {message}"
        if self.expected:
            text += " (expected one of: " + ", ".join(self.expected) + ")"
        super().__init__(text)


class SemanticError(AiltlError):
    def __init__(self, message, rule=None):
        self.rule = rule
        if rule is not None:
            message = f"{rule}: {message}"
        super().__init__(message)
