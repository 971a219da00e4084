"""Exception types shared across the package."""


class MobirouteError(Exception):
    """Base class for all package errors."""


class ConfigError(MobirouteError, ValueError):
    """Invalid or inconsistent configuration."""


class TraceParseError(MobirouteError, ValueError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class OutOfRangeError(MobirouteError, ValueError):
    """Query time lies outside the span covered by a trace."""


class ContactConsistencyError(MobirouteError, RuntimeError):
    """A contact transition contradicts the recorded pair state."""


class ProtocolViolation(MobirouteError, RuntimeError):
    """A strategy returned an action outside the legal action set."""


class FeatureError(MobirouteError, RuntimeError):
    """Feature computation produced an impossible value or shape."""
