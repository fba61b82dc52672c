"""Exception types shared across the package."""


class InvalidArgument(ValueError):
    pass


class InvalidState(ValueError):
    pass


class MalformedStream(ValueError):
    """Event stream could not be parsed; ``line`` is 1-based when known."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class InsufficientData(ValueError):
    pass


class UndefinedEstimate(ValueError):
    pass


class FitFailed(RuntimeError):
    """Raised when a fit cannot produce identifiable parameters."""

    def __init__(self, message, residual=None):
        if residual is not None:
            message = f"{message} (residual norm {residual:.3e})"
        super().__init__(message)
        self.residual = residual


class InvalidConfig(ValueError):
    def __init__(self, field, message):
        super().__init__(f"{field}: {message}")
        self.field = field
