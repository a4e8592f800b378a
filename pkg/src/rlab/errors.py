"""Exception types shared across the package."""


class RlabError(Exception):
    """Base class for all package errors."""


class GraphFormatError(RlabError):
    """Malformed graph file; carries the offending line number when known."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class CapError(RlabError):
    """A configured size or budget cap was exceeded."""


class DomainError(RlabError):
    """Arguments outside an operation's documented domain."""


class SolverError(RlabError):
    """Linear solve failed to reach the requested tolerance."""

    def __init__(self, message, residual=None, iterations=None):
        self.residual = residual
        self.iterations = iterations
        if residual is not None:
            message = f"{message} (residual={residual:.3e}, iterations={iterations})"
        super().__init__(message)
