"""Exception hierarchy shared by all zkbox modules."""


class ZKError(Exception):
    """Base class for every error raised by zkbox."""


class ValidationError(ZKError, ValueError):
    """Invalid parameters, fields or configuration values."""


class CompatibilityError(ValidationError):
    """Initial data violates the boundary compatibility conditions."""

    def __init__(self, message, residual):
        super().__init__(f"{message} (residual={residual:.3e})")
        self.residual = residual


class ConfigError(ValidationError):
    """A run configuration file could not be parsed or is incomplete."""

    def __init__(self, message, *, line=None, key=None):
        where = []
        if line is not None:
            where.append(f"line {line}")
        if key is not None:
            where.append(f"key {key!r}")
        prefix = f"[{', '.join(where)}] " if where else ""
        super().__init__(prefix + message)
        self.line = line
        self.key = key


class DivergenceError(ZKError, RuntimeError):
    """Picard iteration failed to reach tolerance within ``max_iter``."""

    def __init__(self, message, residuals, t=None):
        self.residuals = list(residuals)
        self.t = t
        at = f" at t={t:.6g}" if t is not None else ""
        super().__init__(f"{message}{at}; increments={self.residuals}")


class SingularSystemError(ZKError, RuntimeError):
    """The implicit Crank-Nicolson matrix could not be factored."""
