"""Exception types shared across the package."""


class DomainError(ValueError):
    """An argument lies outside the domain where the operation is defined."""


class SingularArgument(ValueError):
    """The saturation kernel was evaluated at its multivalued point (m = eps = 0, z = 0)."""


class NoMultiplierFound(RuntimeError):
    pass


class Unsupported(ValueError):
    pass


class InsufficientData(ValueError):
    pass


class NoExtinction(ValueError):
    pass


class ConfigError(ValueError):
    """Malformed or inconsistent run configuration."""

    def __init__(self, message, section=None, key=None, line=None):
        self.section = section
        self.key = key
        self.line = line
        where = []
        if line is not None:
            where.append(f"line {line}")
        if section is not None:
            where.append(f"[{section}]" + (f" {key}" if key else ""))
        prefix = (", ".join(where) + ": ") if where else ""
        super().__init__(prefix + message)


class NonConvergence(RuntimeError):
    """Nonlinear solve did not reach tolerance.

    ``stage`` is set by continuation solves, ``time`` by the time stepper.
    """

    def __init__(self, residual, iterations, stage=None, time=None):
        self.residual = residual
        self.iterations = iterations
        self.stage = stage
        self.time = time
        msg = f"residual {residual:.3e} after {iterations} iterations"
        if stage is not None:
            msg += f" (continuation stage {stage})"
        if time is not None:
            msg += f" (at t = {time:.6g})"
        super().__init__(msg)
