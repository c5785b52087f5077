"""Exception hierarchy shared by the library and the command-line front end."""


class MultirateError(Exception):
    """Base class for all library errors."""


class ValidationError(MultirateError, ValueError):
    """Invalid user input: plan, problem definition, config file or CLI arguments."""

    def __init__(self, problems):
        if isinstance(problems, str):
            problems = [problems]
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


class ConfigError(ValidationError):
    """Problem config file could not be parsed; message carries line/field."""


class NumericalError(MultirateError, RuntimeError):
    """A numerical procedure failed (Newton divergence, overflow, ...)."""


class NewtonError(NumericalError):
    def __init__(self, message, t=None, residual=None):
        self.t = t
        self.residual = residual
        details = []
        if t is not None:
            details.append(f"t={t:.17g}")
        if residual is not None:
            details.append(f"residual={residual:.3e}")
        if details:
            message = f"{message} ({', '.join(details)})"
        super().__init__(message)


class WaveformWindowError(NumericalError, ValueError):
    """A waveform was evaluated outside the interval it is defined on."""


class StabilityGateError(MultirateError):
    """The contraction analyzer refused a run; pass force=True to override."""

    def __init__(self, strategy, failed):
        self.strategy = strategy
        self.failed = tuple(failed)
        super().__init__(
            f"stability gate refused strategy {strategy}: violated "
            + ", ".join(self.failed)
        )
