"""Exception types raised across the package."""


class HamError(Exception):
    """Base class for all package errors."""


class ShapeError(HamError, ValueError):
    """Tensor shapes or channel counts are incompatible."""


class ContractError(HamError):
    """A caller-supplied hook violated its shape-preserving contract."""


class OrderingError(HamError, ValueError):
    """A scheduler step was requested in the wrong direction."""


class TraceIncompleteError(HamError, KeyError):
    """A teacher trace has no entry for a site the student needs."""

    def __init__(self, step, site):
        self.step = step
        self.site = site
        super().__init__(f"teacher trace has no entry for step {step}, site {site}")

    def __str__(self):
        return self.args[0]


class NumericError(HamError, FloatingPointError):
    """A latent became non-finite during sampling or inversion."""

    def __init__(self, message, step=None):
        self.step = step
        super().__init__(message if step is None else f"{message} (step {step})")


class TrainingDivergenceError(NumericError):
    """The training loss became non-finite."""


class ConfigError(HamError, ValueError):
    """Configuration values are invalid or inconsistent with a checkpoint."""
