class InputError(ValueError):
    """Malformed arguments: dimension mismatch, empty input, bad parameters."""


class SamplerError(RuntimeError):
    """A sampler could not make progress (e.g. inconsistent membership oracle)."""


class StepSizeError(SamplerError):
    """MALA acceptance rate fell below the configured minimum."""

    def __init__(self, message, acceptance=None, step=None):
        super().__init__(message)
        self.acceptance = acceptance
        self.step = step


class DegeneracyError(RuntimeError):
    """Importance weights collapsed below the effective-sample-size floor.

    Reweighting is statistically unsound at this tilt; sample the tilted
    measure directly instead.
    """

    def __init__(self, message, n_eff=None, floor=None):
        super().__init__(message)
        self.n_eff = n_eff
        self.floor = floor


class ConvergenceError(RuntimeError):
    def __init__(self, message, residuals=None):
        super().__init__(message)
        self.residuals = list(residuals or [])


class ConfigError(ValueError):
    """Invalid scenario configuration or registry state."""


class RefinementWarning(UserWarning):
    """A grid-based scan looks under-resolved."""
