"""Exception hierarchy shared across the toolkit."""


class SlowmodesError(Exception):
    """Base class for all toolkit errors."""


class ConfigError(SlowmodesError):
    """Invalid model definition or run configuration."""


class ConvergenceError(SlowmodesError):
    """An iterative procedure failed to converge.

    Attributes set by the raising code (``diagnostics`` dict) carry the
    last iterate, residual history or integrator status for post-mortem.
    """

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class NewtonError(ConvergenceError):
    """Newton iteration exhausted its iteration budget."""


class OverdampedModeError(ConvergenceError):
    """Modal damping ratio left the underdamped range |delta| < 1."""


class PartialTableError(ConvergenceError):
    """Amplitude continuation stalled; a converged prefix is available.

    The ``table`` attribute holds the entries computed before the failure.
    """

    def __init__(self, message, table, diagnostics=None):
        super().__init__(message, diagnostics)
        self.table = table


class DahlPeriodicityError(ConvergenceError):
    """Hysteresis period marching did not settle within the cycle cap."""


class StiffnessError(ConvergenceError):
    """Adaptive time integration collapsed its step size."""


class AliasingError(SlowmodesError):
    """Requested harmonic exceeds the Nyquist limit of the sample grid."""


class IncompatibleArtifactsError(SlowmodesError):
    """Run inputs (table/model/config) do not belong together."""
