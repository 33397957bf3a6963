"""Exception hierarchy shared by all pilotwave modules."""


class PilotwaveError(Exception):
    """Base class for library errors."""


class DomainError(PilotwaveError):
    """An event or stencil point lies outside a provider's domain."""


class UndefinedPhaseError(PilotwaveError):
    """The phase was requested where the amplitude is below the floor."""


class NodeError(PilotwaveError):
    """An amplitude ratio was requested at (or too near) a node of |Psi|."""


class ConfigurationError(PilotwaveError):
    """Invalid parameters, grids or scenario contents."""


class NumericalError(PilotwaveError):
    """A numerical procedure failed (singular solve, non-finite state, ...)."""

    def __init__(self, message, last_good=None):
        super().__init__(message)
        self.last_good = last_good


class MetricError(PilotwaveError):
    """Metric is not Lorentzian (+,-) at the queried event."""


class RegimeError(PilotwaveError):
    """A perturbative comparison was requested outside its validity range."""


class ComparisonError(PilotwaveError):
    """Two trajectories cannot be compared (no overlap, non-monotone time)."""


class InitializationError(PilotwaveError):
    """A state could not be initialised from the wavefield."""
