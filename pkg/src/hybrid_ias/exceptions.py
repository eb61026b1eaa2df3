"""Exception hierarchy for the hybrid IAS package."""


class IASError(Exception):
    """Base class for all errors raised by this package."""


class InvalidModel(IASError, ValueError):
    """Hyperparameters outside the admissible range."""


class DomainError(IASError, ValueError):
    """An argument lies outside the domain of the function (e.g. theta <= 0)."""


class NonConvergence(IASError, RuntimeError):
    """An inner iterative solver exhausted its iteration budget."""


class IntegrationFailure(IASError, RuntimeError):
    """The ODE integrator could not meet its tolerance."""


class ZeroColumn(IASError, ValueError):
    """The forward map has a column of zero norm."""


class NotSPD(IASError, ValueError):
    """A covariance matrix is not symmetric positive definite."""


class DegenerateGrid(IASError, ValueError):
    """An increment graph without free nodes."""


class RankDeficient(IASError, RuntimeError):
    """A least-squares operator lost full column rank."""


class DegenerateSignal(IASError, ValueError):
    """Noise level cannot be set from an identically zero signal."""


class ConfigError(IASError, ValueError):
    """Malformed or inconsistent experiment configuration."""


class MissingArtifact(IASError, FileNotFoundError):
    """An expected output file is absent from a run directory."""
