class DomainError(ValueError):
    """Input outside the domain of an operation."""


class ConfigError(ValueError):
    """Invalid scenario or controller configuration."""


class OptimizationError(RuntimeError):
    """The sampler could not produce a single finite-loss candidate."""
