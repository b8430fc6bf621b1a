"""Exception types shared across the package."""


class ConfigError(ValueError):
    """Invalid scenario, configuration, or mismatched array shapes."""


class MetricError(ValueError):
    """A metric was requested on inputs for which it is undefined."""


class StateError(RuntimeError):
    """An object was used out of order (e.g. backward before forward)."""


class MissingArtifactError(FileNotFoundError):
    """A checkpoint or dataset required by a run does not exist."""
