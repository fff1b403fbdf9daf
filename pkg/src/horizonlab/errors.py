"""Fault and error types shared across the simulation lab."""


class ConfigError(ValueError):
    """Invalid configuration: bad parameter value, unknown kind, missing field."""


class SimulationFault(RuntimeError):
    """The run must halt: integrator blow-up, time regression, geometry bug."""


class AnalysisError(ValueError):
    """An analysis cannot be carried out on the given data (window too short,
    not enough qualifying points, ...)."""
