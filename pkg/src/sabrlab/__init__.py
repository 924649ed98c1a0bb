"""SABR diffusions: simulation, time changes, weight functions and Dirichlet forms."""
from .errors import ClockRangeError, CoercivityError, ConfigError, DomainError
from .process_models import GeneratorKind, GeneratorSpec, ModelParams, ScalarField, State2

__all__ = [
    "ClockRangeError",
    "CoercivityError",
    "ConfigError",
    "DomainError",
    "GeneratorKind",
    "GeneratorSpec",
    "ModelParams",
    "ScalarField",
    "State2",
]
