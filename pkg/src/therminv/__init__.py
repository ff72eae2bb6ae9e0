"""Bayesian estimation of surface heat-transfer coefficients of a layered sample.

A lumped 1D model drives a Metropolis-Hastings sampler; a 2D DuFort-Frankel
model supplies the approximation error model and validation diagnostics.
"""

from .errors import (AemBuildError, ConfigurationError, DivergenceError, DomainError,
                     EvaluationError, IngestionError, SolverError, ThermInvError,
                     UnidentifiableError)
from .thermo_model import (BoundarySchedule, DimensionlessConfig, Geometry, MaterialLayer,
                           ParameterPoint, ReferenceScales, nondimensionalize, paper_config)

__version__ = "0.1.0"

__all__ = [
    "AemBuildError", "BoundarySchedule", "ConfigurationError", "DimensionlessConfig",
    "DivergenceError", "DomainError", "EvaluationError", "Geometry", "IngestionError",
    "MaterialLayer", "ParameterPoint", "ReferenceScales", "SolverError", "ThermInvError",
    "UnidentifiableError", "nondimensionalize", "paper_config", "__version__",
]
