"""Thermodynamic-formalism toolkit for hyperbolic torus endomorphisms."""

__version__ = "0.1.0"

from .errors import (
    StableDimError, ConfigInvalid, BudgetExceeded, NewtonDivergence,
    ContinuationFailure, DegenerateSingularValues, DepthInsufficient,
    PressureNotConverged, NoSignChange, EmptyBall, EmptySlice,
    EmptyComponent, InsufficientAtoms,
)
from .models import (
    IntMatrix2, EndomorphismModel, ToralLinear, ToralPerturbed,
    ProductAttractorCircle, ProductPowerToral, from_config, load_model,
)

__all__ = [
    "StableDimError", "ConfigInvalid", "BudgetExceeded", "NewtonDivergence",
    "ContinuationFailure", "DegenerateSingularValues", "DepthInsufficient",
    "PressureNotConverged", "NoSignChange", "EmptyBall", "EmptySlice",
    "EmptyComponent", "InsufficientAtoms",
    "IntMatrix2", "EndomorphismModel", "ToralLinear", "ToralPerturbed",
    "ProductAttractorCircle", "ProductPowerToral", "from_config", "load_model",
]
