from .core import (
    DensityMatrix,
    Grid,
    NoiseSource,
    PhysicalParams,
    Potential,
    RegimeReport,
    WaveFunction,
    WignerGrid,
    eval_force,
    validate_regime,
    wiener_increments,
)

__all__ = [
    "DensityMatrix",
    "Grid",
    "NoiseSource",
    "PhysicalParams",
    "Potential",
    "RegimeReport",
    "WaveFunction",
    "WignerGrid",
    "eval_force",
    "validate_regime",
    "wiener_increments",
]

__version__ = "0.1.0"
