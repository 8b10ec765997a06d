"""Rooftop kinetic temperature from aerial thermal radiance imagery."""
from .errors import (
    ConfigError,
    CoverageError,
    DegenerateFitError,
    DomainError,
    GeometryError,
    MaterialLookupError,
    NodataError,
    OutOfExtentError,
    OutOfTableError,
    ParseError,
    PruningRefusedError,
    RooftempError,
    UnmatchedTargetError,
)
from .radiometry import (
    LWIR_DEVICE,
    LWIR_IMAGER,
    PlanckTable,
    WavelengthBand,
    band_exitance,
    build_planck_table,
    invert_band_exitance,
    rescale_exitance,
    spectral_exitance,
)

__version__ = "0.1.0"
