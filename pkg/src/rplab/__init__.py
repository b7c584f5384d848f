"""Numerical laboratory for restricted projection families along the moment curve."""

from .concentration import (
    All,
    ConcentrationProfile,
    RandomK,
    annulus_concentration,
    concentration_at,
    concentration_profile,
    concentration_values,
    slab_mass,
    tube_cover_count,
)
from .errors import (
    ConfigError,
    EmptyConditional,
    EmptyKernel,
    FitUndefined,
    HypothesisViolated,
    InvalidDimension,
    InvalidInput,
    InvalidOrder,
    OutOfRange,
    ParseError,
    RplabError,
)
from .experiments import SweepConfig, SweepReport, exponent_fit, sweep, verdict, verify
from .generators import CantorProduct, Grid, KernelLine, Segment, SeededRandom, export, generate, ingest
from .measures import (
    DyadicCube,
    FiniteMeasure,
    FrostmanCertificate,
    ball_mass,
    conditional,
    dyadic_decompose,
    frostman_certify,
    uniform_on,
)
from .rep_core import PK, PiTR, RepPush, a_matrix, apply, apply_many, kernel_direction, proj_k, u_matrix, varpi, xi, xi_derivative

__version__ = "0.1.0"

__all__ = [
    "All",
    "CantorProduct",
    "ConcentrationProfile",
    "ConfigError",
    "DyadicCube",
    "EmptyConditional",
    "EmptyKernel",
    "FiniteMeasure",
    "FitUndefined",
    "FrostmanCertificate",
    "Grid",
    "HypothesisViolated",
    "InvalidDimension",
    "InvalidInput",
    "InvalidOrder",
    "KernelLine",
    "OutOfRange",
    "PK",
    "ParseError",
    "PiTR",
    "RandomK",
    "RepPush",
    "RplabError",
    "SeededRandom",
    "Segment",
    "SweepConfig",
    "SweepReport",
    "a_matrix",
    "annulus_concentration",
    "apply",
    "apply_many",
    "ball_mass",
    "concentration_at",
    "concentration_profile",
    "concentration_values",
    "conditional",
    "dyadic_decompose",
    "exponent_fit",
    "export",
    "frostman_certify",
    "generate",
    "ingest",
    "kernel_direction",
    "proj_k",
    "slab_mass",
    "sweep",
    "tube_cover_count",
    "u_matrix",
    "uniform_on",
    "varpi",
    "verdict",
    "verify",
    "xi",
    "xi_derivative",
]
