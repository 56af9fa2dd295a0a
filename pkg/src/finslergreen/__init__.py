"""Leading small-h asymptotics of lattice Green kernels via Finsler geometry, with brute-force oracles."""

__version__ = "0.1.0"

from .asymptotics import (
    AsymptoticEstimate,
    AsymptoticsRefused,
    convergence_sweep,
    geometry,
    green_leading,
    green_leading_bordered,
    green_oz,
)
from .fieldexpr import Field, eval2, parse
from .finsler import dual_point, finsler_tensor, support_function
from .geodesics import shoot, uniqueness_scan
from .lattice import assemble, green_column, green_entry
from .model import LatticeSite, ModelSpec, check_hypotheses
from .spectral import green_spectral, quadrature_refine

__all__ = [
    "AsymptoticEstimate", "AsymptoticsRefused", "Field", "LatticeSite", "ModelSpec", "assemble",
    "check_hypotheses", "convergence_sweep", "dual_point", "eval2", "finsler_tensor", "geometry",
    "green_column", "green_entry", "green_leading", "green_leading_bordered", "green_oz",
    "green_spectral", "parse", "quadrature_refine", "shoot", "support_function", "uniqueness_scan",
]
