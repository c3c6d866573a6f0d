"""Two-layer internal wave toolkit.

Pseudospectral operators on periodic grids, a Chebyshev strip oracle for the
two-layer Dirichlet-Neumann and interface operators, asymptotic model
systems, dispersion relations and a convergence/consistency harness.
"""

from .spectral import (
    ScalarField,
    SpectralGrid,
    VectorField,
    apply_symbol,
    differential,
    make_grid,
    product_dealiased,
    sobolev_norm,
)
from .operators import RegimeParams
from .oracle import StripGrid, evaluate_oracle, full_rhs
from .models import BoussinesqCoeffs, ModelId, ModelState, simulate, step_rk4
from .records import RunRecord

__all__ = [
    "ScalarField",
    "SpectralGrid",
    "VectorField",
    "apply_symbol",
    "differential",
    "make_grid",
    "product_dealiased",
    "sobolev_norm",
    "RegimeParams",
    "StripGrid",
    "evaluate_oracle",
    "full_rhs",
    "BoussinesqCoeffs",
    "ModelId",
    "ModelState",
    "simulate",
    "step_rk4",
    "RunRecord",
]

__version__ = "0.1.0"
