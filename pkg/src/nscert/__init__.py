"""Fourier-Galerkin toolkit for fractional-Sobolev regularity and stability criteria
of the periodic 3D Navier-Stokes equations."""

from .certify import (
    CertificateReport,
    EpsilonBudget,
    caloric_lower_bound,
    check_corollary2,
    check_proximity_A1,
    check_proximity_A2,
    check_smallness_A4,
    check_stability_bound_P1,
    gronwall_envelope,
    tile_field,
    verify_condition_C,
)
from .constants import (
    ConstantBundle,
    SobolevConstantTable,
    SobolevEntry,
    assemble_bundle,
    build_table,
    estimate_interp_constant,
    estimate_sobolev_constant,
    k5,
)
from .errors import BudgetError, ConfigError, NscertError, NumericalFailure
from .fieldio import load_field, save_field
from .forcing import ConstantForcing, ModalForcing, SnapshotForcing, ZeroForcing
from .solver import SolverConfig, Trajectory, difference_trajectory, galerkin_residual, heat_evolve, integrate
from .spectral import (
    BoxSpec,
    SpectralField,
    dilate,
    divergence,
    duality_inner,
    gradient,
    high_pass,
    hs_inner,
    hs_norm,
    hs_norm_sq,
    leray_project,
    low_pass,
    lp_norm,
    nonlinear_term,
    stokes_power,
    tensor_product,
    tensor_product_norm,
)

__version__ = "0.1.0"
