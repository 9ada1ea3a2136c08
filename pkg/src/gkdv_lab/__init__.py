"""
Numerical laboratory for the focusing generalized KdV equation

    u_t + u_xxx + (u^(k+1))_x = 0,   k >= 4,

on a periodic box: spectral operators, a split-step solver with an
operational blow-up verdict, conserved functionals and space-time norms,
ground states, profile decomposition and concentration diagnostics.
"""

from .concentration import WindowLaw, concentration_series, track_center, window_mass
from .dynamics import BlowupVerdict, SimState, SolverConfig, dealias, run, run_refined, step
from .errors import ContractError, CorruptedStateError, DomainOverflowError, LabError
from .functionals import (
    NormReport,
    StrichartzAccumulator,
    canonical_pairs,
    energy,
    interval_increments,
    is_admissible,
    mass,
    mixed_norm_xt,
    sobolev_norm,
    threshold_check,
)
from .ground_state import GroundState, ground_state, ode_residual, soliton
from .profiles import (
    DecompositionReport,
    ProfileParams,
    extract_profiles,
    nonlinear_profile,
    pairwise_divergence,
    synthesize,
)
from .spectral import (
    Field,
    Grid1D,
    SpectralField,
    airy_propagate,
    critical_exponent,
    forward_transform,
    fractional_derivative,
    inverse_transform,
    read_snapshot,
    rescale,
    write_snapshot,
)

__version__ = "0.1.0"
