"""Spectral simulator and verification harness for the linearized 2D
Euler-Poisson system near Couette flow (ion and electron species)."""
from __future__ import annotations

__version__ = "0.1.0"

from .dynamics import (
    CoeffBundle,
    ModeTrajectory,
    SymPair,
    build_L,
    build_M,
    coeffs,
    duhamel_solution,
    energy,
    energy_tilde,
    integrate_mode,
    symmetrize,
    unsymmetrize,
)
from .errors import (
    ConfigParse,
    CouetteEPError,
    DegenerateData,
    IoFailure,
    MissingMode,
    SeriesTooShort,
    StepSizeUnderflow,
    UnknownAxis,
    UnknownProfile,
)
from .fields import (
    FrequencyGrid,
    GridPropagator,
    InitialSpec,
    NormSet,
    SpectralSnapshot,
    evolve_snapshot,
    helmholtz_norms,
    make_initial,
    propagate_grid,
    resolved_n_xi,
    sobolev_norm,
    sym_weighted_norm,
)
from .params import ModeCoord, PlasmaParams, Species, alpha, dt_alpha
from .verify import (
    NormSeries,
    VerificationReport,
    check_lemma_energy,
    check_lower_growth,
    check_upper_growth,
    check_upper_px_phi,
    check_upper_py,
    compute_series,
    lower_bound_functional,
)
