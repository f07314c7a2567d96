"""Stochastic dynamics of boundary-driven pair-flip chains.

Exact sector combinatorics, Markov transition operators with the matching
lumped chains, spectral-gap and expansion analysis, Monte Carlo relaxation
experiments, and closed-form evaluators for the provable bounds.
"""

from .errors import NumericError, PairflipError, ResourceCapError, UsageError

__version__ = "0.1.0"

from .bounds import (
    BoundValue,
    entropy_bound_curve,
    entropy_offset,
    mean_depth_fraction,
    n2_gap_window,
    thm1_gap_upper,
    thm2_entropy_time_lower,
    thm3_charge_time_lower,
)
from .census import (
    ConeStats,
    SectorCensus,
    cone_stats,
    drift_velocity,
    enumerate_census,
    k0_asymptotic,
    kd_asymptotic,
    multiplicity,
    n2_min_expansion,
    sector_count,
    sector_dim,
    sector_dims,
)
from .chains import (
    GateKind,
    StochasticChain,
    build_full_local,
    build_full_nonlocal,
    build_lumped,
    compressed_boundary_kernel,
    export_coo,
    gate_probabilities,
)
from .checks import run_checks
from .montecarlo import (
    ConeEscapeResult,
    EnsembleSeries,
    SimConfig,
    TQReport,
    cone_escape_probability,
    estimate_tq,
    max_charge_state,
    run_ensemble,
    sample_cone_states,
    sample_sector_string,
)
from .spectra import (
    CheegerReport,
    GapResult,
    cheeger_check,
    cone_subset,
    evolve_exact,
    exact_escape_profile,
    n2_charge_subset,
    spectral_gap,
    subset_expansion,
)
from .walks import Charge, SectorId, SpinString, enumerate_sectors, reduce_symbols

__all__ = [
    "BoundValue",
    "Charge",
    "CheegerReport",
    "ConeEscapeResult",
    "ConeStats",
    "EnsembleSeries",
    "GapResult",
    "GateKind",
    "NumericError",
    "PairflipError",
    "ResourceCapError",
    "SectorCensus",
    "SectorId",
    "SimConfig",
    "SpinString",
    "StochasticChain",
    "TQReport",
    "UsageError",
    "__version__",
    "build_full_local",
    "build_full_nonlocal",
    "build_lumped",
    "cheeger_check",
    "compressed_boundary_kernel",
    "cone_escape_probability",
    "cone_stats",
    "cone_subset",
    "drift_velocity",
    "entropy_bound_curve",
    "entropy_offset",
    "enumerate_census",
    "enumerate_sectors",
    "estimate_tq",
    "evolve_exact",
    "exact_escape_profile",
    "export_coo",
    "gate_probabilities",
    "k0_asymptotic",
    "kd_asymptotic",
    "max_charge_state",
    "mean_depth_fraction",
    "multiplicity",
    "n2_charge_subset",
    "n2_gap_window",
    "n2_min_expansion",
    "reduce_symbols",
    "run_checks",
    "run_ensemble",
    "sample_cone_states",
    "sample_sector_string",
    "sector_count",
    "sector_dim",
    "sector_dims",
    "spectral_gap",
    "subset_expansion",
    "thm1_gap_upper",
    "thm2_entropy_time_lower",
    "thm3_charge_time_lower",
]
