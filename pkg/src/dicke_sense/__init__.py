"""Sensing with the collectively emitted field of a driven spin ensemble.

The package simulates the superradiant master equation for N two-level
emitters, reconstructs the reduced state of one or two short time bins of
the output field, and evaluates how well photon counting behind a
Mach-Zehnder interferometer estimates the drive frequency, including the
quantum Fisher information benchmark and a permutation-symmetric treatment
of unmonitored local decay.

All rates are quoted in units of the collective decay rate.
"""

from .dicke import (
    CollectiveSpinOps,
    DensityMatrix,
    ModelParams,
    SuperOperator,
    build_collective_ops,
    build_liouvillian,
)
from .dynamics import (
    AnsatzParams,
    CorrelationBundle,
    DegenerateSteadyStateError,
    SpectralDecomposition,
    ansatz_correlation,
    ansatz_derivative,
    ansatz_params,
    correlation_bundle,
    evolve,
    spectral_decomposition,
    spectral_rates,
    stationary_state,
    steady_state,
    two_time_correlation,
)
from .engines import LadderEngine, MaxSectorEngine, engine_for, find_first_sy_max
from .harness import FitResult, SweepResult, SweepSpec, fit_scaling, run_sweep
from .interferometer import (
    CountingStats,
    EstimationError,
    MzConfig,
    SensingScan,
    counting_stats,
    error_scan,
    estimation_error,
    optimal_sensing_scan,
    output_modes,
)
from .metrology import (
    CrbBound,
    QfiResult,
    QfiTauScan,
    cramer_rao_bound,
    fidelity,
    qfi_bins,
    qfi_one_bin,
    qfi_two_bin,
    qfi_vs_tau,
)
from .permsym import (
    DickeLadderState,
    PermsymLiouvillian,
    brute_force_oracle,
    build_permsym_liouvillian,
    evolve_permsym,
    ground_ladder_state,
    state_from_max_sector,
)
from .timebin import (
    BinReducedState,
    BinSchedule,
    KrausPair,
    evolve_retaining_bins,
    kraus_pair,
    one_bin_analytic,
    reduce_to_bins,
    two_bin_analytic,
)
from .version import VERSION

__version__ = VERSION

__all__ = [
    "AnsatzParams",
    "BinReducedState",
    "BinSchedule",
    "CollectiveSpinOps",
    "CorrelationBundle",
    "CountingStats",
    "CrbBound",
    "DegenerateSteadyStateError",
    "DensityMatrix",
    "DickeLadderState",
    "EstimationError",
    "FitResult",
    "KrausPair",
    "LadderEngine",
    "MaxSectorEngine",
    "ModelParams",
    "MzConfig",
    "PermsymLiouvillian",
    "QfiResult",
    "QfiTauScan",
    "SensingScan",
    "SpectralDecomposition",
    "SuperOperator",
    "SweepResult",
    "SweepSpec",
    "ansatz_correlation",
    "ansatz_derivative",
    "ansatz_params",
    "brute_force_oracle",
    "build_collective_ops",
    "build_liouvillian",
    "build_permsym_liouvillian",
    "correlation_bundle",
    "counting_stats",
    "cramer_rao_bound",
    "engine_for",
    "error_scan",
    "estimation_error",
    "evolve",
    "evolve_permsym",
    "evolve_retaining_bins",
    "fidelity",
    "find_first_sy_max",
    "fit_scaling",
    "ground_ladder_state",
    "kraus_pair",
    "one_bin_analytic",
    "optimal_sensing_scan",
    "output_modes",
    "qfi_bins",
    "qfi_one_bin",
    "qfi_two_bin",
    "qfi_vs_tau",
    "reduce_to_bins",
    "run_sweep",
    "spectral_decomposition",
    "spectral_rates",
    "state_from_max_sector",
    "stationary_state",
    "steady_state",
    "two_bin_analytic",
    "two_time_correlation",
    "__version__",
]
