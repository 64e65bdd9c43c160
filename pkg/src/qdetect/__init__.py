"""Single-qubit control design and detection statistics for stochastic signals."""

__version__ = "0.1.0"

from .spectra import (
    CorrelationMatrix,
    Lorentzian,
    NoiseModel,
    TimeGrid,
    White,
    WhiteCutoff,
    WhiteNoiseError,
    build_toeplitz,
    correlation,
    sample_process,
    spectrum,
)
from .filters import (
    ControlTrajectory,
    DephasingReport,
    chi_profile,
    chi_quadrature,
    chi_spectral,
    chi_toeplitz,
    cumulative_phase,
    filter_function,
    make_cpmg,
    make_ramsey,
    make_spin_lock,
    outcome_probability,
    phase_vector,
)
from .scenario import SensingScenario, lorentzian_background, objective
from .optimize import (
    ObjectiveConfig,
    OptimizationResult,
    OptimizerConfig,
    crossover_scan,
    eigen_optimal_control,
    extract_omega,
    fit_crossover,
    gradient_optimize,
    grid_search_time,
)
from .simulator import EnsembleResult, evolve_realization, simulate_ensemble
from .detection import HypothesisPair, compare_schemes, error_rate_curve, optimal_threshold
