"""Simulation and conditional least squares estimation for coupled two-factor
square-root diffusions (two-type continuous-state branching with immigration).
"""

from .estimate import (
    DiffusionEstimate,
    DriftEstimate,
    DriftStatistics,
    EstimateReport,
    EstimationError,
    SandwichCovariance,
    WeightFn,
    drift_statistics,
    estimate_diffusion,
    estimate_drift,
    full_estimate,
    gamma_asymptotic_variance,
    sandwich_covariance,
    theta_from_estimates,
)
from .experiments import (
    ExperimentConfig,
    McReport,
    build_experiment,
    load_experiment,
    run_experiment,
)
from .mat2 import Mat2, Vec2, Vec4, eigenvalues, expm, inverse, logm, vec
from .model import (
    ModelParams,
    RiccatiSolution,
    conditional_mean,
    conditional_variance,
    eta_matrices,
    mean_coefficients,
    phi,
    solve_riccati,
    stationary_laplace,
    transition_laplace,
)
from .simulate import (
    LaplaceReport,
    ObservationSeries,
    SimConfig,
    derive_seed,
    laplace_check,
    simulate_exact_diagonal,
    simulate_many,
    simulate_path,
    simulate_replicates,
)

__version__ = "0.1.0"

__all__ = [
    "Mat2", "Vec2", "Vec4", "eigenvalues", "expm", "logm", "inverse", "vec",
    "ModelParams", "RiccatiSolution", "phi", "solve_riccati",
    "transition_laplace", "stationary_laplace", "conditional_mean",
    "mean_coefficients", "eta_matrices", "conditional_variance",
    "SimConfig", "ObservationSeries", "LaplaceReport", "derive_seed",
    "simulate_path", "simulate_replicates", "simulate_exact_diagonal",
    "simulate_many", "laplace_check",
    "WeightFn", "DriftStatistics", "DriftEstimate", "DiffusionEstimate",
    "SandwichCovariance", "EstimateReport", "EstimationError",
    "drift_statistics", "estimate_drift", "estimate_diffusion",
    "sandwich_covariance", "gamma_asymptotic_variance",
    "theta_from_estimates", "full_estimate",
    "ExperimentConfig", "McReport", "build_experiment", "load_experiment",
    "run_experiment",
    "__version__",
]
