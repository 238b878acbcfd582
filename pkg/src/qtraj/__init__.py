"""Quantum trajectories on projective space.

Kraus measures and their average channel, purification checks, seeded
trajectory ensembles, Lyapunov exponents of the matrix products and exact
Wasserstein-1 distances between empirical measures.
"""

from .channel import analyze, build_superoperator, check_phi_erg
from .exceptions import (
    AssumptionError,
    BudgetError,
    DeadStateError,
    InvalidInputError,
    NumericalFailureError,
    QTrajError,
)
from .experiments import ExperimentConfig, run_experiment
from .kraus import KrausMeasure, builtin_model, load, resolve_model, validate
from .projective import ProjectivePoint, distance, from_vector
from .purification import check_pur_montecarlo, check_pur_words, contractivity_diagnostic
from .trajectory import compute_f, exact_cylinder_probability, init_trajectory, simulate_ensemble
from .transport import EmpiricalMeasure, cesaro_mix, w1

__version__ = "0.1.0"

__all__ = [
    "AssumptionError",
    "BudgetError",
    "DeadStateError",
    "EmpiricalMeasure",
    "ExperimentConfig",
    "InvalidInputError",
    "KrausMeasure",
    "NumericalFailureError",
    "ProjectivePoint",
    "QTrajError",
    "analyze",
    "build_superoperator",
    "builtin_model",
    "cesaro_mix",
    "check_phi_erg",
    "check_pur_montecarlo",
    "check_pur_words",
    "compute_f",
    "contractivity_diagnostic",
    "distance",
    "exact_cylinder_probability",
    "from_vector",
    "init_trajectory",
    "load",
    "resolve_model",
    "run_experiment",
    "simulate_ensemble",
    "validate",
    "w1",
]
