"""Low-order bihormonal glucose models with simulation, least-squares
calibration and structural/practical identifiability analysis."""
from glucokin._jit import JIT_ENABLED
from glucokin.estimation import (
    Dataset,
    FitResult,
    SplitReport,
    bic,
    cost_glucagon_joint,
    cost_glucose,
    cost_insulin_joint,
    fit,
    fit_predict_split,
    generate_synthetic,
    score,
)
from glucokin.identifiability import (
    GridSpec,
    ProfileCurve,
    SVDReport,
    build_theta_ensemble,
    jacobi_matrix,
    jacobi_nullspace_check,
    profile_all,
    profile_likelihood,
    structural_analysis,
)
from glucokin.io import load_experiment, save_experiment, save_results
from glucokin.models import (
    DomainError,
    Family,
    ModelError,
    ModelSpec,
    ParamVector,
    derivative,
    merge_insulin_states,
    model,
    published_params,
    rescale_complete,
)
from glucokin.optimize import nelder_mead, quasi_newton
from glucokin.sensitivity import (
    SensitivityMatrix,
    assemble_sensitivity_matrix,
    forward_sensitivities,
)
from glucokin.solver import Bolus, InputSchedule, Trajectory, integrate

__version__ = "0.1.0"

__all__ = [
    "JIT_ENABLED", "Dataset", "FitResult", "SplitReport", "bic", "cost_glucagon_joint",
    "cost_glucose", "cost_insulin_joint", "fit", "fit_predict_split", "generate_synthetic",
    "score", "GridSpec", "ProfileCurve", "SVDReport", "build_theta_ensemble",
    "jacobi_matrix", "jacobi_nullspace_check", "profile_all", "profile_likelihood",
    "structural_analysis", "load_experiment", "save_experiment", "save_results",
    "DomainError", "Family", "ModelError", "ModelSpec", "ParamVector", "derivative",
    "merge_insulin_states", "model", "published_params", "rescale_complete",
    "nelder_mead", "quasi_newton", "SensitivityMatrix", "assemble_sensitivity_matrix",
    "forward_sensitivities", "Bolus", "InputSchedule", "Trajectory", "integrate",
]
