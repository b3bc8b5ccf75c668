"""Data-driven LQR for discrete-time linear systems.

Off-policy Q-learning from one persistently excited data batch, a
data-based deadbeat design for the initial stabilizing gain, model-based
reference solvers for verification, and noise-robustness diagnostics.
"""

from .errors import (ControllabilityError, ConvergenceError, DataFormatError,
                     DdlqrError, DimensionError, ImprovementError,
                     NumericalError, RankDeficientError,
                     SingularRegressorError, StructureError,
                     UnsupportedInstanceError)
from .linops import (hankel, quad_monomial_rows, quad_monomials, sym_dim,
                     sym_vec_length, unvec_sym, vec_sym)
from .systems import (LinearSystem, Trajectory, closed_loop,
                      controllability_matrix, controllability_rank,
                      load_system, numerical_rank, random_controllable_system,
                      save_system, simulate, spectral_radius)
from .excitation import (TrajectoryFit, check_willems_rank, generate_pe_input,
                         is_persistently_exciting, no_parallel_pairs,
                         trajectory_from_data)
from .qlearn import (IterationRecord, LearningData, QLearningResult, QTheta,
                     RunDiagnostics, build_regressor, collect_learning_data,
                     eta_dim, policy_evaluation, policy_improvement,
                     run_qlearning)
from .oracle import (CostWeights, PhiMatrix, dare_residual, hewer_iteration,
                     lqr_gain, solve_dare, solve_dlyap, theta_star)
from .deadbeat import (ControllerForm, FictitiousSystem, data_matrices,
                       deadbeat_from_data, deadbeat_gain_canonical,
                       expand_with_zero_rows, fictitious_system,
                       mimo_controllable_form, min_samples,
                       select_independent_columns)
from .robustness import (MarginResult, NoiseStudy, NoisyData, TrialRecord,
                         add_noise, epsilon_term, noise_increments,
                         noisy_experiment, run_qlearning_noisy,
                         stability_margin, stability_margin_refined)

__version__ = "0.1.0"

__all__ = [
    "ControllabilityError", "ConvergenceError", "DataFormatError",
    "DdlqrError", "DimensionError", "ImprovementError", "NumericalError",
    "RankDeficientError", "SingularRegressorError", "StructureError",
    "UnsupportedInstanceError",
    "hankel", "quad_monomial_rows", "quad_monomials", "sym_dim",
    "sym_vec_length", "unvec_sym", "vec_sym",
    "LinearSystem", "Trajectory", "closed_loop", "controllability_matrix",
    "controllability_rank", "load_system", "numerical_rank",
    "random_controllable_system", "save_system", "simulate", "spectral_radius",
    "TrajectoryFit", "check_willems_rank", "generate_pe_input",
    "is_persistently_exciting", "no_parallel_pairs", "trajectory_from_data",
    "IterationRecord", "LearningData", "QLearningResult", "QTheta",
    "RunDiagnostics", "build_regressor", "collect_learning_data", "eta_dim",
    "policy_evaluation", "policy_improvement", "run_qlearning",
    "CostWeights", "PhiMatrix", "dare_residual", "hewer_iteration", "lqr_gain",
    "solve_dare", "solve_dlyap", "theta_star",
    "ControllerForm", "FictitiousSystem", "data_matrices", "deadbeat_from_data",
    "deadbeat_gain_canonical", "expand_with_zero_rows", "fictitious_system",
    "mimo_controllable_form", "min_samples", "select_independent_columns",
    "MarginResult", "NoiseStudy", "NoisyData", "TrialRecord", "add_noise",
    "epsilon_term", "noise_increments", "noisy_experiment",
    "run_qlearning_noisy", "stability_margin", "stability_margin_refined",
    "__version__",
]
