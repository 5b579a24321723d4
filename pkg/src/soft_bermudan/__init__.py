"""Entropy-regularised pricing of Bermudan options and Dynkin games.

Submodules are imported on first attribute access so that the command-line
entry point can set thread counts before numpy loads.
"""
from importlib import import_module

__version__ = "0.1.0"

_EXPORTS = {
    "phi": "entropy", "psi": "entropy", "phi_prime": "entropy", "regularised_driver": "entropy",
    "gibbs_density_at": "entropy", "error_scale": "entropy", "EntropyKernel": "entropy",
    "ExerciseSchedule": "market", "GbmModel": "market", "RewardSpec": "market",
    "PathBatch": "market", "simulate_paths": "market", "make_grid": "market",
    "Lattice": "lattice", "LatticeSolution": "lattice", "solve_classical": "lattice",
    "solve_entropy": "lattice", "solve_european": "lattice", "solve_game": "lattice",
    "policy_iteration_exact": "lattice", "game_policy_iteration_exact": "lattice",
    "entropy_error_bound": "lattice", "bounded_reward_bound": "lattice",
    "game_error_bound": "lattice", "dual_bound_exact": "lattice",
    "ValueEstimator": "approximator", "RegressionTask": "approximator", "FitHyper": "approximator",
    "SolverConfig": "td_solver", "TdSolution": "td_solver", "solve": "td_solver",
    "adjusted_value": "td_solver", "surface_value": "td_solver",
    "improve": "policy_iter", "game_improve": "policy_iter", "evaluation_driver": "policy_iter",
    "PolicyIterState": "policy_iter", "GamePolicyIterState": "policy_iter",
    "HazardPath": "stopping", "hazard_from_values": "stopping",
    "sample_randomized_time": "stopping", "classical_optimal_time": "stopping",
    "convergence_diagnostic": "stopping",
    "DualEstimate": "dual", "martingale_increments": "dual", "upper_bound": "dual",
    "DomainError": "errors", "ConfigurationError": "errors", "StateError": "errors",
    "FitError": "errors",
}

__all__ = sorted(_EXPORTS) + ["__version__"]


def __getattr__(name):
    mod = _EXPORTS.get(name)
    if mod is None:
        raise AttributeError(f"module {__name__!r} has no attribute {name!r}")
    return getattr(import_module(f".{mod}", __name__), name)
