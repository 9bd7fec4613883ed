"""Movement calibration: step extraction, HMM fitting, objectives, NSGA-II, slope tuning."""
from .steps import (RelocationTrack, StepSeries, extract_steps, read_track_csv, write_track_csv,
                    simulate_series, track_from_series, REFERENCE_MODEL)
from .hmm import (HmmFit, FamilyComparison, fit_hmm, fit_families, viterbi_decode,
                  state_posteriors, stationary_distribution, path_loglik)
from .nsga2 import GaConfig, ParetoFront, EvaluationError, dominates, nondominated_sort, crowding_distance, nsga2
from .objectives import (STATISTICS, Estimate, MovementObjectives, movement_objectives, hinge_penalties,
                         CALIBRATION_VARIABLES, apply_variables, simulation_objective)
from .tuning import SlopeTuning, NoFeasibleTolerance, steep_tick_fraction, tune_slope_tolerance

__all__ = [
    "RelocationTrack", "StepSeries", "extract_steps", "read_track_csv", "write_track_csv",
    "simulate_series", "track_from_series", "REFERENCE_MODEL",
    "HmmFit", "FamilyComparison", "fit_hmm", "fit_families", "viterbi_decode", "state_posteriors",
    "stationary_distribution", "path_loglik",
    "GaConfig", "ParetoFront", "EvaluationError", "dominates", "nondominated_sort", "crowding_distance", "nsga2",
    "STATISTICS", "Estimate", "MovementObjectives", "movement_objectives", "hinge_penalties",
    "CALIBRATION_VARIABLES", "apply_variables", "simulation_objective",
    "SlopeTuning", "NoFeasibleTolerance", "steep_tick_fraction", "tune_slope_tolerance",
]
