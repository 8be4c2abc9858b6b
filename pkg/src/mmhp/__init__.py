"""Markov-modulated Hawkes process with a step-frozen excitation kernel.

Simulation, EM estimation, hidden-state decoding (batch and streaming),
residual goodness-of-fit and a trade-burst detection pipeline.
"""

from .decode import OnlineDecoder, ViterbiTrace, online_advance, online_event, online_init, viterbi
from .em import (FitConfig, FitResult, fit, fit_mmpp, information_criteria,
                 model_selection)
from .errors import (DataError, DecodeError, MMHPError, NumericalError,
                     StateStarvationError)
from .gof import ResidualReport, ks_exp1, qq_export, residuals
from .inference import (EStepCache, InferenceState, estep_statistics,
                        filtered_probabilities, forward_backward)
from .matexp import expm, expm_batch, ode_oracle_G, ode_oracle_H, vanloan_upper_right
from .model import (EventSequence, ExponentialKernel, IntervalGrid, ModelParams,
                    PiecewiseIntensity, grid_decompose, intensity_at_grid,
                    stationary_distribution)
from .simulate import SimulationResult, simulate_mmhp_continuous, simulate_mmhp_delta
from .transition import TransitionBundle, backward_G, build_bundle, density_f, forward_H, intra_R

__version__ = "0.1.0"

__all__ = [
    "DataError", "DecodeError", "EStepCache", "EventSequence", "ExponentialKernel",
    "FitConfig", "FitResult", "InferenceState", "IntervalGrid", "MMHPError",
    "ModelParams", "NumericalError", "OnlineDecoder", "PiecewiseIntensity",
    "ResidualReport", "SimulationResult", "StateStarvationError", "TransitionBundle",
    "ViterbiTrace", "backward_G", "build_bundle", "density_f", "estep_statistics",
    "expm", "expm_batch", "filtered_probabilities", "fit", "fit_mmpp", "forward_H",
    "forward_backward", "grid_decompose", "information_criteria", "intensity_at_grid",
    "intra_R", "ks_exp1", "model_selection", "ode_oracle_G", "ode_oracle_H",
    "online_advance", "online_event", "online_init", "qq_export", "residuals",
    "simulate_mmhp_continuous", "simulate_mmhp_delta", "stationary_distribution",
    "vanloan_upper_right", "viterbi",
]
