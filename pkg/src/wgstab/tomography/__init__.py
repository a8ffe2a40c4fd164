"""Synthetic field tomography: shots, moments, filters and state reconstruction."""
from .field import (
    FilterFunction,
    FilterResult,
    combined_field,
    demodulate,
    expected_output_field,
    ideal_filter,
    mode_matching_efficiency,
    optimize_filter,
    parasitic_scenario,
)
from .gain import GainCalibration, calibrate_gain, fit_gain
from .mle import ReconstructionResult, bootstrap_ci, concurrence, mle_reconstruct
from .moments import MomentSet, exact_moments, moments_from_shots
from .shots import AmplifierModel, synthesize_shots

__all__ = [
    "AmplifierModel",
    "FilterFunction",
    "FilterResult",
    "GainCalibration",
    "MomentSet",
    "ReconstructionResult",
    "bootstrap_ci",
    "calibrate_gain",
    "combined_field",
    "concurrence",
    "demodulate",
    "exact_moments",
    "expected_output_field",
    "fit_gain",
    "ideal_filter",
    "mle_reconstruct",
    "mode_matching_efficiency",
    "moments_from_shots",
    "optimize_filter",
    "parasitic_scenario",
    "synthesize_shots",
]
