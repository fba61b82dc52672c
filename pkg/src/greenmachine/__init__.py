"""Simulator for a time-multiplexed Green Machine joint-detection receiver.

BPSK Hadamard codewords are converted to PPM by a cascade of delay-line
interferometers and detected with on/off single-photon detectors.  The
package also models symbol-by-symbol baseline receivers, capacity formulas,
deep-space link budgets and the stage phase-calibration loop.
"""
from .codebook import bpsk_hadamard_codeword, hadamard_matrix, ppm_codeword
from .detection import (DetectorModel, FrameOutcome, TransitionMatrix, estimate_mean_photon,
                        estimate_transition_matrix, sample_frame)
from .errors import (FitFailed, InsufficientData, InvalidArgument, InvalidConfig, InvalidState,
                     MalformedStream, UndefinedEstimate)
from .events import EventStream, decode_event_stream, generate_event_stream
from .infotheory import (LowPassFit, PiePoint, analytic_pies, gm_ppm_pie, lowpass_fit,
                         mutual_information, pie_from_transition, superadditivity_check)
from .optics import (ChannelModel, DualRailState, GreenMachineConfig, StageParams,
                     apply_channel, apply_stage, gm_transfer_matrix, green_machine_transform)
from .pipeline import GMPipeline, gm_pie, preset, simulate_tallies

__all__ = [
    "ChannelModel", "DetectorModel", "DualRailState", "EventStream", "FitFailed",
    "FrameOutcome", "GMPipeline", "GreenMachineConfig", "InsufficientData", "InvalidArgument",
    "InvalidConfig", "InvalidState", "LowPassFit", "MalformedStream", "PiePoint", "StageParams",
    "TransitionMatrix", "UndefinedEstimate", "analytic_pies", "apply_channel", "apply_stage",
    "bpsk_hadamard_codeword", "decode_event_stream", "estimate_mean_photon",
    "estimate_transition_matrix", "generate_event_stream", "gm_pie", "gm_ppm_pie",
    "gm_transfer_matrix", "green_machine_transform", "hadamard_matrix", "lowpass_fit",
    "mutual_information", "pie_from_transition", "ppm_codeword", "preset", "sample_frame",
    "simulate_tallies", "superadditivity_check",
]
