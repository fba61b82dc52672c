"""End-to-end Green Machine receiver: channel, interferometer cascade and detectors.

``nbar`` is the transmitted mean photon number per symbol.  Two PIE
references are reported:

``detector``  nbar seen by the detectors (after GM loss and detector
              efficiency); this is what the erasure-column estimator measures,
              so it corresponds to PIE with losses backed out.
``input``     nbar at the receiver input (after the channel).
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from ._rng import blocks, child_rng, ordered_map
from .codebook import hadamard_matrix
from .detection import (DetectorModel, estimate_mean_photon, estimate_transition_matrix,
                        expected_transition_matrix, sample_outcomes, tally)
from .errors import InvalidArgument
from .infotheory import PiePoint, Z95, mutual_information, mutual_information_std
from .optics import (ChannelModel, GreenMachineConfig, output_slot_energies,
                     phase_error_for_crosstalk)

BLOCK_FRAMES = 1 << 16
NBAR_REFERENCES = ("detector", "input")


@dataclass(frozen=True)
class GMPipeline:
    gm: GreenMachineConfig
    detector: DetectorModel = field(default_factory=DetectorModel)
    channel: ChannelModel = field(default_factory=ChannelModel)
    nbar: float = 0.0
    name: str = ""

    def __post_init__(self):
        if self.nbar < 0 or not np.isfinite(self.nbar):
            raise InvalidArgument("nbar must be finite and non-negative")

    @property
    def order(self) -> int:
        return self.gm.order

    @property
    def symbol_duration(self) -> float:
        return self.gm.symbol_duration

    @property
    def input_nbar(self) -> float:
        return self.nbar * self.channel.attenuation

    @property
    def detector_nbar(self) -> float:
        return self.input_nbar * self.gm.transmission * self.detector.efficiency

    def with_nbar(self, nbar: float, reference: str = "input") -> "GMPipeline":
        """Copy with the per-symbol photon number set at the given reference point."""
        if reference == "input":
            scale = self.channel.attenuation
        elif reference == "detector":
            scale = self.channel.attenuation * self.gm.transmission * self.detector.efficiency
        else:
            raise InvalidArgument(f"unknown nbar reference {reference!r}")
        return replace(self, nbar=nbar / scale)

    def with_drift(self, drift_rate: float) -> "GMPipeline":
        return replace(self, channel=replace(self.channel, drift_rate=drift_rate))

    def codeword_amplitudes(self) -> np.ndarray:
        """N x N received amplitudes, row j-1 = Hadamard codeword j in frame 0.

        A drift ramp only adds a common phase from frame to frame, which the
        GM output energies ignore, so frame 0 stands for every frame.
        """
        n = self.order
        tau = self.symbol_duration
        centers = (np.arange(n) + 0.5) * tau
        phase = np.exp(1j * self.channel.phase(centers))
        alpha = np.sqrt(self.input_nbar)
        return hadamard_matrix(n) * alpha * phase

    def slot_energies(self) -> np.ndarray:
        """N x N mean photon number per output slot, before detector efficiency."""
        return output_slot_energies(self.codeword_amplitudes(), self.gm)

    def expected_transition_matrix(self) -> np.ndarray:
        return expected_transition_matrix(self.slot_energies(), self.detector)

    def nbar_for(self, reference: str) -> float:
        if reference == "detector":
            return self.detector_nbar
        if reference == "input":
            return self.input_nbar
        raise InvalidArgument(f"unknown nbar reference {reference!r}")


def preset(name: str, nbar: float = 0.0) -> GMPipeline:
    """GM1..GM5 receivers with the measured crosstalk and detector settings."""
    key = name.upper()
    if key not in PRESETS:
        raise InvalidArgument(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
    p = PRESETS[key]
    k = p["stages"]
    # residual errors take the sign that a positive drift ramp adds to, so
    # drift never improves the alignment
    eps = -phase_error_for_crosstalk(p["crosstalk"], k)
    gm = GreenMachineConfig.build(k, p["tau"], [eps] * k, p.get("loss_db", 0.0))
    det = DetectorModel(efficiency=p["efficiency"], dark_rate=p["dark_rate"], dead_time=2e-9,
                        guard_band=p["guard"], guarded_symbol_length=p["window"])
    return GMPipeline(gm, det, ChannelModel(), nbar, name=key)


PRESETS = {
    "GM1": dict(stages=1, tau=20e-9, crosstalk=0.010, dark_rate=4e-5, guard=10e-9,
                window=10e-9, efficiency=0.85),
    "GM2": dict(stages=2, tau=20e-9, crosstalk=0.038, dark_rate=4e-5, guard=10e-9,
                window=10e-9, efficiency=0.85),
    "GM3": dict(stages=3, tau=20e-9, crosstalk=0.070, dark_rate=4e-5, guard=10e-9,
                window=10e-9, efficiency=0.85),
    "GM4": dict(stages=4, tau=10e-9, crosstalk=0.113, dark_rate=2e-6, guard=8e-9,
                window=2e-9, efficiency=0.85),
    # projected five-stage device: ideal phases and detectors, 0.4 dB per stage
    "GM5": dict(stages=5, tau=10e-9, crosstalk=0.0, dark_rate=4e-5, guard=8e-9,
                window=2e-9, efficiency=1.0, loss_db=0.4),
}


def simulate_tallies(pipeline: GMPipeline, frames_per_codeword: int, seed=None,
                     threads: int = 1, block_frames: int = BLOCK_FRAMES) -> np.ndarray:
    """(N, N+3) outcome tallies, each codeword sent ``frames_per_codeword`` times.

    Randomness is keyed by (seed, codeword index, block index).
    """
    if frames_per_codeword < 1:
        raise InvalidArgument("frames_per_codeword must be positive")
    energies = pipeline.slot_energies()
    n = pipeline.order
    tasks = [(j, b, cnt) for j in range(n) for b, cnt in blocks(frames_per_codeword, block_frames)]

    def run(task):
        j, b, cnt = task
        codes = sample_outcomes(energies[j], pipeline.detector, cnt, child_rng(seed, j, b))
        return j, tally(codes, n)

    counts = np.zeros((n, n + 3), dtype=np.int64)
    for j, row in ordered_map(run, tasks, threads):
        counts[j] += row
    return counts


def pie_point_from_tallies(counts: np.ndarray, nbar: float, receiver: str,
                           drift_rate: float = 0.0) -> PiePoint:
    tm = estimate_transition_matrix(counts)
    n = tm.order
    valid = int(tm.valid_frames.sum())
    mi = mutual_information(tm)
    ci = Z95 * mutual_information_std(tm, valid) / (n * nbar)
    details = dict(mutual_information_bits=mi, valid_frames=valid,
                   discarded_frames=int(counts[:, n + 2].sum()))
    try:
        details["nbar_estimate"] = estimate_mean_photon(tm)
    except ValueError:
        details["nbar_estimate"] = float("nan")
    return PiePoint(nbar, mi / (n * nbar), ci, receiver, drift_rate, details)


def gm_pie(pipeline: GMPipeline, frames_per_codeword: int, seed=None, threads: int = 1,
           reference: str = "detector") -> PiePoint:
    """Monte Carlo PIE of the pipeline against the chosen nbar reference."""
    counts = simulate_tallies(pipeline, frames_per_codeword, seed, threads)
    point = pie_point_from_tallies(counts, pipeline.nbar_for(reference),
                                   pipeline.name or "gm", pipeline.channel.drift_rate)
    point.details["reference"] = reference
    point.details["counts"] = counts
    return point


def gm_pie_both(pipeline: GMPipeline, frames_per_codeword: int, seed=None,
                threads: int = 1) -> dict:
    """Both reference PIEs from a single Monte Carlo run."""
    counts = simulate_tallies(pipeline, frames_per_codeword, seed, threads)
    name = pipeline.name or "gm"
    return {ref: pie_point_from_tallies(counts, pipeline.nbar_for(ref), name,
                                        pipeline.channel.drift_rate)
            for ref in NBAR_REFERENCES}


def gm_pie_expected(pipeline: GMPipeline, reference: str = "detector") -> float:
    """PIE from the exact expected transition matrix (no sampling)."""
    tm = pipeline.expected_transition_matrix()
    return mutual_information(tm) / (pipeline.order * pipeline.nbar_for(reference))
