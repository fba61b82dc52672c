"""Linear-optical propagation through the channel and the time-multiplexed Green Machine.

The receiver state is a pair of length-N complex amplitude vectors (upper and
lower rail) indexed by frame-local time bin.  Constant propagation latency of
the delay lines is removed, so after stage k the upper rail occupies the first
half of every ``2 * delay_bins`` block and the lower rail the second half.
After the last stage (delay 1) the upper rail holds the odd output slots and
the lower rail the even ones (1-based).

Stage convention, with ``u`` the earlier and ``l`` the later bin of a pair
that meet at the beamsplitter and ``e`` the relative arm phase error::

    upper = sqrt(1 - loss) * (exp(+i e/2) u + exp(-i e/2) l) / sqrt(2)
    lower = sqrt(1 - loss) * (exp(+i e/2) u - exp(-i e/2) l) / sqrt(2)

With every ``e = 0`` and no loss the cascade is exactly ``H / sqrt(N)`` in
Sylvester order, so BPSK Hadamard codeword j lands in output slot j.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .codebook import CoherentCodeword, is_power_of_two, log2_order
from .errors import InvalidArgument, InvalidState

SQRT_HALF = np.sqrt(0.5)


@dataclass(frozen=True)
class ChannelModel:
    """Power attenuation plus a single-frequency phase ramp.

    phase(t) = drift_phase0 + 2*pi*drift_rate*t
    """

    attenuation: float = 1.0
    drift_rate: float = 0.0
    drift_phase0: float = 0.0
    drift_model: str = "single-frequency-ramp"

    def __post_init__(self):
        if not 0 < self.attenuation <= 1:
            raise InvalidArgument(f"attenuation must be in (0, 1], got {self.attenuation}")
        if self.drift_rate < 0:
            raise InvalidArgument("drift_rate must be non-negative")
        if self.drift_model != "single-frequency-ramp":
            raise InvalidArgument(f"unknown drift model {self.drift_model!r}")

    def phase(self, t):
        return np.mod(self.drift_phase0 + 2 * np.pi * self.drift_rate * np.asarray(t), 2 * np.pi)


@dataclass(frozen=True)
class StageParams:
    delay_bins: int
    phase_error: float = 0.0
    loss_fraction: float = 0.0

    def __post_init__(self):
        if not is_power_of_two(self.delay_bins):
            raise InvalidArgument("delay_bins must be a power of two")
        if not 0 <= self.loss_fraction < 1:
            raise InvalidArgument("loss_fraction must be in [0, 1)")

    @property
    def transmission(self) -> float:
        return 1.0 - self.loss_fraction


def db_to_loss_fraction(db: float) -> float:
    return 1.0 - 10 ** (-db / 10)


@dataclass(frozen=True)
class GreenMachineConfig:
    stages: tuple
    symbol_duration: float

    def __post_init__(self):
        stages = tuple(self.stages)
        if not stages:
            raise InvalidArgument("a Green Machine needs at least one stage")
        n = 2 ** len(stages)
        for k, st in enumerate(stages, start=1):
            if st.delay_bins != n >> k:
                raise InvalidArgument(
                    f"stage {k} delay must be {n >> k} bins, got {st.delay_bins}")
        if not self.symbol_duration > 0:
            raise InvalidArgument("symbol_duration must be positive")
        object.__setattr__(self, "stages", stages)

    @classmethod
    def build(cls, num_stages: int, symbol_duration: float, phase_errors=None,
              loss_db_per_stage: float = 0.0) -> "GreenMachineConfig":
        n = 2 ** num_stages
        log2_order(n)
        if phase_errors is None:
            phase_errors = [0.0] * num_stages
        if len(phase_errors) != num_stages:
            raise InvalidArgument("need one phase error per stage")
        loss = db_to_loss_fraction(loss_db_per_stage)
        stages = tuple(StageParams(n >> k, float(e), loss)
                       for k, e in enumerate(phase_errors, start=1))
        return cls(stages, symbol_duration)

    @property
    def num_stages(self) -> int:
        return len(self.stages)

    @property
    def order(self) -> int:
        return 2 ** len(self.stages)

    @property
    def transmission(self) -> float:
        return float(np.prod([s.transmission for s in self.stages]))

    @property
    def frame_duration(self) -> float:
        return self.order * self.symbol_duration

    def switch_frequency(self, stage_index: int) -> float:
        """Square-wave frequency of the stage switch (one period per 2*delay block)."""
        d = self.stages[stage_index - 1].delay_bins
        return 1.0 / (2 * d * self.symbol_duration)

    def with_phase_errors(self, phase_errors) -> "GreenMachineConfig":
        stages = tuple(StageParams(s.delay_bins, float(e), s.loss_fraction)
                       for s, e in zip(self.stages, phase_errors, strict=True))
        return GreenMachineConfig(stages, self.symbol_duration)


@dataclass
class DualRailState:
    upper: np.ndarray
    lower: np.ndarray = field(default=None)

    def __post_init__(self):
        self.upper = np.asarray(self.upper, dtype=complex)
        if self.lower is None:
            self.lower = np.zeros_like(self.upper)
        self.lower = np.asarray(self.lower, dtype=complex)
        if self.upper.shape != self.lower.shape:
            raise InvalidState("rails must have equal length")

    @property
    def order(self) -> int:
        return self.upper.shape[-1]

    @property
    def energy(self) -> float:
        return float(np.sum(np.abs(self.upper) ** 2) + np.sum(np.abs(self.lower) ** 2))

    def slot_energies(self) -> np.ndarray:
        """Energy per output time bin, summed over rails (bin i is slot i+1)."""
        return np.abs(self.upper) ** 2 + np.abs(self.lower) ** 2


def apply_channel(codeword: CoherentCodeword, channel: ChannelModel) -> CoherentCodeword:
    phases = channel.phase(codeword.bin_centers())
    amps = codeword.amplitudes * np.sqrt(channel.attenuation) * np.exp(1j * phases)
    return CoherentCodeword(amps, codeword.bin_duration, codeword.frame_start, codeword.label)


def _occupancy_masks(n: int, stage_index: int):
    """Positions allowed to be non-zero on (upper, lower) before ``stage_index``."""
    t = np.arange(n)
    if stage_index == 1:
        return np.ones(n, bool), np.zeros(n, bool)
    block = 2 * (n >> (stage_index - 1))
    first = (t % block) < block // 2
    return first, ~first


def _stage(upper, lower, stage: StageParams):
    # Inputs are time-disjoint across rails, so the switch sees one serial stream.
    v = upper + lower
    d = stage.delay_bins
    shape = v.shape
    v = v.reshape(shape[:-1] + (shape[-1] // (2 * d), 2, d))
    early, late = v[..., 0, :], v[..., 1, :]
    ph = np.exp(0.5j * stage.phase_error)
    amp = np.sqrt(stage.transmission) * SQRT_HALF
    up = amp * (ph * early + np.conj(ph) * late)
    lo = amp * (ph * early - np.conj(ph) * late)
    zero = np.zeros_like(up)
    new_upper = np.stack([up, zero], axis=-2).reshape(shape)
    new_lower = np.stack([zero, lo], axis=-2).reshape(shape)
    return new_upper, new_lower


def apply_stage(state: DualRailState, stage: StageParams, stage_index: int) -> DualRailState:
    n = state.order
    if not is_power_of_two(n) or stage_index < 1 or (n >> stage_index) != stage.delay_bins:
        raise InvalidState(
            f"stage {stage_index} with delay {stage.delay_bins} does not fit a {n}-bin frame")
    up_ok, lo_ok = _occupancy_masks(n, stage_index)
    if np.any(state.upper[..., ~up_ok] != 0) or np.any(state.lower[..., ~lo_ok] != 0):
        raise InvalidState(f"state is not aligned to the stage {stage_index} switching period")
    upper, lower = _stage(state.upper, state.lower, stage)
    return DualRailState(upper, lower)


def _cascade(amplitudes: np.ndarray, config: GreenMachineConfig):
    upper = np.asarray(amplitudes, dtype=complex)
    lower = np.zeros_like(upper)
    for st in config.stages:
        upper, lower = _stage(upper, lower, st)
    return upper, lower


def green_machine_transform(codeword: CoherentCodeword, config: GreenMachineConfig) -> DualRailState:
    if codeword.order != config.order:
        raise InvalidArgument(
            f"codeword length {codeword.order} does not match {config.num_stages}-stage GM")
    state = DualRailState(codeword.amplitudes)
    for k, st in enumerate(config.stages, start=1):
        state = apply_stage(state, st, k)
    return state


def gm_transfer_matrix(config: GreenMachineConfig) -> np.ndarray:
    """2N x N matrix; rows 0..N-1 are upper-rail bins, N..2N-1 lower-rail bins."""
    n = config.order
    upper, lower = _cascade(np.eye(n, dtype=complex), config)
    # row r of the batch is the response to input bin r
    return np.concatenate([upper.T, lower.T], axis=0)


def output_slot_energies(amplitudes: np.ndarray, config: GreenMachineConfig) -> np.ndarray:
    """Slot energies for one or many input vectors (last axis = bins)."""
    upper, lower = _cascade(amplitudes, config)
    return np.abs(upper) ** 2 + np.abs(lower) ** 2


def slot_permutation(config: GreenMachineConfig) -> np.ndarray:
    """sigma[j-1] = 1-based output slot receiving most energy of Hadamard codeword j."""
    from .codebook import hadamard_matrix

    energies = output_slot_energies(hadamard_matrix(config.order).astype(complex), config)
    return np.argmax(energies, axis=1) + 1


def off_slot_fraction(config: GreenMachineConfig) -> float:
    """Mean fraction of output energy outside each codeword's brightest slot."""
    from .codebook import hadamard_matrix

    energies = output_slot_energies(hadamard_matrix(config.order).astype(complex), config)
    total = energies.sum(axis=1)
    return float(np.mean(1.0 - energies.max(axis=1) / total))


def phase_error_for_crosstalk(crosstalk: float, num_stages: int) -> float:
    """Equal per-stage phase error giving the requested off-slot energy fraction."""
    if not 0 <= crosstalk < 1:
        raise InvalidArgument("crosstalk must be in [0, 1)")
    return float(2 * np.arccos((1 - crosstalk) ** (1 / (2 * num_stages))))
