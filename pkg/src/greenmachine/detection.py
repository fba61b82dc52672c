"""Click sampling, frame classification and transition-matrix estimation.

Frame layout in integer picoseconds.  Every bin of length ``tau`` is split as
``[guard/2 | guarded window | guard/2]`` and a signal click is stamped at the
window center.  Dark counts in the guard band land uniformly inside it.
Upper-rail bins (0-based even) report on channel 1, lower-rail bins on 2.

Outcome codes used in tallies (N + 3 columns)::

    0        erasure, no kept click
    1..N     exactly one guarded-window click, in that slot
    N+1      guard-band click(s) only (folded into erasure for capacity)
    N+2      two or more guarded-window clicks, discarded

A frame holding one guarded click plus guard-band clicks counts as that slot.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._kernels import dead_time_keep
from ._rng import child_rng
from .errors import InsufficientData, InvalidArgument, UndefinedEstimate

CLOCK, DET_UPPER, DET_LOWER = 0, 1, 2
PS = 1e12


def to_ps(seconds: float) -> int:
    return int(round(seconds * PS))


@dataclass(frozen=True)
class DetectorModel:
    efficiency: float = 0.85
    dark_rate: float = 0.0
    dead_time: float = 2e-9
    guard_band: float = 10e-9
    guarded_symbol_length: float = 10e-9

    def __post_init__(self):
        if not 0 <= self.efficiency <= 1:
            raise InvalidArgument("efficiency must be in [0, 1]")
        if self.dark_rate < 0 or self.dead_time < 0 or self.guard_band < 0:
            raise InvalidArgument("dark_rate, dead_time and guard_band must be non-negative")
        if not self.guarded_symbol_length > 0:
            raise InvalidArgument("guarded_symbol_length must be positive")

    @property
    def bin_duration(self) -> float:
        return self.guard_band + self.guarded_symbol_length

    @property
    def guard_dark_expectation(self) -> float:
        """Expected guard-band noise counts per bin, both detectors together."""
        return self.dark_rate * self.guard_band / self.guarded_symbol_length

    def click_probability(self, energy):
        p = -np.expm1(-self.efficiency * np.asarray(energy, dtype=float) - self.dark_rate)
        return np.clip(p, 0.0, 1.0)

    def timing(self) -> "BinTiming":
        guard = to_ps(self.guard_band)
        window = to_ps(self.guarded_symbol_length)
        lead = guard // 2
        return BinTiming(guard + window, guard, window, lead, lead + window // 2,
                         to_ps(self.dead_time))


@dataclass(frozen=True)
class BinTiming:
    bin_ps: int
    guard_ps: int
    window_ps: int
    lead_ps: int
    center_ps: int
    dead_ps: int

    def in_window(self, offset):
        return (offset >= self.lead_ps) & (offset < self.lead_ps + self.window_ps)


@dataclass(frozen=True)
class FrameOutcome:
    kind: str
    slot: int | None = None

    ERASURE = "erasure"
    GUARD = "guard_click"
    SLOT = "slot"
    DISCARDED = "discarded_multi_click"

    @classmethod
    def from_code(cls, code: int, order: int) -> "FrameOutcome":
        if code == 0:
            return cls(cls.ERASURE)
        if code == order + 1:
            return cls(cls.GUARD)
        if code == order + 2:
            return cls(cls.DISCARDED)
        return cls(cls.SLOT, int(code))

    @property
    def is_erasure(self) -> bool:
        return self.kind in (self.ERASURE, self.GUARD)


def check_frame_timing(detector: DetectorModel, tau: float) -> BinTiming:
    timing = detector.timing()
    if abs(timing.bin_ps - to_ps(tau)) > 1:
        raise InvalidArgument(
            f"guard band + guarded window ({timing.bin_ps} ps) must equal the bin duration "
            f"({to_ps(tau)} ps)")
    return timing


def draw_records(probs: np.ndarray, n_frames: int, detector: DetectorModel,
                 rng: np.random.Generator, timing: BinTiming | None = None):
    """Raw click records for ``n_frames`` frames.

    ``probs`` is the per-slot click probability, shape (N,) or (n_frames, N).
    Returns (frame, channel, offset_ps) with offset relative to the frame start.
    """
    timing = timing or detector.timing()
    n = probs.shape[-1]
    hits = rng.random((n_frames, n)) < probs
    frame, bins = np.nonzero(hits)
    chan = (DET_UPPER + (bins % 2)).astype(np.int8)
    offset = bins.astype(np.int64) * timing.bin_ps + timing.center_ps

    p_guard = -np.expm1(-detector.guard_dark_expectation)
    if p_guard > 0 and timing.guard_ps > 0:
        g_frame, g_bin = np.nonzero(rng.random((n_frames, n)) < p_guard)
        g_chan = (DET_UPPER + rng.integers(0, 2, g_frame.size)).astype(np.int8)
        u = rng.integers(0, timing.guard_ps, g_frame.size)
        g_off = g_bin.astype(np.int64) * timing.bin_ps + np.where(
            u < timing.lead_ps, u, u + timing.window_ps)
        frame = np.concatenate([frame, g_frame])
        chan = np.concatenate([chan, g_chan])
        offset = np.concatenate([offset, g_off])
    return frame.astype(np.int64), chan, offset


def apply_dead_time(frame, channel, offset, dead_ps: int):
    """Sort records by (frame, channel, time) and drop dead-time violations."""
    order = np.lexsort((offset, channel, frame))
    frame, channel, offset = frame[order], channel[order], offset[order]
    keep = dead_time_keep(frame, channel.astype(np.int64), offset, dead_ps)
    return frame[keep], channel[keep], offset[keep]


def classify_frames(frame, offset, n_frames: int, order: int, timing: BinTiming,
                    slot_map=None) -> np.ndarray:
    """Outcome code per frame from kept records (see module docstring)."""
    codes = np.zeros(n_frames, dtype=np.int64)
    if frame.size == 0:
        return codes
    bins = offset // timing.bin_ps
    guarded = timing.in_window(offset - bins * timing.bin_ps) & (bins < order)
    n_slot = np.bincount(frame[guarded], minlength=n_frames)
    n_guard = np.bincount(frame[~guarded], minlength=n_frames)
    codes[(n_slot == 0) & (n_guard > 0)] = order + 1
    codes[n_slot >= 2] = order + 2
    single = n_slot[frame[guarded]] == 1
    slots = bins[guarded][single] + 1
    if slot_map is not None:
        slots = np.asarray(slot_map)[slots - 1]
    codes[frame[guarded][single]] = slots
    return codes


def sample_outcomes(energies, detector: DetectorModel, n_frames: int,
                    rng: np.random.Generator, slot_map=None) -> np.ndarray:
    """Outcome codes for ``n_frames`` frames sharing the slot energies ``energies``."""
    energies = np.asarray(energies, dtype=float)
    if not np.all(np.isfinite(energies)):
        raise InvalidArgument("slot energies must be finite")
    timing = detector.timing()
    frame, chan, off = draw_records(detector.click_probability(energies), n_frames,
                                    detector, rng, timing)
    frame, chan, off = apply_dead_time(frame, chan, off, timing.dead_ps)
    return classify_frames(frame, off, n_frames, energies.shape[-1], timing, slot_map)


def sample_frame(state, detector: DetectorModel, slot_map=None, seed=None) -> FrameOutcome:
    """One frame outcome for a GM output state (DualRailState or slot energies)."""
    energies = state.slot_energies() if hasattr(state, "slot_energies") else np.asarray(state)
    code = sample_outcomes(energies, detector, 1, child_rng(seed), slot_map)[0]
    return FrameOutcome.from_code(int(code), energies.shape[-1])


def tally(codes: np.ndarray, order: int) -> np.ndarray:
    return np.bincount(codes, minlength=order + 3)[: order + 3]


@dataclass(frozen=True)
class TransitionMatrix:
    order: int
    probabilities: np.ndarray
    counts: np.ndarray

    @property
    def erasure(self) -> np.ndarray:
        return self.probabilities[:, 0]

    @property
    def valid_frames(self) -> np.ndarray:
        return self.counts[:, : self.order + 2].sum(axis=1)


def fold_tallies(counts: np.ndarray) -> np.ndarray:
    """N x (N+1) valid-frame counts: erasure plus guard-only, then slots."""
    counts = np.asarray(counts)
    n = counts.shape[0]
    if counts.shape != (n, n + 3):
        raise InvalidArgument(f"tallies must have shape (N, N+3), got {counts.shape}")
    folded = counts[:, : n + 1].astype(float).copy()
    folded[:, 0] += counts[:, n + 1]
    return folded


def estimate_transition_matrix(counts) -> TransitionMatrix:
    """Row-normalized transition matrix; discarded frames are excluded."""
    counts = np.asarray(counts, dtype=np.int64)
    folded = fold_tallies(counts)
    totals = folded.sum(axis=1)
    empty = np.flatnonzero(totals == 0)
    if empty.size:
        raise InsufficientData(f"no valid frames for codeword(s) {list(empty + 1)}")
    probs = folded / totals[:, None]
    return TransitionMatrix(counts.shape[0], probs, counts)


def estimate_mean_photon(tm: TransitionMatrix, order: int | None = None) -> float:
    """Mean photon number per symbol from vacuum probabilities, -sum ln P_j0 / N^2."""
    n = tm.order if order is None else order
    p0 = tm.erasure
    if np.any(p0 <= 0):
        raise UndefinedEstimate("an erasure probability is zero")
    return float(-np.sum(np.log(p0)) / n**2)


def expected_transition_matrix(energies: np.ndarray, detector: DetectorModel) -> np.ndarray:
    """Exact N x (N+1) matrix for independent slot clicks, ignoring dead time.

    Rows of ``energies`` are codewords, columns physical slots.  Guard-band
    dark counts only move probability within the erasure column, so they drop
    out.  Exact whenever bins are longer than the dead time.
    """
    p = detector.click_probability(energies)
    q = 1.0 - p
    none = np.prod(q, axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        single = np.where(q > 0, none[:, None] * p / q, 0.0)
    # slots with certain clicks: product over the others
    for r, c in zip(*np.nonzero(q == 0)):
        others = np.delete(q[r], c)
        single[r, c] = np.prod(others)
    valid = none + single.sum(axis=1)
    if np.any(valid <= 0):
        raise InsufficientData("a codeword row has no valid (non-discarded) outcomes")
    return np.concatenate([none[:, None], single], axis=1) / valid[:, None]
