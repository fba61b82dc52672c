"""Symbol-by-symbol baseline receivers under a channel phase ramp.

Shot-noise units: a coherent amplitude ``a`` with ``|a|**2 = nbar`` gives a
homodyne quadrature with mean ``Re(a)`` and variance 1/4.  Symbols of a run
are stamped at ``t_i = i * run_duration / trials`` and see the channel phase
``2 pi f t_i``; within a symbol the ramp averages the amplitude by
``sinc(f tau)`` for homodyne detection and rotates the Dolinar displacement
reference sub-slot by sub-slot.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._kernels import dolinar_trials
from ._rng import blocks, child_rng, child_seed32, ordered_map
from .codebook import hadamard_matrix, log2_order
from .errors import InsufficientData, InvalidArgument
from .infotheory import (PiePoint, Z95, heterodyne_pie, mutual_information,
                         mutual_information_std)

HOMODYNE_VAR = 0.25
HIST_BINS = 256
HIST_SIGMAS = 6.0
BLOCK_SYMBOLS = 1 << 18
RECEIVERS = ("gm", "homodyne-soft", "homodyne-threshold-hadamard", "heterodyne-bound",
             "dolinar")


@dataclass(frozen=True)
class DriftScenario:
    drift_rate: float = 0.0
    run_duration: float = 50e-3
    symbol_duration: float = 20e-9
    trials: int = 2_500_000
    drift_phase0: float = 0.0

    def __post_init__(self):
        if self.drift_rate < 0 or not self.run_duration > 0 or not self.symbol_duration > 0:
            raise InvalidArgument("drift_rate >= 0, run_duration > 0, symbol_duration > 0")
        if self.trials < 0:
            raise InvalidArgument("trials must be non-negative")

    def symbol_times(self, start: int, count: int) -> np.ndarray:
        return (start + np.arange(count)) * (self.run_duration / self.trials)

    def phases(self, start: int, count: int) -> np.ndarray:
        """Channel phase at the center of symbols start..start+count-1."""
        t = self.symbol_times(start, count) + 0.5 * self.symbol_duration
        return self.drift_phase0 + 2 * np.pi * self.drift_rate * t

    @property
    def averaging(self) -> float:
        """Amplitude factor from the phase ramp across one symbol."""
        return float(np.sinc(self.drift_rate * self.symbol_duration))


@dataclass(frozen=True)
class DolinarConfig:
    sub_slots: int = 1000
    overlap_convention: str = "paper"

    def __post_init__(self):
        if self.sub_slots < 1:
            raise InvalidArgument("sub_slots must be >= 1")
        if self.overlap_convention not in ("paper", "standard"):
            raise InvalidArgument(f"unknown overlap convention {self.overlap_convention!r}")

    def signal_energy(self, nbar: float) -> float:
        """Per-symbol signal energy |alpha|^2 matching the Helstrom convention."""
        return nbar / 4 if self.overlap_convention == "paper" else nbar


def homodyne_sample(symbol_amp: complex, seed=None, size=None):
    rng = child_rng(seed)
    return np.real(symbol_amp) + np.sqrt(HOMODYNE_VAR) * rng.standard_normal(size)


def _pie_point(counts: np.ndarray, nbar: float, symbols_per_use: int, receiver: str,
               drift_rate: float, extra=None) -> PiePoint:
    totals = counts.sum(axis=1)
    if np.any(totals == 0):
        raise InsufficientData("every input needs at least one trial")
    tm = counts / totals[:, None]
    n = int(totals.sum())
    mi = mutual_information(tm)
    details = {"mutual_information_bits": mi, "trials": n}
    if extra:
        mi = max(mi - extra, 0.0)
        details["bias_correction_bits"] = extra
        details["mutual_information_bits"] = mi
    ci = Z95 * mutual_information_std(tm, n) / (symbols_per_use * nbar)
    return PiePoint(nbar, mi / (symbols_per_use * nbar), ci, receiver, drift_rate, details)


def _check_trials(trials):
    if trials == 0:
        raise InsufficientData("zero trials")


def _soft_block(args):
    nbar, drift, seed, b, start, count, edges = args
    rng = child_rng(seed, b)
    x = rng.integers(0, 2, count) * 2 - 1
    amp = np.sqrt(nbar) * drift.averaging
    q = x * amp * np.cos(drift.phases(start, count)) + 0.5 * rng.standard_normal(count)
    idx = np.clip(np.searchsorted(edges, q, side="right") - 1, 0, HIST_BINS - 1)
    return np.bincount((x > 0) * HIST_BINS + idx, minlength=2 * HIST_BINS).reshape(2, HIST_BINS)


def soft_homodyne_pie(nbar: float, drift: DriftScenario, seed=None, threads: int = 1,
                      bias_correction: bool = True) -> PiePoint:
    """Binary-input homodyne PIE from a 256-bin histogram of the quadrature.

    Bins span +-(sqrt(nbar) + 6 sigma); outliers fall in the edge bins.  The
    Miller-Madow correction removes the leading positive bias of the plug-in
    estimator, (cells_XY - cells_X - cells_Y + 1) / (2 n ln 2) bits.
    """
    if not nbar > 0:
        raise InvalidArgument("nbar must be positive")
    _check_trials(drift.trials)
    half = np.sqrt(nbar) + HIST_SIGMAS * np.sqrt(HOMODYNE_VAR)
    edges = np.linspace(-half, half, HIST_BINS + 1)
    tasks, start = [], 0
    for b, cnt in blocks(drift.trials, BLOCK_SYMBOLS):
        tasks.append((nbar, drift, seed, b, start, cnt, edges))
        start += cnt
    counts = sum(ordered_map(_soft_block, tasks, threads))
    bias = 0.0
    if bias_correction:
        n = counts.sum()
        cells = np.count_nonzero(counts)
        cx = np.count_nonzero(counts.sum(axis=1))
        cy = np.count_nonzero(counts.sum(axis=0))
        bias = (cells - cx - cy + 1) / (2 * n * np.log(2))
    return _pie_point(counts, nbar, 1, "homodyne-soft", drift.drift_rate, bias)


def threshold_homodyne_hadamard_decode(quadratures, order: int | None = None) -> int:
    """Hard-decision Hadamard decoding of N homodyne quadratures.

    Signs are taken as +1 for q >= 0; the codeword is the Hadamard row with the
    largest |correlation|, ties to the lowest index.  Returns a 1-based index.
    """
    q = np.asarray(quadratures, dtype=float)
    n = q.shape[-1] if order is None else order
    log2_order(n)
    if q.shape[-1] != n:
        raise InvalidArgument(f"expected {n} quadratures, got {q.shape[-1]}")
    bits = np.where(q >= 0, 1, -1)
    corr = np.abs(bits @ hadamard_matrix(n).T)
    return np.argmax(corr, axis=-1) + 1


def _threshold_block(args):
    nbar, drift, seed, b, start_word, count, n = args
    rng = child_rng(seed, b)
    h = hadamard_matrix(n)
    words = rng.integers(0, n, count)
    phases = drift.phases(start_word * n, count * n).reshape(count, n)
    amp = np.sqrt(nbar) * drift.averaging
    q = h[words] * amp * np.cos(phases) + 0.5 * rng.standard_normal((count, n))
    dec = threshold_homodyne_hadamard_decode(q, n) - 1
    return np.bincount(words * n + dec, minlength=n * n).reshape(n, n)


def threshold_homodyne_hadamard_pie(nbar: float, drift: DriftScenario, order: int = 8,
                                    seed=None, threads: int = 1) -> PiePoint:
    """PIE of hard-threshold homodyne with Hadamard decoding; trials count symbols."""
    if not nbar > 0:
        raise InvalidArgument("nbar must be positive")
    log2_order(order)
    words = drift.trials // order
    _check_trials(words)
    tasks, start = [], 0
    for b, cnt in blocks(words, BLOCK_SYMBOLS // order):
        tasks.append((nbar, drift, seed, b, start, cnt, order))
        start += cnt
    counts = sum(ordered_map(_threshold_block, tasks, threads))
    return _pie_point(counts, nbar, order, "homodyne-threshold-hadamard", drift.drift_rate)


def heterodyne_upper_bound_pie(nbar: float, drift_rate: float,
                               modulation_bandwidth: float) -> PiePoint:
    """Step model: ideal heterodyne PIE below the modulation bandwidth, zero at or above.

    This is an optimistic bound, not a simulation.
    """
    if not nbar > 0:
        raise InvalidArgument("nbar must be positive")
    pie = float(heterodyne_pie(nbar)) if drift_rate < modulation_bandwidth else 0.0
    return PiePoint(nbar, pie, 0.0, "heterodyne-bound", drift_rate)


def dolinar_tables(energy: float, sub_slots: int):
    """Per-sub-slot hazard and log-likelihood tables of the closed-form receiver.

    With sub-slot energy e and accumulated evidence x = 4 e (m + 1/2), the
    displacement keeps the two hypotheses' no-click probabilities in the
    optimal ratio: g = 1 / sqrt(1 - exp(-x)) in units of the signal amplitude.
    """
    eps = energy / sub_slots
    x_mid = 4 * eps * (np.arange(sub_slots) + 0.5)
    g = 1 / np.sqrt(-np.expm1(-x_mid))
    mu_c = eps * (1 - g) ** 2
    mu_w = eps * (1 + g) ** 2
    inc_noclick = mu_w - mu_c
    # mu_c underflows to 0 at large energy: a click then rules out the hypothesis
    with np.errstate(divide="ignore"):
        inc_click = np.log(-np.expm1(-mu_c)) - np.log(-np.expm1(-mu_w))
    return eps * (1 + g * g), 2 * eps * g, inc_noclick, inc_click


def _dolinar_block(signs, phase_start, phase_step, energy, sub_slots, seed):
    if energy == 0:
        return np.ones(signs.size, dtype=np.int8)
    tables = dolinar_tables(energy, sub_slots)
    return dolinar_trials(signs.astype(np.float64), np.cos(phase_start), np.cos(phase_step),
                          np.sin(phase_start), np.sin(phase_step), *tables, seed)


def dolinar_decide(bit: int, nbar: float, sub_slots: int = 1000, phase_offset: float = 0.0,
                   seed=None, convention: str = "paper") -> int:
    """Decide one BPSK symbol (+1 or -1) sent as ``bit``."""
    if nbar < 0 or bit not in (1, -1):
        raise InvalidArgument("bit must be +-1 and nbar >= 0")
    cfg = DolinarConfig(sub_slots, convention)
    out = _dolinar_block(np.array([bit]), np.array([phase_offset]), np.zeros(1),
                         cfg.signal_energy(nbar), sub_slots, child_seed32(seed))
    return int(out[0])


def dolinar_error_probability(nbar: float, trials: int, config: DolinarConfig = DolinarConfig(),
                              phase_offset: float = 0.0, seed=None, threads: int = 1) -> float:
    """Empirical error probability at a fixed channel phase."""
    drift = DriftScenario(0.0, 1.0, 1.0, trials, phase_offset)
    counts = _dolinar_counts(nbar, drift, config, seed, threads)
    return float((counts[0, 1] + counts[1, 0]) / counts.sum())


def _dolinar_counts(nbar, drift, config, seed, threads):
    energy = config.signal_energy(nbar)

    def run(task):
        b, start, cnt = task
        rng = child_rng(seed, b)
        signs = rng.integers(0, 2, cnt) * 2 - 1
        t0 = drift.symbol_times(start, cnt)
        phase_start = drift.drift_phase0 + 2 * np.pi * drift.drift_rate * t0
        step = np.full(cnt, 2 * np.pi * drift.drift_rate * drift.symbol_duration / config.sub_slots)
        dec = _dolinar_block(signs, phase_start, step, energy, config.sub_slots,
                             child_seed32(seed, b, 1))
        return np.bincount((signs > 0) * 2 + (dec > 0), minlength=4).reshape(2, 2)

    tasks, start = [], 0
    for b, cnt in blocks(drift.trials, BLOCK_SYMBOLS):
        tasks.append((b, start, cnt))
        start += cnt
    return sum(ordered_map(run, tasks, threads))


def dolinar_pie(nbar: float, drift: DriftScenario, config: DolinarConfig = DolinarConfig(),
                seed=None, threads: int = 1) -> PiePoint:
    if not nbar > 0:
        raise InvalidArgument("nbar must be positive")
    _check_trials(drift.trials)
    counts = _dolinar_counts(nbar, drift, config, seed, threads)
    return _pie_point(counts, nbar, 1, "dolinar", drift.drift_rate)


def monte_carlo_pie(receiver: str, nbar: float, drift: DriftScenario, seed=None,
                    threads: int = 1, dolinar: DolinarConfig = DolinarConfig(),
                    hadamard_order: int = 8, gm_preset: str = "GM3") -> PiePoint:
    """Dispatch a PIE simulation for any receiver id."""
    if receiver not in RECEIVERS:
        raise InvalidArgument(f"unknown receiver {receiver!r}; choose from {RECEIVERS}")
    if drift.trials < 10_000:
        raise InvalidArgument("at least 10^4 trials are required")
    if receiver == "homodyne-soft":
        return soft_homodyne_pie(nbar, drift, seed, threads)
    if receiver == "homodyne-threshold-hadamard":
        return threshold_homodyne_hadamard_pie(nbar, drift, hadamard_order, seed, threads)
    if receiver == "heterodyne-bound":
        return heterodyne_upper_bound_pie(nbar, drift.drift_rate, 1 / drift.symbol_duration)
    if receiver == "dolinar":
        return dolinar_pie(nbar, drift, dolinar, seed, threads)
    from .pipeline import gm_pie, preset

    pipe = preset(gm_preset).with_nbar(nbar, "detector").with_drift(drift.drift_rate)
    frames = max(drift.trials // pipe.order // pipe.order, 1)
    point = gm_pie(pipe, frames, seed, threads)
    point.receiver = "gm"
    return point
