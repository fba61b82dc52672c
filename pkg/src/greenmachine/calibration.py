"""Scan-and-fit phase correction of the interferometer stages.

For stage k a bright CW probe (equal amplitude in every bin) runs through the
already corrected stages 1..k-1.  A scan phase theta is added to the later bin
of every pair that meets at stage k, and 1% of the stage's upper-rail output
power is monitored.  The monitor follows (1 + cos(theta - e_k)) / 2, so a sine
fit recovers the stage error e_k and the stage is reset to the chosen extremum:
maximum (e = 0) or minimum (e = pi).  Either choice only permutes the output
slots.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ._rng import child_rng
from .errors import FitFailed, InvalidArgument
from .optics import GreenMachineConfig, _stage

TAP_FRACTION = 0.01
SCAN_POINTS = 100
MONITOR_NOISE = 0.01
# bookkeeping of the hardware loop, not simulated
STAGE_CORRECTION_TIME = 10e-3
PHASE_STABILITY_TIME = 100e-3


def wrap_phase(x):
    """Map to [-pi, pi)."""
    return (np.asarray(x) + np.pi) % (2 * np.pi) - np.pi


@dataclass(frozen=True)
class SineFit:
    amplitude: float
    phase: float
    offset: float

    def __call__(self, theta):
        return self.offset + self.amplitude * np.sin(np.asarray(theta) + self.phase)


def scan_grid(scan_points: int) -> np.ndarray:
    return np.linspace(0, 2 * np.pi, scan_points, endpoint=False)


def _add_noise(values, sigma, seed, *key):
    if sigma < 0:
        raise InvalidArgument("noise sigma must be non-negative")
    if sigma == 0:
        return values
    return values * (1 + sigma * child_rng(seed, *key).standard_normal(values.shape))


def simulate_phase_scan(true_stage_phase: float, scan_points: int = SCAN_POINTS,
                        monitor_noise_sigma: float = 0.0, seed=None, amplitude: float = 0.5,
                        offset: float = 0.5):
    """Monitor samples offset + amplitude * sin(theta + phase), relative Gaussian noise."""
    if scan_points < 8:
        raise InvalidArgument("a scan needs at least 8 points")
    theta = scan_grid(scan_points)
    clean = offset + amplitude * np.sin(theta + true_stage_phase)
    return theta, _add_noise(clean, monitor_noise_sigma, seed)


def fit_sine(theta, values) -> SineFit:
    """Linear least squares on a sin(theta) + b cos(theta) + c."""
    theta = np.asarray(theta, dtype=float)
    values = np.asarray(values, dtype=float)
    if theta.size < 4 or theta.shape != values.shape:
        raise FitFailed("need at least 4 matching (theta, value) samples")
    design = np.column_stack([np.sin(theta), np.cos(theta), np.ones_like(theta)])
    if np.linalg.matrix_rank(design) < 3:
        raise FitFailed("scan phases do not determine a sinusoid")
    (a, b, c), *_ = np.linalg.lstsq(design, values, rcond=None)
    amp = float(np.hypot(a, b))
    if amp <= 1e-12 * max(abs(c), 1.0):
        raise FitFailed("monitor shows no modulation; phase is undefined")
    return SineFit(amp, float(np.arctan2(b, a) % (2 * np.pi)), float(c))


def stage_monitor(config: GreenMachineConfig, stage_index: int, theta) -> np.ndarray:
    """Tapped upper-rail power of stage ``stage_index`` for each scan phase."""
    n = config.order
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    upper = np.ones((theta.size, n), dtype=complex)
    lower = np.zeros_like(upper)
    for st in config.stages[: stage_index - 1]:
        upper, lower = _stage(upper, lower, st)
    d = config.stages[stage_index - 1].delay_bins
    late = (np.arange(n) % (2 * d)) >= d
    scan = np.where(late, np.exp(1j * theta)[:, None], 1.0)
    upper, lower = _stage(upper * scan, lower * scan, config.stages[stage_index - 1])
    return TAP_FRACTION * np.sum(np.abs(upper) ** 2, axis=1)


def estimate_stage_phase(fit: SineFit) -> float:
    # monitor ~ 1 + cos(theta - e) = 1 + sin(theta + pi/2 - e)
    return float(wrap_phase(np.pi / 2 - fit.phase))


@dataclass
class CalibrationResult:
    config: GreenMachineConfig
    residuals: np.ndarray
    estimates: np.ndarray
    targets: tuple
    fits: list = field(default_factory=list)


def _targets(extrema, k):
    if extrema is None:
        extrema = ("max",) * k
    elif isinstance(extrema, str):
        extrema = (extrema,) * k
    extrema = tuple(extrema)
    if len(extrema) != k or any(e not in ("max", "min") for e in extrema):
        raise InvalidArgument("extrema must be 'max' or 'min' per stage")
    return extrema


def correct_stages_sequential(config: GreenMachineConfig, scan_points: int = SCAN_POINTS,
                              monitor_noise_sigma: float = MONITOR_NOISE, seed=None,
                              extrema=None) -> CalibrationResult:
    """Scan, fit and compensate stages in order S1, S2, ...

    Each later scan sees the already compensated earlier stages.  Residuals
    are distances of each stage phase from its chosen extremum.
    """
    if scan_points < 8:
        raise InvalidArgument("a scan needs at least 8 points")
    k = config.num_stages
    extrema = _targets(extrema, k)
    theta = scan_grid(scan_points)
    phases = np.array([s.phase_error for s in config.stages], dtype=float)
    estimates = np.zeros(k)
    fits = []
    current = config
    for i in range(k):
        values = _add_noise(stage_monitor(current, i + 1, theta), monitor_noise_sigma, seed, i)
        try:
            fit = fit_sine(theta, values)
        except FitFailed as exc:
            err = FitFailed(f"stage {i + 1}: {exc}")
            err.residual = exc.residual
            raise err from exc
        fits.append(fit)
        estimates[i] = estimate_stage_phase(fit)
        shift = 0.0 if extrema[i] == "max" else np.pi
        phases[i] = wrap_phase(phases[i] - estimates[i] + shift)
        current = current.with_phase_errors(phases)
    goal = np.array([0.0 if e == "max" else np.pi for e in extrema])
    residuals = np.abs(wrap_phase(phases - goal))
    return CalibrationResult(current, residuals, estimates, extrema, fits)
