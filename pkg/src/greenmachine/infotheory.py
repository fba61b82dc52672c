"""Mutual information, photon information efficiency and closed-form bounds.

All information quantities are in bits.  PIE (photon information efficiency)
is bits of mutual information per received photon.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import least_squares
from scipy.special import expit

from .codebook import log2_order
from .errors import FitFailed, InvalidArgument

LOG2E = float(np.log2(np.e))
TWO_LOG2E = 2 * LOG2E
Z95 = 1.959963984540054


@dataclass
class PiePoint:
    nbar: float
    pie: float
    ci_halfwidth: float
    receiver: str
    drift_rate: float = 0.0
    details: dict = field(default_factory=dict, compare=False)


def _as_matrix(tm) -> np.ndarray:
    return np.asarray(getattr(tm, "probabilities", tm), dtype=float)


def _check_priors(priors, n_rows):
    if priors is None:
        return np.full(n_rows, 1.0 / n_rows)
    priors = np.asarray(priors, dtype=float)
    if priors.shape != (n_rows,):
        raise InvalidArgument(f"priors must have length {n_rows}, got shape {priors.shape}")
    if np.any(priors < 0) or abs(priors.sum() - 1) > 1e-12:
        raise InvalidArgument("priors must be a probability vector")
    return priors


def information_density(tm, priors=None) -> np.ndarray:
    """log2 P(y|x)/P(y) per cell; zero where P(y|x) = 0."""
    p = _as_matrix(tm)
    priors = _check_priors(priors, p.shape[0])
    py = priors @ p
    with np.errstate(divide="ignore", invalid="ignore"):
        dens = np.where(p > 0, np.log2(p / py), 0.0)
    return dens


def mutual_information(tm, priors=None) -> float:
    p = _as_matrix(tm)
    if p.ndim != 2:
        raise InvalidArgument("transition matrix must be 2-D")
    priors = _check_priors(priors, p.shape[0])
    mi = float(np.sum(priors[:, None] * p * information_density(p, priors)))
    return max(mi, 0.0)


def mutual_information_std(tm, n_samples: int, priors=None) -> float:
    """Delta-method standard error of the plug-in MI from ``n_samples`` draws.

    Var(I_hat) ~ (E[i^2] - I^2) / n with i the information density.
    """
    p = _as_matrix(tm)
    priors = _check_priors(priors, p.shape[0])
    dens = information_density(p, priors)
    joint = priors[:, None] * p
    mi = np.sum(joint * dens)
    var = max(np.sum(joint * dens**2) - mi**2, 0.0)
    return float(np.sqrt(var / max(n_samples, 1)))


def pie_from_transition(tm, order: int, nbar: float, priors=None) -> float:
    if not nbar > 0:
        raise InvalidArgument("nbar must be positive")
    return mutual_information(tm, priors) / (order * nbar)


def gm_ppm_pie(nbar: float, order: int) -> float:
    """Ideal N-PPM / Green Machine PIE: (1 - exp(-N nbar)) log2 N / (N nbar)."""
    log2_order(order)
    x = order * np.asarray(nbar, dtype=float)
    return -np.expm1(-x) / x * np.log2(order)


def binary_entropy(p):
    p = np.clip(np.asarray(p, dtype=float), 0.0, 1.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        h = -p * np.log2(p) - (1 - p) * np.log2(1 - p)
    return np.nan_to_num(h, nan=0.0)


def helstrom_pe(nbar, convention: str = "paper"):
    """Helstrom error probability for BPSK coherent states.

    ``standard`` uses overlap exp(-4 nbar) with nbar = |alpha|^2;
    ``paper`` uses exp(-nbar), i.e. effective signal energy nbar / 4.
    """
    nbar = np.asarray(nbar, dtype=float)
    if convention == "paper":
        overlap = np.exp(-nbar)
    elif convention == "standard":
        overlap = np.exp(-4 * nbar)
    else:
        raise InvalidArgument(f"unknown overlap convention {convention!r}")
    return 0.5 * (1 - np.sqrt(-np.expm1(np.log(overlap))))


def homodyne_pie(nbar):
    nbar = np.asarray(nbar, dtype=float)
    return np.log2(1 + 4 * nbar) / (2 * nbar)


def heterodyne_pie(nbar):
    nbar = np.asarray(nbar, dtype=float)
    return np.log2(1 + 2 * nbar) / (2 * nbar)


def dolinar_pie(nbar, convention: str = "paper"):
    nbar = np.asarray(nbar, dtype=float)
    return (1 - binary_entropy(helstrom_pe(nbar, convention))) / nbar


@dataclass(frozen=True)
class AnalyticPies:
    nbar: float
    holevo_bpsk: float
    holevo_unrestricted: float
    homodyne: float
    heterodyne: float
    dolinar: float
    helstrom_pe: float
    convention: str


def analytic_pies(nbar: float, convention: str = "paper") -> AnalyticPies:
    if not nbar > 0:
        raise InvalidArgument("nbar must be positive")
    return AnalyticPies(
        nbar=nbar,
        holevo_bpsk=float(-np.log2(nbar) + 1),
        holevo_unrestricted=float(np.log2(1 / nbar) + LOG2E),
        homodyne=float(homodyne_pie(nbar)),
        heterodyne=float(heterodyne_pie(nbar)),
        dolinar=float(dolinar_pie(nbar, convention)),
        helstrom_pe=float(helstrom_pe(nbar, convention)),
        convention=convention,
    )


def symbol_receiver_ceiling(nbar: float) -> float:
    """Best ideal symbol-by-symbol PIE (homodyne, heterodyne, Dolinar) at ``nbar``.

    Dolinar is taken in the standard convention, which reaches 2 log2 e as
    nbar -> 0 and is the larger of the two conventions.
    """
    return float(max(homodyne_pie(nbar), heterodyne_pie(nbar), dolinar_pie(nbar, "standard")))


def superadditivity_check(point: PiePoint) -> str:
    if not np.isfinite(point.ci_halfwidth):
        raise InvalidArgument("point needs a finite confidence interval")
    threshold = symbol_receiver_ceiling(point.nbar)
    if point.pie - point.ci_halfwidth > threshold:
        return "superadditive"
    if point.pie + point.ci_halfwidth < threshold:
        return "not"
    return "inconclusive"


@dataclass(frozen=True)
class LowPassFit:
    a: float
    f0: float
    s: float
    residual_norm: float = 0.0

    def __call__(self, f):
        return lowpass(np.asarray(f, dtype=float), self.a, self.f0, self.s)


def lowpass(f, a, f0, s):
    return a / (1 + (f / f0) ** s)


def lowpass_fit(points) -> LowPassFit:
    """Least-squares fit of pie(f) = a / (1 + (f/f0)^s) on log-parameters.

    Levenberg-Marquardt, equal weights per point, relative step tolerance
    1e-8 and at most 500 evaluations.  Raises FitFailed for too few points,
    under two decades of f, or an unidentifiable result.
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[0] < 4:
        raise FitFailed("need at least 4 (f, pie) points")
    f, y = pts[:, 0], pts[:, 1]
    if np.any(f <= 0) or not np.all(np.isfinite(pts)):
        raise FitFailed("frequencies must be positive and values finite")
    if np.log10(f.max() / f.min()) < 2:
        raise FitFailed("frequency grid must span at least two decades")
    if y.max() <= 0:
        raise FitFailed("all PIE values are zero")

    logf = np.log(f)

    def model(p):
        la, lf0, ls = p
        # a / (1 + e^z) written with expit so large z cannot overflow
        z = np.exp(ls) * (logf - lf0)
        return np.exp(la) * expit(-z), z

    def resid(p):
        return model(p)[0] - y

    def jac(p):
        la, lf0, ls = p
        g, z = model(p)
        s = np.exp(ls)
        w = g * expit(z)
        return np.column_stack([g, w * s, -w * s * (logf - lf0)])

    x0 = np.array([np.log(y.max()), np.median(logf), np.log(1.5)])
    try:
        res = least_squares(resid, x0, jac=jac, method="lm", xtol=1e-8, ftol=1e-12,
                            gtol=1e-12, max_nfev=500)
    except (ValueError, FloatingPointError) as exc:
        raise FitFailed(f"least squares failed: {exc}") from exc
    rnorm = float(np.linalg.norm(res.fun))
    if res.status <= 0:
        raise FitFailed(f"no convergence ({res.message})", rnorm)
    a, f0, s = np.exp(res.x)
    if not (f.min() / 10 <= f0 <= f.max() * 10):
        raise FitFailed(f"cutoff {f0:.3g} Hz lies outside the sampled band", rnorm)
    if np.linalg.cond(res.jac) > 1e10:
        raise FitFailed("parameters are not identifiable from these points", rnorm)
    return LowPassFit(float(a), float(f0), float(s), rnorm)
