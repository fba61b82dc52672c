"""Hadamard matrices and the BPSK-Hadamard / PPM coherent-state codebooks.

Amplitudes are dimensionless: ``|a|**2`` is the mean photon number of a bin.
Codeword indices are 1-based and equal the Sylvester row index.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidArgument

MAX_ORDER_EXPONENT = 20


def is_power_of_two(n: int) -> bool:
    return isinstance(n, (int, np.integer)) and n > 0 and (n & (n - 1)) == 0


def log2_order(n: int) -> int:
    if not is_power_of_two(n) or n < 2:
        raise InvalidArgument(f"order must be a power of two >= 2, got {n!r}")
    k = int(n).bit_length() - 1
    if k > MAX_ORDER_EXPONENT:
        raise InvalidArgument(f"order 2**{k} exceeds 2**{MAX_ORDER_EXPONENT}")
    return k


def hadamard_matrix(order: int) -> np.ndarray:
    """Sylvester Hadamard matrix: H2 = [[1, 1], [1, -1]], H2n = H2 (x) Hn."""
    k = log2_order(order)
    h2 = np.array([[1, 1], [1, -1]], dtype=np.int64)
    h = np.ones((1, 1), dtype=np.int64)
    for _ in range(k):
        h = np.kron(h2, h)
    return h


@dataclass(frozen=True)
class CoherentCodeword:
    amplitudes: np.ndarray
    bin_duration: float
    frame_start: float = 0.0
    label: str = field(default="", compare=False)

    def __post_init__(self):
        amps = np.asarray(self.amplitudes, dtype=complex)
        if amps.ndim != 1 or not is_power_of_two(amps.size):
            raise InvalidArgument("codeword length must be a power of two")
        if not np.all(np.isfinite(amps)):
            raise InvalidArgument("codeword amplitudes must be finite")
        if not self.bin_duration > 0:
            raise InvalidArgument("bin_duration must be positive")
        object.__setattr__(self, "amplitudes", amps)

    @property
    def order(self) -> int:
        return self.amplitudes.size

    @property
    def energy(self) -> float:
        return float(np.sum(np.abs(self.amplitudes) ** 2))

    @property
    def mean_photon(self) -> float:
        """Mean photon number per symbol (bin)."""
        return self.energy / self.order

    def bin_centers(self) -> np.ndarray:
        return self.frame_start + (np.arange(self.order) + 0.5) * self.bin_duration


def _check_index(j: int, n: int) -> None:
    log2_order(n)
    if not 1 <= j <= n:
        raise InvalidArgument(f"codeword index {j} outside 1..{n}")


def bpsk_hadamard_codeword(j: int, n: int, alpha: complex, tau: float,
                           frame_start: float = 0.0) -> CoherentCodeword:
    _check_index(j, n)
    row = hadamard_matrix(n)[j - 1]
    return CoherentCodeword(row * complex(alpha), tau, frame_start, label=f"X{j}")


def ppm_codeword(j: int, n: int, alpha: complex, tau: float,
                 frame_start: float = 0.0) -> CoherentCodeword:
    _check_index(j, n)
    amps = np.zeros(n, dtype=complex)
    amps[j - 1] = np.sqrt(n) * complex(alpha)
    return CoherentCodeword(amps, tau, frame_start, label=f"Y{j}")
