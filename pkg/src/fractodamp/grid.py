"""Periodic box ``[-L, L)^n`` and its Fourier conventions.

Coefficients are stored as ``fftn(u, norm="forward")``, so a single mode of
amplitude ``a`` has ``L2 = a * (2L)**(n/2)`` and the zero mode equals the mean.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import ConfigError, ShapeError


@dataclass(frozen=True)
class GridSpec:
    n: int
    L: float
    N: int
    dealias_fraction: float = 2.0 / 3.0

    def __post_init__(self):
        if self.n not in (1, 2):
            raise ConfigError("grid dimension n must be 1 or 2")
        if not self.L > 0:
            raise ConfigError("box half-length L must be positive")
        if self.N < 32 or self.N & (self.N - 1):
            raise ConfigError("N must be a power of two and at least 32")
        if not 0 < self.dealias_fraction <= 1:
            raise ConfigError("dealias_fraction must lie in (0, 1]")

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.N,) * self.n

    @property
    def dx(self) -> float:
        return 2 * self.L / self.N

    @property
    def volume(self) -> float:
        return (2 * self.L) ** self.n

    @cached_property
    def integer_modes(self) -> np.ndarray:
        """Signed mode numbers in FFT order, ``[0, 1, ..., N/2-1, -N/2, ..., -1]``."""
        return np.fft.fftfreq(self.N, d=1.0 / self.N).astype(np.int64)

    @cached_property
    def axis_wavenumbers(self) -> np.ndarray:
        return math.pi / self.L * self.integer_modes

    @cached_property
    def coords(self) -> np.ndarray:
        return -self.L + self.dx * np.arange(self.N)

    def mesh(self) -> list[np.ndarray]:
        return np.meshgrid(*([self.coords] * self.n), indexing="ij")

    def radius(self) -> np.ndarray:
        if self.n == 1:
            return np.abs(self.coords)
        X, Y = self.mesh()
        return np.hypot(X, Y)

    @cached_property
    def mode_key(self) -> np.ndarray:
        """Integer ``|k|^2`` on the full grid; ``|xi| = (pi/L) sqrt(key)``."""
        k = self.integer_modes
        if self.n == 1:
            return k * k
        return k[:, None] ** 2 + k[None, :] ** 2

    @cached_property
    def radial_index(self) -> tuple[np.ndarray, np.ndarray]:
        """Unique ``|xi|`` values and the inverse map back onto the grid."""
        keys, inverse = np.unique(self.mode_key, return_inverse=True)
        return math.pi / self.L * np.sqrt(keys.astype(float)), inverse.reshape(self.shape)

    @cached_property
    def xi(self) -> np.ndarray:
        return math.pi / self.L * np.sqrt(self.mode_key.astype(float))

    @cached_property
    def dealias_mask(self) -> np.ndarray:
        kmax = self.dealias_fraction * self.N / 2
        keep = np.abs(self.integer_modes) <= kmax
        if self.n == 1:
            return keep
        return keep[:, None] & keep[None, :]

    def check(self, arr: np.ndarray, what: str = "array") -> None:
        if np.shape(arr) != self.shape:
            raise ShapeError(f"{what} has shape {np.shape(arr)}, grid expects {self.shape}")

    def to_dict(self):
        return {"n": self.n, "L": self.L, "N": self.N, "dealias_fraction": self.dealias_fraction}


def to_fourier(u: np.ndarray) -> np.ndarray:
    return np.fft.fftn(u, norm="forward")


def to_physical(c: np.ndarray) -> np.ndarray:
    return np.fft.ifftn(c, norm="forward").real
