"""Periodic uniform lattices and their spectral momentum operators.

Coordinates on every axis run over ``[-L/2, L/2)``; sites are flattened in
C order (first axis slowest).  Momentum operators are built in the
plane-wave basis, so they are exactly diagonal there and carry no
finite-difference error.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

MAX_BASIS = 4096


@dataclass(frozen=True)
class Grid:
    dim: int
    points: int
    length: float

    def __post_init__(self):
        if self.dim not in (1, 2, 3):
            raise ValueError(f"dim must be 1, 2 or 3, got {self.dim}")
        if self.points < 4 or self.points % 2:
            raise ValueError(
                f"points per axis must be even and >= 4, got {self.points}"
            )
        if not self.length > 0:
            raise ValueError(f"length must be positive, got {self.length}")

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.points,) * self.dim

    @property
    def size(self) -> int:
        return self.points**self.dim

    @property
    def spacing(self) -> float:
        return self.length / self.points

    @property
    def cell_volume(self) -> float:
        return self.spacing**self.dim

    @cached_property
    def axis(self) -> np.ndarray:
        """1D coordinate values shared by all axes."""
        return (np.arange(self.points) - self.points // 2) * self.spacing

    @cached_property
    def momenta(self) -> np.ndarray:
        """1D lattice momenta 2*pi*k/L for k in [-n/2, n/2), in FFT order."""
        return 2.0 * np.pi * np.fft.fftfreq(self.points, d=self.spacing)

    @cached_property
    def coords(self) -> np.ndarray:
        """Site coordinates, shape ``(size, 3)``; unused axes are zero."""
        mesh = np.meshgrid(*([self.axis] * self.dim), indexing="ij")
        out = np.zeros((self.size, 3))
        for i, m in enumerate(mesh):
            out[:, i] = m.ravel()
        return out

    @cached_property
    def momentum_coords(self) -> np.ndarray:
        """Plane-wave momenta per basis index of :meth:`dft`, shape ``(size, 3)``."""
        mesh = np.meshgrid(*([self.momenta] * self.dim), indexing="ij")
        out = np.zeros((self.size, 3))
        for i, m in enumerate(mesh):
            out[:, i] = m.ravel()
        return out

    @cached_property
    def dft(self) -> np.ndarray:
        """Unitary DFT matrix mapping site amplitudes to plane-wave amplitudes."""
        n = self.points
        j = np.arange(n)
        f1 = np.exp(-2j * np.pi * np.outer(j, j) / n) / np.sqrt(n)
        # plane wave k carries the phase of the centred coordinate origin
        f1 = f1 * np.exp(-1j * self.momenta[:, None] * self.axis[0])
        out = f1
        for _ in range(self.dim - 1):
            out = np.kron(out, f1)
        return out

    def momentum_matrix(self, axis: int) -> np.ndarray:
        """Dense Hermitian matrix of p = -i d/dx_axis in the site basis."""
        if not 0 <= axis < self.dim:
            raise ValueError(f"axis {axis} out of range for a {self.dim}D grid")
        return self._momentum_matrices[axis]

    @cached_property
    def _momentum_matrices(self) -> list[np.ndarray]:
        n = self.points
        j = np.arange(n)
        f1 = np.exp(-2j * np.pi * np.outer(j, j) / n) / np.sqrt(n)
        p1 = (f1.conj().T * self.momenta) @ f1
        p1 = 0.5 * (p1 + p1.conj().T)
        eye = np.eye(n)
        out = []
        for axis in range(self.dim):
            factors = [eye] * self.dim
            factors[axis] = p1
            m = factors[0]
            for f in factors[1:]:
                m = np.kron(m, f)
            out.append(m)
        return out

    def position(self, axis: int) -> np.ndarray:
        """Diagonal of the position operator along ``axis``."""
        return self.coords[:, axis].copy()

    def plane_wave(self, p) -> np.ndarray:
        """exp(i p.r) sampled on the grid (flattened)."""
        return np.exp(1j * self.coords @ as_vec3(p))

    def sum(self, values: np.ndarray) -> complex:
        """Cell-volume weighted sum, the discrete integral."""
        return np.sum(values) * self.cell_volume


def as_vec3(v) -> np.ndarray:
    """Pad a length-1..3 vector to three components."""
    v = np.atleast_1d(np.asarray(v, dtype=float))
    if v.size > 3:
        raise ValueError(f"vector has {v.size} components, at most 3 allowed")
    return np.concatenate([v, np.zeros(3 - v.size)])


def build_grid(dim: int, points: int, length: float) -> Grid:
    grid = Grid(int(dim), int(points), float(length))
    if grid.size > MAX_BASIS:
        raise ValueError(
            f"grid has {grid.size} sites; dense operators are capped at {MAX_BASIS}"
        )
    return grid
