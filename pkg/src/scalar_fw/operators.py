"""Two-component operators and the rho_3 pseudo-metric algebra.

A :class:`LinearOperator` acts on ``grid (x) C^2`` with component-major
indexing: rows ``0..n-1`` hold the upper component, ``n..2n-1`` the lower
one.  Scalar grid operators are plain ``(n, n)`` ndarrays; :func:`pauli`
tensors them with the 2x2 matrices rho_1, rho_2, rho_3.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Union

import numpy as np

from .grid import Grid

RHO = {
    "identity": np.eye(2, dtype=complex),
    "rho1": np.array([[0, 1], [1, 0]], dtype=complex),
    "rho2": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "rho3": np.array([[1, 0], [0, -1]], dtype=complex),
}

# dense 2-norms above this size fall back to the Frobenius bound
_SPECTRAL_NORM_MAX = 1024


class SpectrumError(ValueError):
    """Eigenvalues fell below the floor required by a matrix function."""


def norm(m: np.ndarray) -> float:
    """Spectral norm for moderate matrices, Frobenius (an upper bound) beyond."""
    m = np.asarray(m)
    if m.ndim == 1:
        return float(np.linalg.norm(m))
    if m.shape[0] <= _SPECTRAL_NORM_MAX:
        return float(np.linalg.norm(m, 2))
    return float(np.linalg.norm(m))


def hermitize(m: np.ndarray) -> np.ndarray:
    return 0.5 * (m + m.conj().T)


@dataclass(frozen=True, eq=False)
class LinearOperator:
    grid: Grid
    matrix: np.ndarray

    def __post_init__(self):
        n = 2 * self.grid.size
        if self.matrix.shape != (n, n):
            raise ValueError(
                f"matrix shape {self.matrix.shape} inconsistent with grid ({n}, {n})"
            )

    @property
    def n(self) -> int:
        return self.grid.size

    def block(self, i: int, j: int) -> np.ndarray:
        n = self.n
        return self.matrix[i * n : (i + 1) * n, j * n : (j + 1) * n]

    @classmethod
    def from_blocks(cls, grid: Grid, blocks) -> "LinearOperator":
        return cls(grid, np.block(blocks).astype(complex))

    @classmethod
    def identity(cls, grid: Grid) -> "LinearOperator":
        return cls(grid, np.eye(2 * grid.size, dtype=complex))

    def even_part(self) -> "LinearOperator":
        """Part commuting with rho_3 (block diagonal)."""
        z = np.zeros((self.n, self.n))
        return LinearOperator.from_blocks(
            self.grid, [[self.block(0, 0), z], [z, self.block(1, 1)]]
        )

    def odd_part(self) -> "LinearOperator":
        """Part anticommuting with rho_3 (block off-diagonal)."""
        z = np.zeros((self.n, self.n))
        return LinearOperator.from_blocks(
            self.grid, [[z, self.block(0, 1)], [self.block(1, 0), z]]
        )

    @property
    def H(self) -> "LinearOperator":
        return LinearOperator(self.grid, self.matrix.conj().T)

    def norm(self) -> float:
        return norm(self.matrix)

    def eigvals(self) -> np.ndarray:
        return np.linalg.eigvals(self.matrix)

    def _check(self, other: "LinearOperator"):
        if other.grid != self.grid:
            raise ValueError("operators live on different grids")

    def __add__(self, other):
        if isinstance(other, LinearOperator):
            self._check(other)
            return LinearOperator(self.grid, self.matrix + other.matrix)
        return NotImplemented

    def __sub__(self, other):
        if isinstance(other, LinearOperator):
            self._check(other)
            return LinearOperator(self.grid, self.matrix - other.matrix)
        return NotImplemented

    def __neg__(self):
        return LinearOperator(self.grid, -self.matrix)

    def __mul__(self, c):
        if np.isscalar(c):
            return LinearOperator(self.grid, c * self.matrix)
        return NotImplemented

    __rmul__ = __mul__

    def __matmul__(self, other):
        if isinstance(other, LinearOperator):
            self._check(other)
            return LinearOperator(self.grid, self.matrix @ other.matrix)
        if isinstance(other, TwoComponentState):
            if other.grid != self.grid:
                raise ValueError("state and operator live on different grids")
            return TwoComponentState.from_vector(self.grid, self.matrix @ other.vector)
        return NotImplemented


@dataclass(frozen=True, eq=False)
class TwoComponentState:
    """Psi = (phi, chi) sampled on a grid; arrays are flattened site vectors."""

    grid: Grid
    upper: np.ndarray
    lower: np.ndarray

    def __post_init__(self):
        n = self.grid.size
        for name in ("upper", "lower"):
            arr = np.asarray(getattr(self, name), dtype=complex).reshape(-1)
            if arr.size != n:
                raise ValueError(f"{name} has {arr.size} samples, grid has {n}")
            object.__setattr__(self, name, arr)

    @classmethod
    def from_vector(cls, grid: Grid, v: np.ndarray) -> "TwoComponentState":
        n = grid.size
        return cls(grid, v[:n], v[n:])

    @property
    def vector(self) -> np.ndarray:
        return np.concatenate([self.upper, self.lower])

    def pseudo_norm(self) -> float:
        return pseudo_inner(self, self).real

    def l2_norm(self) -> float:
        return float(np.sqrt(self.grid.sum(np.abs(self.vector) ** 2).real))

    def __add__(self, other: "TwoComponentState"):
        return TwoComponentState(self.grid, self.upper + other.upper, self.lower + other.lower)

    def __sub__(self, other: "TwoComponentState"):
        return TwoComponentState(self.grid, self.upper - other.upper, self.lower - other.lower)

    def __mul__(self, c):
        return TwoComponentState(self.grid, c * self.upper, c * self.lower)

    __rmul__ = __mul__


def pauli(tag: str, scalar: Union[np.ndarray, float, None], grid: Grid) -> LinearOperator:
    """rho_tag tensored with a scalar grid operator (identity when ``None``)."""
    if tag not in RHO:
        raise ValueError(f"unknown Pauli tag {tag!r}")
    if scalar is None:
        scalar = np.eye(grid.size)
    elif np.isscalar(scalar):
        scalar = scalar * np.eye(grid.size)
    return LinearOperator(grid, np.kron(RHO[tag], scalar))


def rho3(grid: Grid) -> LinearOperator:
    return pauli("rho3", None, grid)


def pseudo_inner(a: TwoComponentState, b: TwoComponentState) -> complex:
    """<a|b> = integral of a^dagger rho_3 b."""
    if a.grid != b.grid:
        raise ValueError("states live on different grids")
    s = np.vdot(a.upper, b.upper) - np.vdot(a.lower, b.lower)
    return complex(s * a.grid.cell_volume)


def _flip_offdiag(m: np.ndarray, n: int) -> np.ndarray:
    out = m.copy()
    out[:n, n:] *= -1
    out[n:, :n] *= -1
    return out


def pseudo_adjoint(a: LinearOperator) -> LinearOperator:
    """rho_3 A^dagger rho_3."""
    return LinearOperator(a.grid, _flip_offdiag(a.matrix.conj().T, a.n))


def pseudo_hermiticity_residual(a: LinearOperator) -> float:
    """||A^double-dagger - A|| / ||A||."""
    scale = a.norm() or 1.0
    return norm(pseudo_adjoint(a).matrix - a.matrix) / scale


def check_pseudo_unitary(u: LinearOperator, tol: float = 1e-10) -> tuple[bool, float]:
    residual = norm(pseudo_adjoint(u).matrix @ u.matrix - np.eye(2 * u.n))
    return residual <= tol, residual


def commutator(a, b):
    return a @ b - b @ a


def anticommutator(a, b):
    return a @ b + b @ a


@dataclass(frozen=True)
class Eigensystem:
    """Eigendecomposition reused for several functions of the same operator."""

    values: np.ndarray
    vectors: np.ndarray
    hermitian: bool

    @classmethod
    def of(cls, a: np.ndarray, hermitian: bool | None = None) -> "Eigensystem":
        a = np.asarray(a)
        if hermitian is None:
            hermitian = np.allclose(a, a.conj().T, rtol=0, atol=1e-12 * (norm(a) or 1.0))
        if hermitian:
            w, v = np.linalg.eigh(hermitize(a))
        else:
            w, v = np.linalg.eig(a)
        return cls(w, v, hermitian)

    def default_floor(self) -> float:
        return 1e-10 * float(np.max(np.abs(self.values), initial=0.0))

    def apply(
        self,
        f: Callable[[np.ndarray], np.ndarray],
        *,
        positive: bool = False,
        floor: float | None = None,
        drop_below_floor: bool = False,
    ) -> np.ndarray:
        """f(A) = V f(w) V^-1.

        With ``positive`` the spectrum must exceed ``floor``; with
        ``drop_below_floor`` offending modes are projected out instead
        (f is zero on them).
        """
        w = self.values
        keep = np.ones(w.shape, dtype=bool)
        if positive or drop_below_floor:
            floor = self.default_floor() if floor is None else floor
            wr = w.real
            if not self.hermitian and np.max(np.abs(w.imag), initial=0) > floor:
                raise SpectrumError("spectrum is not real")
            keep = wr > floor
            if not drop_below_floor and not keep.all():
                raise SpectrumError(
                    f"minimum eigenvalue {wr.min():.3e} is below floor {floor:.3e}"
                )
            w = wr
        fw = np.zeros(w.shape, dtype=complex)
        fw[keep] = f(w[keep])
        v = self.vectors
        if self.hermitian:
            return (v * fw) @ v.conj().T
        return (v * fw) @ np.linalg.inv(v)

    def projector(self, floor: float | None = None) -> np.ndarray:
        """Projector onto eigenmodes above the floor."""
        return self.apply(np.ones_like, drop_below_floor=True, floor=floor)


def matrix_function(a, f, **kwargs):
    """Function of an operator via full eigendecomposition.

    Accepts a scalar grid matrix or a :class:`LinearOperator` and returns the
    same kind.  Keyword arguments go to :meth:`Eigensystem.apply`.
    """
    if isinstance(a, LinearOperator):
        return LinearOperator(a.grid, Eigensystem.of(a.matrix).apply(f, **kwargs))
    return Eigensystem.of(a).apply(f, **kwargs)
