"""Generalized CFFV form of the Klein-Gordon equation.

The KG wave function psi and its time derivative are lifted to a
two-component state with an arbitrary nonzero parameter N,

    phi = (psi + (i hbar dpsi/dt - e phi_el psi) / N) / 2
    chi = (psi - (i hbar dpsi/dt - e phi_el psi) / N) / 2

which evolves under

    H = rho3 (pi^2 + m^2 + N^2)/2N + e phi_el + i rho2 (pi^2 + m^2 - N^2)/2N.

``hbar_scale`` multiplies the lattice momentum, p = -i hbar grad, so the
same grid code serves every value of hbar.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from functools import cached_property, lru_cache

import numpy as np
import scipy.linalg

from .fields import FREE, FieldConfig
from .grid import Grid
from .operators import (
    Eigensystem,
    LinearOperator,
    TwoComponentState,
    hermitize,
    norm,
    pauli,
    pseudo_inner,
)

log = logging.getLogger(__name__)


class InstabilityError(RuntimeError):
    """Pseudo-norm drift exceeded the monitor threshold."""


@dataclass(frozen=True)
class ParticleParams:
    mass: float = 1.0
    charge: float = 0.0
    cffv_n: float | None = None
    hbar_scale: float = 1.0

    def __post_init__(self):
        if self.mass < 0:
            raise ValueError(f"mass must be >= 0, got {self.mass}")
        if self.cffv_n is None:
            object.__setattr__(self, "cffv_n", max(self.mass, 1.0))
        if self.cffv_n == 0:
            raise ValueError("the CFFV parameter N must be nonzero")
        if not self.hbar_scale >= 0:
            raise ValueError("hbar_scale must be non-negative")

    @property
    def N(self) -> float:
        return float(self.cffv_n)

    def replace(self, **kw) -> "ParticleParams":
        d = dict(mass=self.mass, charge=self.charge, cffv_n=self.cffv_n,
                 hbar_scale=self.hbar_scale)
        d.update(kw)
        return ParticleParams(**d)


@dataclass(frozen=True, eq=False)
class ScalarParts:
    """Scalar grid operators shared by every two-component construction."""

    grid: Grid
    pi: tuple  # three (n, n) matrices; axes beyond grid.dim carry only -eA
    pi2: np.ndarray
    potential: np.ndarray  # diagonal of e*phi

    @property
    def F(self) -> np.ndarray:
        return np.diag(self.potential).astype(complex)

    @cached_property
    def eig(self) -> Eigensystem:
        return Eigensystem.of(self.pi2, hermitian=True)

    def kinetic_system(self, mass: float) -> Eigensystem:
        """Eigensystem of m^2 + pi^2, sharing the eigenvectors of pi^2."""
        e = self.eig
        return Eigensystem(mass**2 + e.values, e.vectors, True)

    def eps(self, mass: float, power: float = 1.0, **kw) -> np.ndarray:
        """(m^2 + pi^2)^power; keywords go to :meth:`Eigensystem.apply`."""
        return self.kinetic_system(mass).apply(lambda w: w**power, **kw)


@lru_cache(maxsize=6)
def scalar_parts(grid: Grid, field: FieldConfig, charge: float, hbar: float = 1.0) -> ScalarParts:
    """Sample the field on the grid and build pi_i = hbar p_i - e A_i."""
    field = field if field.cell_length is not None else field.with_cell(grid.length)
    sample = field.evaluate(grid.coords)
    pis = []
    for i in range(3):
        a_i = np.diag(charge * sample.A[:, i])
        if i < grid.dim:
            pis.append(hbar * grid.momentum_matrix(i) - a_i)
        else:
            pis.append(-a_i.astype(complex))
    pi2 = hermitize(sum(p @ p for p in pis))
    return ScalarParts(grid, tuple(pis), pi2, charge * sample.phi)


def parts_for(grid: Grid, field: FieldConfig, params: ParticleParams) -> ScalarParts:
    if not field.stationary:
        raise ValueError("only stationary fields are supported")
    if params.hbar_scale == 0:
        raise ValueError("grid operators need hbar_scale > 0; hbar_scale = 0 is semiclassical only")
    return scalar_parts(grid, field, float(params.charge), float(params.hbar_scale))


def _mass_blocks(parts: ScalarParts, params: ParticleParams):
    n = params.N
    eye = np.eye(parts.grid.size)
    kin = parts.pi2 + params.mass**2 * eye
    return (kin + n**2 * eye) / (2 * n), (kin - n**2 * eye) / (2 * n)


def build_cffv_hamiltonian(
    field: FieldConfig, params: ParticleParams, grid: Grid, t: float = 0.0
) -> LinearOperator:
    parts = parts_for(grid, field, params)
    m_blk, o_blk = _mass_blocks(parts, params)
    return pauli("rho3", m_blk, grid) + pauli("identity", parts.F, grid) + 1j * pauli(
        "rho2", o_blk, grid
    )


@dataclass(frozen=True, eq=False)
class MeoSplit:
    """H = rho3 M + Ecal + O with M, Ecal even and O odd."""

    M: LinearOperator
    Ecal: LinearOperator
    O: LinearOperator

    def hamiltonian(self) -> LinearOperator:
        return pauli("rho3", None, self.M.grid) @ self.M + self.Ecal + self.O


def split_meo(field: FieldConfig, params: ParticleParams, grid: Grid) -> MeoSplit:
    parts = parts_for(grid, field, params)
    m_blk, o_blk = _mass_blocks(parts, params)
    return MeoSplit(
        M=pauli("identity", m_blk, grid),
        Ecal=pauli("identity", parts.F, grid),
        O=1j * pauli("rho2", o_blk, grid),
    )


def parity_residuals(split: MeoSplit) -> dict[str, float]:
    """How far M, Ecal commute and O anticommutes with rho3."""
    r3 = pauli("rho3", None, split.M.grid).matrix
    out = {}
    for name, op, sign in (("M", split.M, -1), ("Ecal", split.Ecal, -1), ("O", split.O, 1)):
        m = op.matrix
        out[name] = norm(r3 @ m + sign * m @ r3) / (norm(m) or 1.0)
    return out


def lift_kg_state(
    psi: np.ndarray, dpsi_dt: np.ndarray, field: FieldConfig, params: ParticleParams,
    grid: Grid, t: float = 0.0,
) -> TwoComponentState:
    parts = parts_for(grid, field, params)
    psi = np.asarray(psi, dtype=complex).reshape(-1)
    dpsi_dt = np.asarray(dpsi_dt, dtype=complex).reshape(-1)
    drive = (1j * params.hbar_scale * dpsi_dt - parts.potential * psi) / params.N
    return TwoComponentState(grid, 0.5 * (psi + drive), 0.5 * (psi - drive))


def project_kg(state: TwoComponentState) -> np.ndarray:
    return state.upper + state.lower


@dataclass
class Evolution:
    times: np.ndarray
    states: list
    pseudo_norms: np.ndarray

    @property
    def max_drift(self) -> float:
        return float(np.max(np.abs(self.pseudo_norms - self.pseudo_norms[0])))


class CayleyPropagator:
    """Implicit-midpoint step (1 + i dt H/2hbar)^-1 (1 - i dt H/2hbar).

    For pseudo-self-adjoint H the step matrix is exactly pseudo-unitary,
    so the rho_3 product is conserved up to rounding.
    """

    def __init__(self, hamiltonian: LinearOperator, dt: float, hbar: float = 1.0):
        self.grid = hamiltonian.grid
        self.dt = dt
        a = 0.5j * dt / hbar * hamiltonian.matrix
        eye = np.eye(a.shape[0])
        self.step_matrix = scipy.linalg.lu_solve(scipy.linalg.lu_factor(eye + a), eye - a)

    def operator(self) -> LinearOperator:
        return LinearOperator(self.grid, self.step_matrix)

    def run(self, psi0: TwoComponentState, steps: int, drift_tol: float = 1e-8) -> Evolution:
        v = psi0.vector
        scale = max(psi0.l2_norm() ** 2, 1e-300)
        n0 = psi0.pseudo_norm()
        states = [psi0]
        norms = [n0]
        for k in range(steps):
            v = self.step_matrix @ v
            s = TwoComponentState.from_vector(self.grid, v)
            pn = s.pseudo_norm()
            if abs(pn - n0) > drift_tol * scale:
                raise InstabilityError(
                    f"pseudo-norm drift {abs(pn - n0):.3e} exceeds "
                    f"{drift_tol:.1e} x {scale:.3e} at step {k + 1}"
                )
            states.append(s)
            norms.append(pn)
        return Evolution(self.dt * np.arange(steps + 1), states, np.array(norms))


def evolve_cffv(
    psi0: TwoComponentState, field: FieldConfig, params: ParticleParams, dt: float,
    steps: int, drift_tol: float = 1e-8,
) -> Evolution:
    h = build_cffv_hamiltonian(field, params, psi0.grid)
    return CayleyPropagator(h, dt, params.hbar_scale).run(psi0, steps, drift_tol)


def kg_residual(
    evolution: Evolution, field: FieldConfig, params: ParticleParams
) -> float:
    """Relative residual of the KG equation on the projected trajectory.

    Time derivatives are central differences, so the residual is O(dt^2).
    """
    grid = evolution.states[0].grid
    parts = parts_for(grid, field, params)
    hbar = params.hbar_scale
    psi = np.array([project_kg(s) for s in evolution.states])
    dt = evolution.times[1] - evolution.times[0]
    d1 = (psi[2:] - psi[:-2]) / (2 * dt)
    d2 = (psi[2:] - 2 * psi[1:-1] + psi[:-2]) / dt**2
    mid = psi[1:-1]
    v = parts.potential
    # (i hbar d/dt - V)^2 psi = -hbar^2 psi'' - 2 i hbar V psi' + V^2 psi
    lhs = -(hbar**2) * d2 - 2j * hbar * v * d1 + v**2 * mid
    rhs = (parts.pi2 @ mid.T).T + params.mass**2 * mid
    return float(np.linalg.norm(lhs - rhs) / np.linalg.norm(rhs))


def plane_wave_state(
    grid: Grid, p, params: ParticleParams, branch: int = 1
) -> tuple[TwoComponentState, float]:
    """Free plane wave exp(i p.r) lifted on the chosen energy branch."""
    p3 = np.zeros(3)
    p3[: np.size(p)] = p
    energy = branch * np.sqrt(params.mass**2 + (params.hbar_scale**2) * p3 @ p3)
    psi = grid.plane_wave(p3)
    dpsi = -1j * energy / params.hbar_scale * psi
    return lift_kg_state(psi, dpsi, FREE, params.replace(charge=0.0), grid), energy


__all__ = [
    "ParticleParams",
    "MeoSplit",
    "ScalarParts",
    "InstabilityError",
    "CayleyPropagator",
    "Evolution",
    "scalar_parts",
    "build_cffv_hamiltonian",
    "split_meo",
    "lift_kg_state",
    "project_kg",
    "evolve_cffv",
    "kg_residual",
    "plane_wave_state",
    "pseudo_inner",
]
