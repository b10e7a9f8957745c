"""Five-component DKP form of the scalar wave equation.

Writing hbar D_0 = hbar d/dt + i e phi and hbar D_k = i pi_k, the
first-order system reads

    -hbar D_0 Phi5 = m Phi1,   hbar D_k Phi5 = m Phi_{k+1},
    hbar D_0 Phi1 + sum_k hbar D_k Phi_{k+1} = m Phi5.

Eliminating Phi2..Phi4 leaves a two-component system in (Phi1, Phi5);
the substitution Phi1 = phi - chi, Phi5 = -i (phi + chi) turns it into the
CFFV system with N = m.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .cffv import (
    CayleyPropagator,
    ParticleParams,
    build_cffv_hamiltonian,
    parts_for,
)
from .fields import FieldConfig
from .grid import Grid
from .operators import LinearOperator, TwoComponentState, norm, pseudo_inner

METRIC_STATED = np.diag([1.0, -1.0, -1.0, -1.0])


class MasslessDkpError(ValueError):
    """The DKP route divides by the mass and does not exist for m = 0."""


def _require_mass(params: ParticleParams):
    if params.mass <= 0:
        raise MasslessDkpError(
            "the DKP equation is inapplicable to massless particles (m = 0); "
            "use the CFFV route instead"
        )


def dkp_betas() -> tuple[np.ndarray, ...]:
    """The four 5x5 beta matrices (rows and columns ordered Phi1..Phi5)."""
    b0 = np.zeros((5, 5))
    b0[0, 4] = -1.0
    b0[4, 0] = 1.0
    out = [b0]
    for k in range(1, 4):
        b = np.zeros((5, 5))
        b[k, 4] = 1.0
        b[4, k] = 1.0
        out.append(b)
    return tuple(out)


def trilinear_residual(betas, metric: np.ndarray) -> float:
    """max over (mu, nu, lam) of |b^mu b^nu b^lam + b^lam b^nu b^mu - g^{nu lam} b^mu - g^{nu mu} b^lam|."""
    worst = 0.0
    for mu, nu, lam in itertools.product(range(4), repeat=3):
        lhs = betas[mu] @ betas[nu] @ betas[lam] + betas[lam] @ betas[nu] @ betas[mu]
        rhs = metric[nu, lam] * betas[mu] + metric[nu, mu] * betas[lam]
        worst = max(worst, float(np.abs(lhs - rhs).max()))
    return worst


def beta_algebra_report(betas=None) -> dict:
    """Trilinear-algebra residuals for both metric sign conventions.

    The matrices as given close the algebra with g = diag(-1, 1, 1, 1);
    the opposite signature leaves a residual of order one.
    """
    betas = dkp_betas() if betas is None else betas
    stated = trilinear_residual(betas, METRIC_STATED)
    flipped = trilinear_residual(betas, -METRIC_STATED)
    return {
        "residual_metric_(+,-,-,-)": stated,
        "residual_metric_(-,+,+,+)": flipped,
        "satisfied_metric": "(-,+,+,+)" if flipped < 1e-14 else ("(+,-,-,-)" if stated < 1e-14 else None),
        "traces": [float(np.trace(b)) for b in betas],
        "cube_beta0_plus_beta0": float(np.abs(np.linalg.matrix_power(betas[0], 3) + betas[0]).max()),
    }


# map between (Phi1, Phi5) and the CFFV pair (phi, chi)
T_MAP = np.array([[1.0, -1.0], [-1j, -1j]])
T_INV = np.linalg.inv(T_MAP)


def _lift_map(mat2: np.ndarray, n: int) -> np.ndarray:
    return np.kron(mat2, np.eye(n))


def dkp_pair_operator(field: FieldConfig, params: ParticleParams, grid: Grid) -> LinearOperator:
    """K with i hbar d/dt (Phi1, Phi5) = K (Phi1, Phi5).

    K = [[e phi, i (m + pi^2/m)], [-i m, e phi]].
    """
    _require_mass(params)
    parts = parts_for(grid, field, params)
    m = params.mass
    n = grid.size
    eye = np.eye(n)
    f = parts.F
    k = np.block([[f, 1j * (m * eye + parts.pi2 / m)], [-1j * m * eye, f]])
    return LinearOperator(grid, k)


def build_dkp_reduced(field: FieldConfig, params: ParticleParams, grid: Grid) -> LinearOperator:
    """The (Phi1, Phi5) system rewritten in the (phi, chi) components."""
    k = dkp_pair_operator(field, params, grid)
    n = grid.size
    return LinearOperator(grid, _lift_map(T_INV, n) @ k.matrix @ _lift_map(T_MAP, n))


def reduced_vs_cffv(field: FieldConfig, params: ParticleParams, grid: Grid) -> float:
    """Relative operator-norm distance between the reduced DKP and CFFV(N = m)."""
    red = build_dkp_reduced(field, params, grid)
    cffv = build_cffv_hamiltonian(field, params.replace(cffv_n=params.mass), grid)
    return norm(red.matrix - cffv.matrix) / norm(cffv.matrix)


@dataclass(frozen=True, eq=False)
class DkpState:
    grid: Grid
    components: np.ndarray  # (5, n)

    @classmethod
    def from_cffv(
        cls, psi: TwoComponentState, field: FieldConfig, params: ParticleParams
    ) -> "DkpState":
        """Phi1 = phi - chi, Phi5 = -i(phi + chi), Phi_{k+1} = D_k Phi5 / m."""
        _require_mass(params)
        parts = parts_for(psi.grid, field, params)
        phi1 = psi.upper - psi.lower
        phi5 = -1j * (psi.upper + psi.lower)
        spatial = [1j * (parts.pi[k] @ phi5) / params.mass for k in range(3)]
        return cls(psi.grid, np.array([phi1, *spatial, phi5]))

    def to_cffv(self) -> TwoComponentState:
        phi1, phi5 = self.components[0], self.components[4]
        # phi - chi = Phi1, phi + chi = i Phi5
        return TwoComponentState(self.grid, 0.5 * (phi1 + 1j * phi5), 0.5 * (1j * phi5 - phi1))

    def constraint_residual(self, field: FieldConfig, params: ParticleParams) -> float:
        """max_k ||Phi_{k+1} - D_k Phi5 / m|| relative to ||Phi5||."""
        parts = parts_for(self.grid, field, params)
        phi5 = self.components[4]
        scale = np.linalg.norm(phi5) or 1.0
        worst = 0.0
        for k in range(3):
            target = 1j * (parts.pi[k] @ phi5) / params.mass
            worst = max(worst, float(np.linalg.norm(self.components[k + 1] - target) / scale))
        return worst


def dkp_equation_residual(
    state: DkpState, dstate_dt: np.ndarray, field: FieldConfig, params: ParticleParams
) -> float:
    """Largest relative residual of the five first-order equations.

    ``dstate_dt`` holds d/dt of the five components.
    """
    parts = parts_for(state.grid, field, params)
    hb, m = params.hbar_scale, params.mass
    c, dc = state.components, np.asarray(dstate_dt)
    d0 = lambda k: hb * dc[k] + 1j * parts.potential * c[k]  # noqa: E731
    dk = lambda k, v: 1j * (parts.pi[k] @ v)  # noqa: E731
    eqs = [
        -d0(4) - m * c[0],
        *[dk(k, c[4]) - m * c[k + 1] for k in range(3)],
        d0(0) + sum(dk(k, c[k + 1]) for k in range(3)) - m * c[4],
    ]
    scale = m * (np.linalg.norm(c) or 1.0)
    return max(float(np.linalg.norm(r)) / scale for r in eqs)


def check_dkp_cffv_equivalence(
    field: FieldConfig,
    params: ParticleParams,
    psi0: TwoComponentState,
    dt: float,
    steps: int,
    cffv_n: float | None = None,
) -> dict:
    """Evolve the (Phi1, Phi5) pair and the CFFV state side by side.

    ``cffv_n`` overrides N in the CFFV twin (N != m is a negative control).
    The discrepancy is the largest |<d|d>| and the largest relative L2 norm
    of the state difference over the run.
    """
    _require_mass(params)
    grid = psi0.grid
    n = grid.size
    twin = params.replace(cffv_n=params.mass if cffv_n is None else cffv_n)
    k = dkp_pair_operator(field, params, grid)
    prop_k = CayleyPropagator(k, dt, params.hbar_scale)
    prop_c = CayleyPropagator(build_cffv_hamiltonian(field, twin, grid), dt, params.hbar_scale)
    to_pair, from_pair = _lift_map(T_MAP, n), _lift_map(T_INV, n)
    x = to_pair @ psi0.vector
    v = psi0.vector
    scale = psi0.l2_norm()
    worst_pseudo = worst_l2 = worst_constraint = worst_eq = 0.0
    h_k = k.matrix / (1j * params.hbar_scale)
    for _ in range(steps):
        x = prop_k.step_matrix @ x
        v = prop_c.step_matrix @ v
        mapped = TwoComponentState.from_vector(grid, from_pair @ x)
        diff = mapped - TwoComponentState.from_vector(grid, v)
        worst_pseudo = max(worst_pseudo, abs(pseudo_inner(diff, diff)) / scale**2)
        worst_l2 = max(worst_l2, diff.l2_norm() / scale)
        st = DkpState.from_cffv(mapped, field, params)
        worst_constraint = max(worst_constraint, st.constraint_residual(field, params))
        dx = h_k @ x
        ds = DkpState.from_cffv(TwoComponentState.from_vector(grid, from_pair @ dx), field, params)
        worst_eq = max(worst_eq, dkp_equation_residual(st, ds.components, field, params))
    return {
        "steps": steps,
        "dt": dt,
        "cffv_n": twin.N,
        "max_pseudo_discrepancy": worst_pseudo,
        "max_l2_discrepancy": worst_l2,
        "max_constraint_residual": worst_constraint,
        "max_equation_residual": worst_eq,
    }
