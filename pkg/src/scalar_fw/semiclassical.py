"""Semiclassical dynamics with the hbar^2 corrections of the FW Hamiltonian.

Phase-space points carry the kinetic momentum pi.  The energy is

    H_s = eps + e phi + (e hbar^2 / 8 eps^4) pi.G.pi
          - (e^2 hbar^2 / 8 eps^4) pi.(E x H) - (e^2 hbar^2 / 8 eps^5) (pi.E)^2,

with G[i, j] = dE_j/dx_i.  The force law is the five-term corrected
Lorentz force; positions follow dr/dt = dH_s/dpi.
"""

from __future__ import annotations

import csv
import io
import logging
from dataclasses import dataclass, field as dc_field
from typing import Callable, TextIO

import numpy as np

from .cffv import CayleyPropagator, InstabilityError, ParticleParams, build_cffv_hamiltonian, parts_for
from .fields import FieldConfig
from .fw import FwTermDecomposition, closed_form_terms, fw_step_operator
from .grid import Grid, as_vec3
from .operators import LinearOperator, SpectrumError, TwoComponentState

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class PhasePoint:
    r: np.ndarray
    pi: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        r, pi = as_vec3(self.r), as_vec3(self.pi)
        if not (np.all(np.isfinite(r)) and np.all(np.isfinite(pi))):
            raise ValueError("phase point has non-finite components")
        object.__setattr__(self, "r", r)
        object.__setattr__(self, "pi", pi)


def _eps(pi: np.ndarray, mass: float) -> float:
    eps = float(np.sqrt(mass**2 + pi @ pi))
    if eps == 0.0:
        raise SpectrumError("eps = 0: massless particle with pi = 0")
    return eps


def hs_energy(phase: PhasePoint, field: FieldConfig, params: ParticleParams) -> FwTermDecomposition:
    s = field.evaluate(phase.r)
    return closed_form_terms(
        phase.pi, s.phi, s.E, s.H, s.dE, params.charge, params.mass, params.hbar_scale
    )


def hs_from_values(pi, E, H, dE, params: ParticleParams, phi: float = 0.0) -> float:
    """Total H_s for explicit field values (used for field-gradient checks)."""
    return closed_form_terms(pi, phi, E, H, dE, params.charge, params.mass, params.hbar_scale).total


def induced_dipoles(
    phase: PhasePoint, field: FieldConfig, params: ParticleParams
) -> tuple[np.ndarray, np.ndarray]:
    """d = dH_s/dE and mu = dH_s/dH at fixed pi.

    d = (e^2 hbar^2/8 eps^4) pi x H - (e^2 hbar^2/4 eps^5) pi (pi.E)
    mu = -(e^2 hbar^2/8 eps^4) pi x E
    """
    s = field.evaluate(phase.r)
    pi = phase.pi
    eps = _eps(pi, params.mass)
    c = params.charge**2 * params.hbar_scale**2
    d = c / (8 * eps**4) * np.cross(pi, s.H) - c / (4 * eps**5) * pi * float(pi @ s.E)
    mu = -c / (8 * eps**4) * np.cross(pi, s.E)
    return d, mu


def dipole_gradient_check(
    phase: PhasePoint, field: FieldConfig, params: ParticleParams, step: float = 1e-3
) -> dict:
    """Central differences of H_s in the local E and H against induced_dipoles.

    H_s is at most quadratic in E and H at fixed pi, so central differences
    carry no truncation error; the step only sets the rounding level.
    """
    s = field.evaluate(phase.r)
    d, mu = induced_dipoles(phase, field, params)

    def quantum(E, H):
        t = closed_form_terms(phase.pi, 0.0, E, H, s.dE, params.charge, params.mass,
                              params.hbar_scale)
        return t.quantum

    fd_d, fd_mu = np.zeros(3), np.zeros(3)
    for i in range(3):
        de = np.zeros(3)
        de[i] = step
        fd_d[i] = (quantum(s.E + de, s.H) - quantum(s.E - de, s.H)) / (2 * step)
        fd_mu[i] = (quantum(s.E, s.H + de) - quantum(s.E, s.H - de)) / (2 * step)

    # errors are measured against the natural dipole size, so that
    # geometric cancellations (pi nearly parallel to E) do not divide by zero
    eps = _eps(phase.pi, params.mass)
    natural = (
        params.charge**2 * params.hbar_scale**2 * float(np.linalg.norm(phase.pi))
        * (float(np.linalg.norm(s.E)) + float(np.linalg.norm(s.H))) / eps**4
    )

    def rel(a, b):
        scale = max(np.linalg.norm(a), np.linalg.norm(b), natural)
        return float(np.linalg.norm(a - b) / scale) if scale > 0 else 0.0

    return {
        "d": d.tolist(),
        "mu": mu.tolist(),
        "d_finite_difference": fd_d.tolist(),
        "mu_finite_difference": fd_mu.tolist(),
        "d_relative_error": rel(d, fd_d),
        "mu_relative_error": rel(mu, fd_mu),
    }


def force_terms(phase: PhasePoint, field: FieldConfig, params: ParticleParams) -> dict:
    """The five terms of the corrected Lorentz force, keyed by name."""
    s = field.evaluate(phase.r)
    pi, E, H = phase.pi, s.E, s.H
    eps = _eps(pi, params.mass)
    e, h2 = params.charge, params.hbar_scale**2
    # (pi.grad)(E x H) with dE[i] = dE/dx_i, dH[i] = dH/dx_i
    along = sum(pi[i] * (np.cross(s.dE[i], H) + np.cross(E, s.dH[i])) for i in range(3))
    # (H x grad)(pi.E) = H x (dE @ pi)
    transverse = np.cross(H, s.dE @ pi)
    return {
        "electric": e * E,
        "magnetic": e / eps * np.cross(pi, H),
        "gradient": e**2 * h2 / (8 * eps**4) * (along - transverse),
        "field_squared": e**3 * h2 / (8 * eps**4) * (float(H @ H) * E - H * float(E @ H)),
        "polarization": -(e**3) * h2 / (4 * eps**5) * float(pi @ E) * np.cross(E, H),
    }


def force(phase: PhasePoint, field: FieldConfig, params: ParticleParams) -> np.ndarray:
    """dpi/dt from the five-term force law."""
    return sum(force_terms(phase, field, params).values())


def velocity(phase: PhasePoint, field: FieldConfig, params: ParticleParams) -> np.ndarray:
    """dr/dt = dH_s/dpi, differentiated analytically."""
    s = field.evaluate(phase.r)
    pi, E = phase.pi, s.E
    eps = _eps(pi, params.mass)
    e, h2 = params.charge, params.hbar_scale**2
    g = s.dE
    w = np.cross(E, s.H)
    pe = float(pi @ E)
    cq, cm = e * h2 / 8, e**2 * h2 / 8
    quad = cq * (-4 * eps**-6 * pi * float(pi @ g @ pi) + eps**-4 * (g + g.T) @ pi)
    mixed = -cm * (-4 * eps**-6 * pi * float(pi @ w) + eps**-4 * w)
    elec = -cm * (-5 * eps**-7 * pi * pe**2 + 2 * eps**-5 * pe * E)
    return pi / eps + quad + mixed + elec


def hamiltonian_force(
    phase: PhasePoint, field: FieldConfig, params: ParticleParams, step: float = 1e-5
) -> np.ndarray:
    """dpi/dt from Hamilton's equations for H_s in kinetic variables.

    dpi/dt = -grad_r H_s|_pi + e v x H with v = dH_s/dpi; the gradient is
    a central difference of the analytic H_s.
    """
    grad = np.zeros(3)
    for i in range(3):
        dr = np.zeros(3)
        dr[i] = step
        hp = hs_energy(PhasePoint(phase.r + dr, phase.pi), field, params).total
        hm = hs_energy(PhasePoint(phase.r - dr, phase.pi), field, params).total
        grad[i] = (hp - hm) / (2 * step)
    h = field.evaluate(phase.r).H
    return -grad + params.charge * np.cross(velocity(phase, field, params), h)


@dataclass
class Trajectory:
    times: np.ndarray
    r: np.ndarray  # (n, 3)
    pi: np.ndarray  # (n, 3)
    terms: list = dc_field(default_factory=list)  # FwTermDecomposition per sample
    dipoles: list = dc_field(default_factory=list)  # (d, mu) per sample

    @property
    def energy(self) -> np.ndarray:
        return np.array([t.total for t in self.terms])

    def energy_drift_rate(self) -> float:
        """max |H_s(t) - H_s(0)| / |H_s(0)| per unit time."""
        e = self.energy
        span = self.times[-1] - self.times[0]
        if span <= 0:
            return 0.0
        return float(np.max(np.abs(e - e[0])) / (abs(e[0]) or 1.0) / span)

    COLUMNS = (
        ["t", "x", "y", "z", "pi_x", "pi_y", "pi_z"]
        + ["kinetic", "coulomb", "quadrupole", "mixed_polarizability",
           "electric_polarizability", "total"]
        + ["d_x", "d_y", "d_z", "mu_x", "mu_y", "mu_z"]
    )

    def rows(self):
        for k, t in enumerate(self.times):
            d, mu = self.dipoles[k]
            terms = self.terms[k].as_dict()
            yield [t, *self.r[k], *self.pi[k]] + [
                terms[name] for name in self.COLUMNS[7:13]
            ] + [*d, *mu]

    def write_csv(self, stream: TextIO):
        w = csv.writer(stream, lineterminator="\n")
        w.writerow(self.COLUMNS)
        for row in self.rows():
            w.writerow([repr(float(v)) for v in row])

    def to_csv(self) -> str:
        buf = io.StringIO()
        self.write_csv(buf)
        return buf.getvalue()


FORCE_LAWS: dict[str, Callable] = {"corrected_lorentz": force, "hamiltonian": hamiltonian_force}


def integrate_trajectory(
    phase0: PhasePoint,
    field: FieldConfig,
    params: ParticleParams,
    t_end: float,
    dt: float,
    force_law: str = "corrected_lorentz",
    max_energy_drift: float = 1e-2,
) -> Trajectory:
    """Fixed-step RK4 for (r, pi) with an energy monitor.

    Aborts when dt does not resolve the cyclotron period, when the state
    becomes non-finite, or when H_s drifts by more than
    ``max_energy_drift`` (relative).
    """
    if dt <= 0 or t_end <= 0:
        raise ValueError("dt and t_end must be positive")
    if not field.stationary:
        raise ValueError("only stationary fields are supported")
    fn = FORCE_LAWS[force_law]
    h0 = field.evaluate(phase0.r).H
    omega = abs(params.charge) * float(np.linalg.norm(h0)) / _eps(phase0.pi, params.mass)
    if omega * dt > 0.5:
        raise InstabilityError(
            f"dt = {dt:g} does not resolve the cyclotron period {2 * np.pi / omega:g}"
        )

    def rhs(y):
        p = PhasePoint(y[:3], y[3:])
        return np.concatenate([velocity(p, field, params), fn(p, field, params)])

    steps = int(round(t_end / dt))
    y = np.concatenate([phase0.r, phase0.pi])
    ys = [y]
    e0 = hs_energy(phase0, field, params).total
    for k in range(steps):
        k1 = rhs(y)
        k2 = rhs(y + 0.5 * dt * k1)
        k3 = rhs(y + 0.5 * dt * k2)
        k4 = rhs(y + dt * k3)
        y = y + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        if not np.all(np.isfinite(y)):
            raise InstabilityError(f"trajectory became non-finite at step {k + 1}")
        e = hs_energy(PhasePoint(y[:3], y[3:]), field, params).total
        if abs(e - e0) > max_energy_drift * (abs(e0) or 1.0):
            raise InstabilityError(
                f"energy drift {abs(e - e0) / (abs(e0) or 1.0):.3e} at step {k + 1}; reduce dt"
            )
        ys.append(y)
    ys = np.array(ys)
    times = phase0.t + dt * np.arange(steps + 1)
    traj = Trajectory(times, ys[:, :3], ys[:, 3:])
    for y in ys:
        p = PhasePoint(y[:3], y[3:])
        traj.terms.append(hs_energy(p, field, params))
        traj.dipoles.append(induced_dipoles(p, field, params))
    return traj


def force_law_difference(phase: PhasePoint, field: FieldConfig, params: ParticleParams) -> dict:
    """Compare the five-term force with Hamilton's equations for H_s."""
    f_law = force(phase, field, params)
    f_ham = hamiltonian_force(phase, field, params)
    scale = float(np.linalg.norm(f_law)) or 1.0
    return {
        "corrected_lorentz": f_law.tolist(),
        "hamiltonian": f_ham.tolist(),
        "absolute_difference": float(np.linalg.norm(f_law - f_ham)),
        "relative_difference": float(np.linalg.norm(f_law - f_ham)) / scale,
    }


# --- quantum centroid comparison ------------------------------------------------


@dataclass(frozen=True)
class WavepacketSpec:
    """Gaussian in the FW frame: centre r0, kinetic momentum pi0, width sigma."""

    r0: tuple = (0.0, 0.0, 0.0)
    pi0: tuple = (1.0, 0.0, 0.0)
    sigma: float = 2.0
    dt: float = 0.05


def fw_wavepacket(spec: WavepacketSpec, field: FieldConfig, params: ParticleParams, grid: Grid):
    r0, pi0 = as_vec3(spec.r0), as_vec3(spec.pi0)
    parts = parts_for(grid, field, params)
    f = field if field.cell_length is not None else field.with_cell(grid.length)
    a0 = f.evaluate(r0).A
    # canonical momentum p = (pi + e A)/hbar at the packet centre
    k = (pi0 + params.charge * a0) / params.hbar_scale
    d = grid.coords - r0
    phi = np.exp(-np.sum(d * d, axis=1) / (4 * spec.sigma**2) + 1j * d @ k)
    phi /= np.sqrt(grid.sum(np.abs(phi) ** 2).real)
    return phi, parts


def _centroids(phi: np.ndarray, parts, grid: Grid):
    w = np.abs(phi) ** 2
    total = w.sum()
    r = (w @ grid.coords) / total
    pi = np.array([np.vdot(phi, parts.pi[i] @ phi).real for i in range(3)]) / total
    return r, pi


def ehrenfest_compare(
    spec: WavepacketSpec,
    field: FieldConfig,
    params: ParticleParams,
    grid: Grid,
    t_end: float,
    tol: float = 0.02,
    sample_every: int = 10,
) -> dict:
    """Quantum centroids in the FW frame against the semiclassical trajectory.

    The FW-frame packet (phi, 0) is mapped to the CFFV frame with U^-1,
    evolved with the Cayley propagator, mapped back with U, and its upper
    component's centroids are compared with integrate_trajectory started
    at the initial centroids.  The deviation is measured relative to the
    trajectory scale max(|r(t) - r(0)|) and the momentum scale
    max(|pi(t)|).
    """
    phi0, parts = fw_wavepacket(spec, field, params, grid)
    step = fw_step_operator(field, params, grid)
    n = grid.size
    psi0 = step.U_inv @ TwoComponentState(grid, phi0, np.zeros(n))
    r_start, pi_start = _centroids(phi0, parts, grid)
    # a constant shift only changes the global phase; centring the packet's
    # energy near zero removes most of the Cayley phase error
    e_ref = hs_energy(PhasePoint(r_start, pi_start), field, params).classical
    h = build_cffv_hamiltonian(field, params, grid) - e_ref * LinearOperator.identity(grid)
    prop = CayleyPropagator(h, spec.dt, params.hbar_scale)
    steps = int(round(t_end / spec.dt))
    warnings = []
    lam = params.hbar_scale / (float(np.linalg.norm(pi_start)) or 1e-300)
    if lam > spec.sigma:
        warnings.append(
            f"de Broglie length {lam:.3g} exceeds the packet width {spec.sigma:.3g}"
        )
    for w in warnings:
        log.warning(w)
    v = psi0.vector
    times, rq, pq, lower = [0.0], [r_start], [pi_start], [0.0]
    u = step.U.matrix
    for k in range(1, steps + 1):
        v = prop.step_matrix @ v
        if k % sample_every == 0 or k == steps:
            fw_state = u @ v
            up = fw_state[:n]
            r, p = _centroids(up, parts, grid)
            times.append(k * spec.dt)
            rq.append(r)
            pq.append(p)
            lower.append(float(np.linalg.norm(fw_state[n:]) / np.linalg.norm(up)))
    times = np.array(times)
    rq, pq = np.array(rq), np.array(pq)
    cl_dt = min(spec.dt, 0.01)
    traj = integrate_trajectory(PhasePoint(r_start, pi_start), field, params, t_end, cl_dt)
    idx = np.clip(np.round(times / cl_dt).astype(int), 0, len(traj.times) - 1)
    rc, pc = traj.r[idx], traj.pi[idx]
    r_scale = max(float(np.max(np.linalg.norm(rc - rc[0], axis=1))), 1e-300)
    p_scale = max(float(np.max(np.linalg.norm(pc, axis=1))), 1e-300)
    dev_r = float(np.max(np.linalg.norm(rq - rc, axis=1))) / r_scale
    dev_p = float(np.max(np.linalg.norm(pq - pc, axis=1))) / p_scale
    return {
        "times": times.tolist(),
        "quantum_r": rq.tolist(),
        "quantum_pi": pq.tolist(),
        "classical_r": rc.tolist(),
        "classical_pi": pc.tolist(),
        "position_deviation": dev_r,
        "momentum_deviation": dev_p,
        "max_lower_fraction": max(lower),
        "tolerance": tol,
        "passed": dev_r <= tol and dev_p <= tol,
        "warnings": warnings,
    }
