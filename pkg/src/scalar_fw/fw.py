"""Foldy-Wouthuysen transformation of the CFFV Hamiltonian.

Three routes to the block-diagonal Hamiltonian are provided:

* :func:`exact_fw` -- closed-form transformation, valid when M and Ecal
  commute with O (stationary, purely magnetic or free problems);
* :func:`fw_hamiltonian_staged` -- the N-dependent transformation of the
  full CFFV Hamiltonian followed by the second-order step that removes
  the remaining odd part;
* :func:`fw_hamiltonian_numeric` -- the commutator series in pi^2 and F
  with every commutator evaluated as a matrix.

:func:`fw_hamiltonian_closed` assembles the explicit field form of the
same series, either as grid operators (Weyl-symmetrized with nested
Jordan products) or as numbers at a phase-space point.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import cached_property
from typing import Any, Sequence

import numpy as np
import scipy.linalg

from .cffv import MeoSplit, ParticleParams, ScalarParts, build_cffv_hamiltonian, parts_for
from .fields import FieldConfig, FieldSample
from .grid import Grid, as_vec3
from .operators import (
    RHO,
    Eigensystem,
    LinearOperator,
    SpectrumError,
    anticommutator,
    commutator,
    hermitize,
    norm,
    pauli,
)


class CommutationError(ValueError):
    """The exact transformation was requested where M or Ecal fail to commute with O."""


def _jordan(a, b):
    return 0.5 * (a @ b + b @ a)


def _rel(a, b) -> float:
    return norm(a) / (norm(b) or 1.0)


# --- exact transformation -------------------------------------------------


def _function_in_basis(vectors: np.ndarray, mat: np.ndarray, f, tol: float = 1e-9):
    """f(mat) using a basis that already diagonalizes a commuting operator.

    Falls back to a fresh eigendecomposition when ``mat`` is not diagonal
    in that basis (the commuting assumption failed numerically).
    """
    d = vectors.conj().T @ mat @ vectors
    diag = np.real(np.diag(d))
    off = d - np.diag(np.diag(d))
    if np.abs(off).max(initial=0.0) <= tol * (np.abs(diag).max(initial=0.0) or 1.0):
        return (vectors * f(diag)) @ vectors.conj().T
    return Eigensystem.of(mat, hermitian=True).apply(f)


@dataclass(frozen=True, eq=False)
class ExactFW:
    """Result of :func:`exact_fw`, held as 2x2 lists of n x n blocks.

    The full operators are assembled on first access; large problems can
    stay on the blocks (``blocks["Hfw"][0][0]`` is the positive branch).
    """

    grid: Grid
    blocks: dict
    commutator_norms: dict
    offdiag_residual: float

    def _full(self, name: str) -> LinearOperator:
        return LinearOperator(self.grid, _assemble(self.blocks[name], self.grid.size))

    @cached_property
    def U(self) -> LinearOperator:
        return self._full("U")

    @cached_property
    def U_inv(self) -> LinearOperator:
        return self._full("U_inv")

    @cached_property
    def Hfw(self) -> LinearOperator:
        return self._full("Hfw")

    @cached_property
    def eps(self) -> LinearOperator:
        return self._full("eps")

    def pseudo_unitary_residual(self) -> float:
        """||rho3 U^dagger rho3 U - 1||_F from the blocks."""
        (a, b), (c, d) = self.blocks["U"]
        eye = np.eye(self.grid.size)
        return _fro(
            a.conj().T @ a - c.conj().T @ c - eye,
            a.conj().T @ b - c.conj().T @ d,
            d.conj().T @ c - b.conj().T @ a,
            d.conj().T @ d - b.conj().T @ b - eye,
        )


def _fro(*blocks) -> float:
    return float(np.sqrt(sum(np.linalg.norm(b) ** 2 for b in blocks)))


def _block_product(a, b):
    """Product of 2x2 block matrices given as nested lists (None is a zero block)."""
    out = [[None, None], [None, None]]
    for i, j in itertools.product(range(2), repeat=2):
        acc = None
        for k in range(2):
            if a[i][k] is None or b[k][j] is None:
                continue
            t = a[i][k] @ b[k][j]
            acc = t if acc is None else acc + t
        out[i][j] = acc
    return out


def _assemble(blocks, n: int) -> np.ndarray:
    z = np.zeros((n, n), dtype=complex)
    return np.block([[z if b is None else b for b in row] for row in blocks])


def exact_fw(meo: MeoSplit, tol: float = 1e-10, floor: float | None = None) -> ExactFW:
    """Block-diagonalize H = rho3 M + Ecal + O when [M, O] = [Ecal, O] = 0.

    U = (eps + M + rho3 O) / sqrt(2 eps (eps + M)),  eps = sqrt(M^2 + O^2),
    and the result is rho3 eps + Ecal.  All products are taken on the
    n x n blocks, using that M and Ecal are even and O is odd.
    """
    grid = meo.M.grid
    m = [meo.M.block(0, 0), meo.M.block(1, 1)]
    e = [meo.Ecal.block(0, 0), meo.Ecal.block(1, 1)]
    o = [meo.O.block(0, 1), meo.O.block(1, 0)]  # o[k] maps block 1-k into block k
    scale_mo = (_fro(*m) * _fro(*o)) or 1.0
    scale_eo = (_fro(*e) * _fro(*o)) or 1.0
    norms = {
        "M_O": _fro(m[0] @ o[0] - o[0] @ m[1], m[1] @ o[1] - o[1] @ m[0]) / scale_mo,
        "Ecal_O": _fro(e[0] @ o[0] - o[0] @ e[1], e[1] @ o[1] - o[1] @ e[0]) / scale_eo,
    }
    if norms["M_O"] > tol or norms["Ecal_O"] > tol:
        raise CommutationError(
            f"exact FW needs [M,O] = [Ecal,O] = 0; measured relative norms "
            f"{norms['M_O']:.3e} and {norms['Ecal_O']:.3e} (tol {tol:.1e})"
        )
    eps, inv_sqrt = [], []
    cache = None
    for k in (0, 1):
        x = hermitize(m[k] @ m[k] + o[k] @ o[1 - k])
        if cache is not None and np.allclose(
            x, cache[0], rtol=0, atol=1e-13 * (norm(x) or 1.0)
        ) and np.allclose(m[k], m[0], rtol=0, atol=1e-13 * (norm(m[k]) or 1.0)):
            eps.append(eps[0])
            inv_sqrt.append(inv_sqrt[0])
            continue
        es = Eigensystem.of(x, hermitian=True)
        eps_k = es.apply(np.sqrt, positive=True, floor=floor)
        # 2 eps (eps + M) is diagonal in the eigenbasis of eps^2
        t_k = 2 * eps_k @ (eps_k + m[k])
        inv_sqrt.append(_function_in_basis(es.vectors, hermitize(t_k), lambda w: w**-0.5))
        eps.append(eps_k)
        cache = (x,)
    num = [eps[0] + m[0], eps[1] + m[1]]
    u = [[num[0] @ inv_sqrt[0], o[0] @ inv_sqrt[1]], [-o[1] @ inv_sqrt[0], num[1] @ inv_sqrt[1]]]
    u_inv = [[u[0][0], -u[0][1]], [-u[1][0], u[1][1]]]
    h = [[m[0] + e[0], o[0]], [o[1], e[1] - m[1]]]
    hfw = _block_product(u, _block_product(h, u_inv))
    off = _fro(hfw[0][1], hfw[1][0]) / (_fro(*hfw[0], *hfw[1]) or 1.0)
    blocks = {"U": u, "U_inv": u_inv, "Hfw": hfw, "eps": [[eps[0], None], [None, eps[1]]]}
    return ExactFW(grid, blocks, norms, off)


# --- staged transformation -------------------------------------------------


@dataclass(frozen=True, eq=False)
class StepOperator:
    U: LinearOperator
    U_inv: LinearOperator
    eps: np.ndarray  # scalar (n, n)
    eps_inv_sqrt: np.ndarray
    eps_sqrt: np.ndarray


def _eps_functions(parts: ScalarParts, params: ParticleParams, exclude_zero_mode: bool):
    ks = parts.kinetic_system(params.mass)
    kw = {"drop_below_floor": True} if exclude_zero_mode else {"positive": True}
    eps = ks.apply(np.sqrt, **kw)
    eps_sqrt = ks.apply(lambda w: w**0.25, **kw)
    eps_inv_sqrt = ks.apply(lambda w: w**-0.25, **kw)
    return ks, eps, eps_sqrt, eps_inv_sqrt


def fw_step_operator(
    field: FieldConfig, params: ParticleParams, grid: Grid, exclude_zero_mode: bool = False
) -> StepOperator:
    """U = (eps + N + rho1 (eps - N)) / (2 sqrt(eps N)) with eps = sqrt(m^2 + pi^2).

    With ``exclude_zero_mode`` modes of vanishing eps (the massless p = 0
    plane wave) are left untouched: U acts as the identity on them.
    """
    if params.N <= 0:
        raise ValueError("the FW step operator is implemented for N > 0")
    parts = parts_for(grid, field, params)
    ks, eps, eps_sqrt, eps_inv_sqrt = _eps_functions(parts, params, exclude_zero_mode)
    n_ = params.N
    a = 0.5 * (eps_sqrt / np.sqrt(n_) + np.sqrt(n_) * eps_inv_sqrt)
    b = 0.5 * (eps_sqrt / np.sqrt(n_) - np.sqrt(n_) * eps_inv_sqrt)
    if exclude_zero_mode:
        a = a + (np.eye(grid.size) - ks.projector())
    u = pauli("identity", a, grid) + pauli("rho1", b, grid)
    u_inv = pauli("identity", a, grid) - pauli("rho1", b, grid)
    return StepOperator(u, u_inv, eps, eps_inv_sqrt, eps_sqrt)


@dataclass(frozen=True, eq=False)
class FirstStage:
    ecal: LinearOperator  # even part of U H U^-1 minus rho3 eps
    odd: LinearOperator
    h_prime: LinearOperator
    step: StepOperator


def fw_first_stage(
    field: FieldConfig, params: ParticleParams, grid: Grid, exclude_zero_mode: bool = False
) -> FirstStage:
    """Transform the CFFV Hamiltonian with the N-dependent step operator."""
    step = fw_step_operator(field, params, grid, exclude_zero_mode)
    h = build_cffv_hamiltonian(field, params, grid)
    hp = step.U @ h @ step.U_inv
    ecal = hp.even_part() - pauli("rho3", step.eps, grid)
    return FirstStage(ecal, hp.odd_part(), hp, step)


def first_stage_commutator_form(
    field: FieldConfig, params: ParticleParams, grid: Grid, exclude_zero_mode: bool = False
) -> tuple[LinearOperator, LinearOperator]:
    """Ecal', O' from nested commutators with sqrt(eps); N does not appear."""
    parts = parts_for(grid, field, params)
    _, eps, s, s_inv = _eps_functions(parts, params, exclude_zero_mode)
    f = parts.F
    ecal = f + 0.5 * s_inv @ commutator(s, commutator(s, f)) @ s_inv
    odd = 0.5 * s_inv @ commutator(eps, f) @ s_inv
    return pauli("identity", ecal, grid), pauli("rho1", odd, grid)


def first_stage_symmetric_form(
    field: FieldConfig, params: ParticleParams, grid: Grid, exclude_zero_mode: bool = False
) -> tuple[LinearOperator, LinearOperator]:
    """Ecal', O' as (s F s^-1 +/- s^-1 F s)/2 with s = sqrt(eps)."""
    parts = parts_for(grid, field, params)
    _, _, s, s_inv = _eps_functions(parts, params, exclude_zero_mode)
    f = parts.F
    a, b = s @ f @ s_inv, s_inv @ f @ s
    return pauli("identity", 0.5 * (a + b), grid), pauli("rho1", 0.5 * (a - b), grid)


def fw_hamiltonian_staged(
    field: FieldConfig, params: ParticleParams, grid: Grid, exclude_zero_mode: bool = False
) -> LinearOperator:
    """rho3 eps + Ecal' + (rho3/4){1/eps, O'^2} from the numerical first stage."""
    st = fw_first_stage(field, params, grid, exclude_zero_mode)
    eps_inv = st.step.eps_inv_sqrt @ st.step.eps_inv_sqrt
    o2 = (st.odd @ st.odd).matrix
    n = grid.size
    # O'^2 is even; both diagonal blocks carry the same scalar operator
    corr = np.kron(RHO["rho3"], np.eye(n)) @ (0.25 * anticommutator(np.kron(np.eye(2), eps_inv), o2))
    return pauli("rho3", st.step.eps, grid) + st.ecal + LinearOperator(grid, corr)


def fw_second_stage(
    field: FieldConfig, params: ParticleParams, grid: Grid
) -> tuple[LinearOperator, float]:
    """Apply exp(iS'), S' = -(i/4)[rho3/eps, O'], to the first-stage Hamiltonian.

    Returns the transformed Hamiltonian and the relative norm of its
    remaining odd part, which is third order in the field.
    """
    st = fw_first_stage(field, params, grid)
    eps_inv = st.step.eps_inv_sqrt @ st.step.eps_inv_sqrt
    r3e = pauli("rho3", eps_inv, grid)
    s_op = -0.25j * commutator(r3e, st.odd).matrix
    u = scipy.linalg.expm(1j * s_op)
    u_inv = scipy.linalg.expm(-1j * s_op)
    h2 = LinearOperator(grid, u @ st.h_prime.matrix @ u_inv)
    return h2, h2.odd_part().norm() / (h2.norm() or 1.0)


# --- commutator series -----------------------------------------------------


def _commutators(parts: ScalarParts):
    c1 = commutator(parts.pi2, parts.F)
    c2 = commutator(parts.pi2, c1)
    return c1, c2


@dataclass(frozen=True, eq=False)
class SeriesHamiltonian:
    total: LinearOperator
    kinetic: LinearOperator
    coulomb: LinearOperator
    double_commutator_term: LinearOperator
    squared_commutator_term: LinearOperator

    @property
    def quantum(self) -> LinearOperator:
        return self.double_commutator_term + self.squared_commutator_term


def fw_hamiltonian_series(
    field: FieldConfig, params: ParticleParams, grid: Grid, exclude_zero_mode: bool = False
) -> SeriesHamiltonian:
    parts = parts_for(grid, field, params)
    ks = parts.kinetic_system(params.mass)
    kw = {"drop_below_floor": True} if exclude_zero_mode else {"positive": True}
    eps = ks.apply(np.sqrt, **kw)
    eps_m4 = ks.apply(lambda w: w**-2.0, **kw)
    eps_m5 = ks.apply(lambda w: w**-2.5, **kw)
    c1, c2 = _commutators(parts)
    t_dc = anticommutator(eps_m4, c2) / 64.0
    t_sq = anticommutator(eps_m5, c1 @ c1) / 64.0
    kin = pauli("rho3", eps, grid)
    cou = pauli("identity", parts.F, grid)
    dc = pauli("identity", t_dc, grid)
    sq = pauli("rho3", t_sq, grid)
    return SeriesHamiltonian(kin + cou + dc + sq, kin, cou, dc, sq)


def fw_hamiltonian_numeric(
    field: FieldConfig, params: ParticleParams, grid: Grid, exclude_zero_mode: bool = False
) -> LinearOperator:
    """rho3 eps + F + (1/64){eps^-4, [pi^2,[pi^2,F]]} + (rho3/64){eps^-5, [pi^2,F]^2}."""
    return fw_hamiltonian_series(field, params, grid, exclude_zero_mode).total


# --- explicit field form -----------------------------------------------------


@dataclass(frozen=True)
class FwTermDecomposition:
    kinetic: Any
    coulomb: Any
    quadrupole: Any
    mixed_polarizability: Any
    electric_polarizability: Any

    @property
    def classical(self):
        return self.kinetic + self.coulomb

    @property
    def quantum(self):
        return self.quadrupole + self.mixed_polarizability + self.electric_polarizability

    @property
    def total(self):
        return self.classical + self.quantum

    def as_dict(self) -> dict:
        return {
            "kinetic": self.kinetic,
            "coulomb": self.coulomb,
            "quadrupole": self.quadrupole,
            "mixed_polarizability": self.mixed_polarizability,
            "electric_polarizability": self.electric_polarizability,
            "total": self.total,
        }


def closed_form_terms(
    pi, phi: float, E, H, dE, charge: float, mass: float, hbar: float = 1.0
) -> FwTermDecomposition:
    """Upper-spinor energy terms at one phase-space point.

    ``dE[i, j]`` is dE_j/dx_i.  The three quantum terms carry hbar^2.
    """
    pi = as_vec3(pi)
    E = as_vec3(E)
    H = as_vec3(H)
    dE = np.asarray(dE, dtype=float).reshape(3, 3)
    eps = float(np.sqrt(mass**2 + pi @ pi))
    if eps == 0.0:
        raise SpectrumError("eps = 0: massless particle at rest has no FW form")
    e, h2 = charge, hbar**2
    quad = e * h2 / (8 * eps**4) * float(pi @ dE @ pi)
    mixed = -(e**2) * h2 / (8 * eps**4) * float(pi @ np.cross(E, H))
    elec = -(e**2) * h2 / (8 * eps**5) * float(pi @ E) ** 2
    return FwTermDecomposition(eps, e * float(phi), quad, mixed, elec)


def fw_hamiltonian_closed(
    field: FieldConfig,
    params: ParticleParams,
    grid: Grid | None = None,
    mode: str = "operator",
    phase=None,
    massless: bool = False,
    exclude_zero_mode: bool | None = None,
) -> FwTermDecomposition:
    """Explicit field form of the FW Hamiltonian.

    ``mode="semiclassical"`` evaluates numbers at ``phase`` (a PhasePoint
    or an ``(r, pi)`` pair); ``mode="operator"`` builds grid operators in
    which every product of noncommuting factors is replaced by nested
    Jordan products (AB + BA)/2.  The electric-polarizability term is the
    only one carrying rho3.
    """
    if massless and params.mass != 0:
        raise ValueError("massless mode requires mass = 0")
    hbar = params.hbar_scale
    e = params.charge
    if mode == "semiclassical":
        if phase is None:
            raise ValueError("semiclassical mode needs a phase-space point")
        r, pi = (phase.r, phase.pi) if hasattr(phase, "pi") else phase
        s = field.evaluate(as_vec3(r))
        return closed_form_terms(pi, s.phi, s.E, s.H, s.dE, e, params.mass, hbar)
    if mode != "operator":
        raise ValueError(f"unknown mode {mode!r}")
    if grid is None:
        raise ValueError("operator mode needs a grid")
    if exclude_zero_mode is None:
        exclude_zero_mode = massless
    parts = parts_for(grid, field, params)
    sample = _grid_sample(field, grid)
    ks = parts.kinetic_system(params.mass)
    kw = {"drop_below_floor": True} if exclude_zero_mode else {"positive": True}
    eps = ks.apply(np.sqrt, **kw)
    eps_m4 = ks.apply(lambda w: w**-2.0, **kw)
    eps_m5 = ks.apply(lambda w: w**-2.5, **kw)
    pis = parts.pi
    q = np.zeros_like(parts.pi2)
    for i, j in itertools.product(range(3), repeat=2):
        g = sample.dE[:, i, j]
        if np.any(g):
            q += _jordan(pis[i], _jordan(pis[j], np.diag(g)))
    w = np.cross(sample.E, sample.H)
    s_w = sum(_jordan(pis[k], np.diag(w[:, k])) for k in range(3))
    s_e = sum(_jordan(pis[k], np.diag(sample.E[:, k])) for k in range(3))
    h2 = hbar**2
    quad = e * h2 / 8 * _jordan(eps_m4, q)
    mixed = -(e**2) * h2 / 8 * _jordan(eps_m4, s_w)
    elec = -(e**2) * h2 / 8 * _jordan(eps_m5, s_e @ s_e)
    return FwTermDecomposition(
        pauli("rho3", eps, grid),
        pauli("identity", parts.F, grid),
        pauli("identity", quad, grid),
        pauli("identity", mixed, grid),
        pauli("rho3", elec, grid),
    )


def _grid_sample(field: FieldConfig, grid: Grid) -> FieldSample:
    f = field if field.cell_length is not None else field.with_cell(grid.length)
    return f.evaluate(grid.coords)


def massless_axis_report(phase, field: FieldConfig, params: ParticleParams) -> dict:
    """Upper-spinor terms with the motion direction taken as the x axis.

    Returns eps = |pi|, dE_x/dx, (E x H)_x and E_x along l = pi/|pi| and the
    resulting energy terms, which coincide with :func:`closed_form_terms`
    at m = 0.
    """
    r, pi = (phase.r, phase.pi) if hasattr(phase, "pi") else phase
    pi = as_vec3(pi)
    eps = float(np.linalg.norm(pi))
    if eps == 0.0:
        raise SpectrumError("massless particle needs nonzero momentum")
    l = pi / eps
    s = field.evaluate(as_vec3(r))
    e, h2 = params.charge, params.hbar_scale**2
    dex = float(l @ s.dE @ l)
    wx = float(l @ np.cross(s.E, s.H))
    ex = float(l @ s.E)
    return {
        "eps": eps,
        "dEx_dx": dex,
        "ExH_x": wx,
        "E_x": ex,
        "kinetic": eps,
        "coulomb": e * float(s.phi),
        "quadrupole": e * h2 / (8 * eps**2) * dex,
        "mixed_polarizability": -(e**2) * h2 / (8 * eps**3) * wx,
        "electric_polarizability": -(e**2) * h2 / (8 * eps**3) * ex**2,
    }


# --- verifiers ---------------------------------------------------------------


def probe_states(grid: Grid, count: int = 6, width: float | None = None, seed: int = 0) -> np.ndarray:
    """Smooth Gaussians localized near the origin, as columns.

    The default width sqrt(L h / 2 pi) balances the two truncations: the
    tail at the cell face and the spectrum at the band edge are equally
    small.  Grids need roughly 48 points per axis for both to reach
    rounding level.
    """
    rng = np.random.default_rng(seed)
    width = width if width is not None else np.sqrt(grid.length * grid.spacing / (2 * np.pi))
    kmax = np.pi / grid.spacing
    cols = []
    for _ in range(count):
        k = np.zeros(3)
        k[: grid.dim] = rng.uniform(-0.05, 0.05, grid.dim) * kmax
        c = np.zeros(3)
        c[: grid.dim] = rng.uniform(-0.02, 0.02, grid.dim) * grid.length
        d = grid.coords - c
        cols.append(np.exp(-np.sum(d * d, axis=1) / (2 * width**2) + 1j * d @ k))
    return np.array(cols).T


def verify_commutator_identities(
    field: FieldConfig, params: ParticleParams, grid: Grid, probes: np.ndarray | None = None
) -> dict:
    """Compare matrix commutators with their closed field forms on probe states.

    [pi^2, e phi]          vs  i hbar e (pi.E + E.pi)
    [pi^2, [pi^2, e phi]]  vs  4 e hbar^2 (pi.grad)(pi.E) - 4 e^2 hbar^2 pi.(E x H)

    with symmetrized products.  Residuals are relative to the closed forms.
    """
    parts = parts_for(grid, field, params)
    sample = _grid_sample(field, grid)
    if probes is None:
        probes = probe_states(grid)
    e, hbar = params.charge, params.hbar_scale
    pis, pi2, f = parts.pi, parts.pi2, parts.potential[:, None]

    # every operator acts on the probe block, so the cost stays O(n^2)
    def c1(x):
        return pi2 @ (f * x) - f * (pi2 @ x)

    def c2(x):
        return pi2 @ c1(x) - c1(pi2 @ x)

    def sym(k, v, x):
        """(pi_k v + v pi_k) x / 2 for a diagonal v."""
        v = v[:, None]
        return 0.5 * (pis[k] @ (v * x) + v * (pis[k] @ x))

    def quad(x):
        out = np.zeros_like(x)
        for i, j in itertools.product(range(3), repeat=2):
            g = sample.dE[:, i, j]
            if not np.any(g):
                continue
            inner = lambda y: sym(j, g, y)  # noqa: E731
            out += 0.5 * (pis[i] @ inner(x) + inner(pis[i] @ x))
        return out

    w = np.cross(sample.E, sample.H)
    closed1 = 2j * hbar * e * sum(sym(k, sample.E[:, k], probes) for k in range(3))
    mixed_part = -4 * e**2 * hbar**2 * sum(sym(k, w[:, k], probes) for k in range(3))
    closed2 = 4 * e * hbar**2 * quad(probes) + mixed_part
    c1p = c1(probes)

    def resid(a, b, floor=0.0):
        ref = max(np.linalg.norm(b), floor)
        diff = np.linalg.norm(a - b)
        return 0.0 if ref == 0 and diff == 0 else float(diff / (ref or 1.0))

    # the double commutator vanishes identically for uniform E; measure it
    # against one of its two constituent products instead
    term2 = np.linalg.norm(pi2 @ c1p)
    return {
        "single_commutator_residual": resid(c1p, closed1),
        "double_commutator_residual": resid(c2(probes), closed2, term2),
        "mixed_term_norm": float(np.linalg.norm(mixed_part)),
        "probe_count": probes.shape[1],
    }


def verify_n_independence(
    field: FieldConfig,
    params: ParticleParams,
    grid: Grid,
    n_list: Sequence[float],
    tol: float = 1e-9,
    route: str = "staged",
    exclude_zero_mode: bool = False,
) -> dict:
    """Max pairwise relative difference of H_FW over the CFFV parameter N."""
    if len(set(n_list)) < 2:
        raise ValueError("need at least two distinct N values")
    builders = {"staged": fw_hamiltonian_staged, "series": fw_hamiltonian_numeric}
    if route not in builders:
        raise ValueError(f"unknown route {route!r}")
    hs = [builders[route](field, params.replace(cffv_n=n), grid, exclude_zero_mode) for n in n_list]
    cffv = [build_cffv_hamiltonian(field, params.replace(cffv_n=n), grid) for n in n_list]
    worst, worst_cffv = 0.0, 0.0
    for a, b in itertools.combinations(range(len(n_list)), 2):
        worst = max(worst, _rel(hs[a].matrix - hs[b].matrix, hs[a].matrix))
        worst_cffv = max(worst_cffv, _rel(cffv[a].matrix - cffv[b].matrix, cffv[a].matrix))
    return {
        "n_values": [float(n) for n in n_list],
        "route": route,
        "max_relative_difference": worst,
        "cffv_max_relative_difference": worst_cffv,
        "tolerance": tol,
        "passed": worst <= tol,
    }


# --- Landau levels -------------------------------------------------------------


def cluster_levels(values: np.ndarray, rel_gap: float = 2e-4, min_fraction: float = 0.25):
    """Group sorted eigenvalues into degenerate levels.

    Consecutive values closer than ``rel_gap`` (relative) share a cluster;
    clusters smaller than ``min_fraction`` of the largest one (and smaller
    than 3) are dropped as boundary states.
    """
    v = np.sort(np.asarray(values, dtype=float))
    if v.size == 0:
        return []
    groups = [[v[0]]]
    for a, b in zip(v[:-1], v[1:]):
        if b - a <= rel_gap * max(abs(b), 1e-300):
            groups[-1].append(b)
        else:
            groups.append([b])
    biggest = max(len(g) for g in groups)
    cut = max(3, int(np.ceil(min_fraction * biggest)))
    return [(float(np.mean(g)), len(g)) for g in groups if len(g) >= cut]


def landau_prediction(params: ParticleParams, field_strength: float, count: int) -> np.ndarray:
    n = np.arange(count)
    return np.sqrt(
        params.mass**2 + (2 * n + 1) * abs(params.charge * field_strength) * params.hbar_scale
    )


def landau_levels(field: FieldConfig, params: ParticleParams, grid: Grid, count: int = 5) -> dict:
    """Lowest positive-branch levels from the exact FW Hamiltonian."""
    ex = exact_fw(_split(field, params, grid))
    upper = hermitize(ex.blocks["Hfw"][0][0])
    eig = np.linalg.eigvalsh(upper)
    levels = cluster_levels(eig)[:count]
    hz = float(np.linalg.norm(field.H_uniform))
    pred = landau_prediction(params, hz, count)
    found = np.array([lv for lv, _ in levels])
    rel = np.abs(found - pred[: found.size]) / pred[: found.size]
    return {
        "levels": found.tolist(),
        "multiplicities": [mult for _, mult in levels],
        "predicted": pred.tolist(),
        "relative_errors": rel.tolist(),
        "offdiag_residual": ex.offdiag_residual,
        "pseudo_unitary_residual": ex.pseudo_unitary_residual(),
    }


def _split(field, params, grid):
    from .cffv import split_meo

    return split_meo(field, params, grid)
