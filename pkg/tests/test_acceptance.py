"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -v -s`` to see the summary lines
interleaved with the test names (they are printed even without ``-s``).
"""

import json
import subprocess
import sys
import textwrap
import time

import numpy as np
import pytest

from scalar_fw.cffv import (
    CayleyPropagator,
    ParticleParams,
    build_cffv_hamiltonian,
    evolve_cffv,
    parts_for,
    split_meo,
)
from scalar_fw.dkp import MasslessDkpError, check_dkp_cffv_equivalence, reduced_vs_cffv
from scalar_fw.fields import FREE, FieldConfig, crossed_EH, harmonic_scalar, uniform_B, uniform_E
from scalar_fw.fw import (
    exact_fw,
    fw_hamiltonian_closed,
    fw_hamiltonian_numeric,
    fw_hamiltonian_series,
    fw_hamiltonian_staged,
    fw_step_operator,
    verify_commutator_identities,
    verify_n_independence,
)
from scalar_fw.grid import Grid
from scalar_fw.operators import (
    TwoComponentState,
    check_pseudo_unitary,
    pseudo_hermiticity_residual,
    pseudo_inner,
)
from scalar_fw.semiclassical import (
    PhasePoint,
    WavepacketSpec,
    dipole_gradient_check,
    ehrenfest_compare,
    force,
    force_terms,
    hs_energy,
    induced_dipoles,
    integrate_trajectory,
)

POLY = FieldConfig(
    "polynomial", {"gx": 0.02, "qxx": 0.01, "qyy": -0.02, "qxy": 0.015, "qyz": 0.005, "Hz": 0.2, "Hx": 0.05}
)
CROSSED = crossed_EH((0.01, 0.0, 0.0), (0.0, 0.0, 0.1))


def announce(capsys, number, name, value, tol, passed, note=""):
    line = f"{'PASS' if passed else 'FAIL'} criterion {number:>2} {name}: {value:.3e} (tol {tol:.1e})"
    if note:
        line += f"  [{note}]"
    with capsys.disabled():
        print("\n" + line)
    assert passed, line


def _rand_state(grid, seed):
    r = np.random.default_rng(seed)
    a = r.standard_normal((2, grid.size)) + 1j * r.standard_normal((2, grid.size))
    return TwoComponentState(grid, a[0], a[1])


# 1 -----------------------------------------------------------------------------


def test_criterion_01_free_spectrum(capsys):
    worst = 0.0
    for grid in (Grid(1, 64, 20.0), Grid(2, 12, 8.0)):
        k = np.sqrt(np.sum(grid.momentum_coords**2, axis=1))
        for m in (0.0, 1.0):
            ref = np.sort(np.sqrt(m * m + k * k))
            for n in (0.5, 1.0, 3.0):
                ev = build_cffv_hamiltonian(FREE, ParticleParams(m, 0.0, n), grid).eigvals()
                assert np.abs(ev.imag).max() <= 1e-6  # the massless p = 0 Jordan block
                re = ev.real
                if m == 0:
                    # the p = 0 mode is a defective pair at zero; drop it from both sides
                    re, ref_m = re[np.abs(re) > 1e-6], ref[ref > 0]
                else:
                    ref_m = ref
                pos, neg = np.sort(re[re > 0]), np.sort(-re[re < 0])
                assert pos.size == neg.size == ref_m.size
                worst = max(worst, np.max(np.abs(pos - ref_m) / ref_m), np.max(np.abs(neg - ref_m) / ref_m))
    announce(capsys, 1, "free CFFV spectrum, N in {0.5,1,3}, m in {0,1}", worst, 1e-10, worst <= 1e-10)


# 2 -----------------------------------------------------------------------------


def test_criterion_02_pseudo_structure(capsys):
    g1, g2 = Grid(1, 64, 20.0), Grid(2, 12, 8.0)
    p = ParticleParams(1.0, 1.0, 2.0)
    e_win = uniform_E(Ex=0.02, window_width=3.0)
    hams = []
    for field, grid in ((FREE, g1), (e_win, g1), (harmonic_scalar(0.01), g1), (uniform_B(Hz=0.5), g2), (POLY, g2)):
        hams.append(build_cffv_hamiltonian(field, p, grid))
    hams.append(exact_fw(split_meo(uniform_B(Hz=0.5), p, g2)).Hfw)
    hams.append(fw_hamiltonian_staged(e_win, p, g1))
    hams.append(fw_hamiltonian_numeric(harmonic_scalar(0.01), p, g1))
    hams.append(fw_hamiltonian_closed(e_win, p, g1).total)
    h_res = max(pseudo_hermiticity_residual(h) for h in hams)

    transforms = [
        exact_fw(split_meo(uniform_B(Hz=0.5), p, g2)).U,
        exact_fw(split_meo(FREE, p, g1)).U,
        fw_step_operator(e_win, p, g1).U,
        fw_step_operator(uniform_B(Hz=0.5), p, g2).U,
    ]
    u_res = max(check_pseudo_unitary(u)[1] for u in transforms)
    inner = 0.0
    for i, u in enumerate(transforms):
        a, b = _rand_state(u.grid, i), _rand_state(u.grid, 100 + i)
        before = pseudo_inner(a, b)
        after = pseudo_inner(u @ a, u @ b)
        inner = max(inner, abs(after - before) / (a.l2_norm() * b.l2_norm()))
    ok = h_res <= 1e-12 and u_res <= 1e-10 and inner <= 1e-10
    note = f"hermiticity {h_res:.1e}, unitarity {u_res:.1e}, inner {inner:.1e}"
    announce(capsys, 2, "pseudo-structure", max(h_res, u_res, inner), 1e-10, ok, note)


# 3 -----------------------------------------------------------------------------


def test_criterion_03_n_independence(capsys):
    grid = Grid(1, 64, 20.0)
    m = 1.0
    params = ParticleParams(m, 1.0)
    worst, control = 0.0, np.inf
    for field in (uniform_E(Ex=0.02, window_width=3.0), harmonic_scalar(0.01)):
        rep = verify_n_independence(field, params, grid, [m, 2 * m, 5 * m])
        worst = max(worst, rep["max_relative_difference"])
        control = min(control, rep["cffv_max_relative_difference"])
    ok = worst <= 1e-9 and control >= 1e-2
    announce(capsys, 3, "N-independence of H_FW", worst, 1e-9, ok, f"pre-FW control {control:.2e} >= 1e-2")


# 4 -----------------------------------------------------------------------------


def test_criterion_04_commutator_identities(capsys):
    cases = [
        (harmonic_scalar(0.3), Grid(1, 64, 20.0)),
        (FieldConfig("polynomial", {"gx": 0.05, "qxx": 0.02, "qyy": -0.01, "qxy": 0.015}), Grid(2, 48, 16.0)),
        (FieldConfig("polynomial", {"qxx": 0.02, "qxy": 0.01, "Hz": 0.3}), Grid(2, 48, 16.0)),
    ]
    worst = 0.0
    for field, grid in cases:
        rep = verify_commutator_identities(field, ParticleParams(1.0, 1.0), grid)
        worst = max(worst, rep["single_commutator_residual"], rep["double_commutator_residual"])
    # phi = x^2: [p^2, x^2] psi = -2 psi - 4 x psi'
    grid = Grid(1, 64, 20.0)
    x = grid.axis
    psi = np.exp(-((x - 0.3) ** 2) / 2)
    parts = parts_for(grid, harmonic_scalar(2.0), ParticleParams(1.0, 1.0))
    c1 = parts.pi2 @ (parts.potential * psi) - parts.potential * (parts.pi2 @ psi)
    expect = -2 * psi + 4 * x * (x - 0.3) * psi
    oracle = float(np.abs(c1 - expect).max() / np.abs(expect).max())
    ok = worst <= 1e-8 and oracle <= 1e-10
    announce(capsys, 4, "commutator identities", worst, 1e-8, ok, f"x^2 oracle {oracle:.1e}")


# 5 -----------------------------------------------------------------------------

LANDAU_SCRIPT = textwrap.dedent(
    """
    import json
    from scalar_fw.cffv import ParticleParams
    from scalar_fw.fields import uniform_B
    from scalar_fw.fw import landau_levels
    from scalar_fw.grid import Grid
    rep = landau_levels(uniform_B(Hz=1.0), ParticleParams(1.0, 1.0), Grid(2, 48, 16.0), count=5)
    print(json.dumps(rep))
    """
)


@pytest.mark.slow
def test_criterion_05_landau_levels(capsys):
    # run in a fresh interpreter: the 2304-point exact FW needs most of the memory
    start = time.perf_counter()
    out = subprocess.run([sys.executable, "-c", LANDAU_SCRIPT], capture_output=True, text=True, timeout=600)
    wall = time.perf_counter() - start
    assert out.returncode == 0, out.stderr
    rep = json.loads(out.stdout.strip().splitlines()[-1])
    worst = max(rep["relative_errors"]) if len(rep["levels"]) == 5 else np.inf
    ok = worst <= 1e-2 and wall <= 300
    announce(capsys, 5, "Landau levels 48x48", worst, 1e-2, ok, f"wall {wall:.0f} s <= 300 s")


# 6 -----------------------------------------------------------------------------


def test_criterion_06_route_equivalence(capsys):
    params = ParticleParams(1.0, 1.0)
    grid = Grid(1, 64, 30.0)
    phi = np.exp(-((grid.axis - 1.0) ** 2) / 8 + 0.8j * grid.axis)
    worst = 0.0
    for field in (uniform_E(Ex=0.05, window_width=4.0), harmonic_scalar(0.02)):
        series = fw_hamiltonian_series(field, params, grid).quantum.block(0, 0)
        closed = fw_hamiltonian_closed(field, params, grid).quantum.block(0, 0)
        a = np.vdot(phi, series @ phi).real
        b = np.vdot(phi, closed @ phi).real
        worst = max(worst, abs(a - b) / abs(b))
    announce(capsys, 6, "numeric vs closed-form quantum corrections", worst, 5e-2, worst <= 5e-2)


# 7 -----------------------------------------------------------------------------


def test_criterion_07_dkp_equivalence(capsys):
    g1, g2 = Grid(1, 32, 10.0), Grid(2, 12, 8.0)
    op = max(
        reduced_vs_cffv(field, ParticleParams(mass, 1.0), grid)
        for field, grid in ((FREE, g1), (harmonic_scalar(0.05), g1), (uniform_B(Hz=0.5), g2), (POLY, g2))
        for mass in (0.5, 1.0, 2.0)
    )
    d = g2.coords[:, :2] - np.array([0.5, -0.3])
    phi = np.exp(-np.sum(d * d, axis=1) / 2 + 0.4j * g2.coords[:, 0])
    rep = check_dkp_cffv_equivalence(uniform_B(Hz=0.5), ParticleParams(1.0, 1.0), TwoComponentState(g2, phi, 0.3 * phi), 0.02, 200)
    twin = rep["max_l2_discrepancy"]
    try:
        reduced_vs_cffv(FREE, ParticleParams(0.0, 1.0), g1)
        refused = False
    except MasslessDkpError:
        refused = True
    ok = op <= 1e-10 and twin <= 1e-8 and refused
    announce(capsys, 7, "DKP reduction", max(op, twin), 1e-8, ok, f"operator {op:.1e}, twin {twin:.1e}, m=0 refused {refused}")


# 8 -----------------------------------------------------------------------------


def _phase_points(seed, count=20, zero_pi=False):
    r = np.random.default_rng(seed)
    for _ in range(count):
        pi = np.zeros(3) if zero_pi else r.uniform(-2, 2, 3)
        yield PhasePoint(r.uniform(-2, 2, 3), pi)


def test_criterion_08a_dipoles(capsys):
    worst = 0.0
    for field in (CROSSED, POLY):
        for p in _phase_points(1):
            rep = dipole_gradient_check(p, field, ParticleParams(0.8, -1.0))
            worst = max(worst, rep["d_relative_error"], rep["mu_relative_error"])
    announce(capsys, "8a", "dipoles are field gradients of H_s", worst, 1e-6, worst <= 1e-6)


def test_criterion_08b_lorentz_limit_and_rest_nullity(capsys):
    lorentz_err = 0.0
    params0 = ParticleParams(1.0, 1.0, hbar_scale=0.0)
    for field in (CROSSED, POLY):
        for p in _phase_points(2):
            s = field.evaluate(p.r)
            eps = np.sqrt(1 + p.pi @ p.pi)
            ref = s.E + np.cross(p.pi, s.H) / eps
            lorentz_err = max(lorentz_err, np.abs(force(p, field, params0) - ref).max() / np.abs(ref).max())
    # at pi = 0 the energy corrections, dipoles and the corrections derived
    # from them vanish; the field-squared force term has no pi factor
    rest = 0.0
    field_squared = 0.0
    params = ParticleParams(1.0, 1.0)
    for field in (CROSSED, POLY, harmonic_scalar(0.3)):
        for p in _phase_points(3, zero_pi=True):
            rest = max(rest, abs(hs_energy(p, field, params).quantum))
            d, mu = induced_dipoles(p, field, params)
            f = force_terms(p, field, params)
            rest = max(rest, np.abs(d).max(), np.abs(mu).max(), np.abs(f["gradient"]).max(), np.abs(f["polarization"]).max())
            field_squared = max(field_squared, np.abs(f["field_squared"]).max())
    ok = lorentz_err <= 1e-15 and rest == 0.0
    note = f"rest-frame corrections {rest:.1e}; field-squared force at pi=0 {field_squared:.1e} (pi-independent term)"
    announce(capsys, "8b", "Lorentz limit at hbar=0", lorentz_err, 1e-15, ok, note)


def test_criterion_08c_hbar_squared_scaling(capsys):
    worst = 0.0
    for p in _phase_points(4):
        base = force_terms(p, POLY, ParticleParams(1.0, 1.0))
        a = hs_energy(p, POLY, ParticleParams(1.0, 1.0))
        for hbar in (0.3, 2.0):
            scaled = force_terms(p, POLY, ParticleParams(1.0, 1.0, hbar_scale=hbar))
            for name in ("gradient", "field_squared", "polarization"):
                ref = hbar**2 * base[name]
                if np.abs(ref).max() > 0:
                    worst = max(worst, np.abs(scaled[name] - ref).max() / np.abs(ref).max())
            b = hs_energy(p, POLY, ParticleParams(1.0, 1.0, hbar_scale=hbar))
            for name in ("quadrupole", "mixed_polarizability", "electric_polarizability"):
                ref = hbar**2 * getattr(a, name)
                if ref != 0:
                    worst = max(worst, abs(getattr(b, name) - ref) / abs(ref))
    announce(capsys, "8c", "quantum terms scale as hbar^2", worst, 1e-12, worst <= 1e-12)


def test_criterion_08d_cyclotron(capsys):
    params = ParticleParams(1.0, 1.0, hbar_scale=0.0)
    pi0 = 0.8
    period = 2 * np.pi * np.sqrt(1 + pi0**2)
    worst = 0.0
    for revs in (1, 3):
        traj = integrate_trajectory(PhasePoint([0, 0, 0], [pi0, 0, 0]), uniform_B(Hz=1.0), params, revs * period, period / 2000)
        closure = np.linalg.norm(traj.r[-1] - traj.r[0]) / pi0
        worst = max(worst, closure / revs)
    announce(capsys, "8d", "cyclotron closure per revolution", worst, 1e-4, worst <= 1e-4)


# 9 -----------------------------------------------------------------------------


def test_criterion_09_ehrenfest(capsys):
    runs = {
        "uniform_E": ehrenfest_compare(
            WavepacketSpec((0.0,), (1.0,), 4.0, 0.05),
            uniform_E(Ex=0.01, window_width=6.0), ParticleParams(1.0, 1.0), Grid(1, 256, 80.0), 20.0,
        ),
        # heavy particle: radius 2.5, half a cyclotron period
        "uniform_B": ehrenfest_compare(
            WavepacketSpec((0.0, 2.5, 0.0), (2.5, 0.0, 0.0), 1.0, 0.05),
            uniform_B(Hz=1.0), ParticleParams(16.0, 1.0), Grid(2, 36, 16.0), 51.0,
        ),
    }
    worst = max(max(r["position_deviation"], r["momentum_deviation"]) for r in runs.values())
    warned = any(r["warnings"] for r in runs.values())
    note = ", ".join(f"{k} {max(r['position_deviation'], r['momentum_deviation']):.2e}" for k, r in runs.items())
    announce(capsys, 9, "Ehrenfest centroids", worst, 2e-2, worst <= 2e-2 and not warned, note)


# 10 ----------------------------------------------------------------------------


def test_criterion_10_pseudo_norm(capsys):
    g1, g2 = Grid(1, 64, 20.0), Grid(2, 12, 8.0)
    worst = 0.0
    for field, grid in (
        (uniform_E(Ex=0.02, window_width=3.0), g1),
        (harmonic_scalar(0.01), g1),
        (uniform_B(Hz=0.5), g2),
        (POLY, g2),
    ):
        psi = _rand_state(grid, 5)
        ev = evolve_cffv(psi, field, ParticleParams(1.0, 1.0, 2.0), 0.05, 1000, drift_tol=1.0)
        worst = max(worst, ev.max_drift / psi.l2_norm() ** 2)
    announce(capsys, 10, "pseudo-norm drift over 1000 steps", worst, 1e-8, worst <= 1e-8)


def test_cayley_step_is_exactly_pseudo_unitary():
    h = build_cffv_hamiltonian(POLY, ParticleParams(1.0, 1.0), Grid(2, 8, 8.0))
    assert check_pseudo_unitary(CayleyPropagator(h, 0.05).operator())[1] <= 1e-12
