import csv
import io

import numpy as np
import pytest
from hypothesis import given, strategies as st

from scalar_fw.cffv import InstabilityError, ParticleParams
from scalar_fw.fields import FREE, FieldConfig, crossed_EH, harmonic_scalar, uniform_B, uniform_E
from scalar_fw.grid import Grid
from scalar_fw.semiclassical import (
    PhasePoint,
    WavepacketSpec,
    dipole_gradient_check,
    ehrenfest_compare,
    force,
    force_law_difference,
    force_terms,
    hs_energy,
    induced_dipoles,
    integrate_trajectory,
    velocity,
)

CROSSED = crossed_EH((0.01, 0, 0), (0, 0, 0.1))
POLY = FieldConfig(
    "polynomial", {"gx": 0.02, "qxx": 0.01, "qyy": -0.02, "qxy": 0.015, "qyz": 0.005, "Hz": 0.2, "Hx": 0.05}
)
CORRECTIONS = ("gradient", "field_squared", "polarization")

vec = st.lists(st.floats(-2, 2), min_size=3, max_size=3)


def test_rest_particle_hamiltonian():
    for field in (CROSSED, POLY, harmonic_scalar(0.3)):
        p = PhasePoint([0.4, -0.1, 0.2], [0, 0, 0])
        t = hs_energy(p, field, ParticleParams(1.3, 1.0))
        assert t.quantum == 0.0
        assert t.total == pytest.approx(1.3 + field.evaluate(p.r).phi)
        d, mu = induced_dipoles(p, field, ParticleParams(1.3, 1.0))
        assert not d.any() and not mu.any()


def test_mixed_term_examples():
    params = ParticleParams(np.sqrt(3.0), 1.0)  # eps = 2 at |pi| = 1
    assert hs_energy(PhasePoint([0, 0, 0], [1, 0, 0]), CROSSED, params).mixed_polarizability == 0.0
    t = hs_energy(PhasePoint([0, 0, 0], [0, 1, 0]), CROSSED, params)
    assert t.mixed_polarizability == pytest.approx(7.8125e-6, rel=1e-12)


def test_dipole_examples():
    params = ParticleParams(1.0, 1.0)
    d, mu = induced_dipoles(PhasePoint([0, 0, 0], [1, 0, 0]), uniform_E(Ex=0.1), params)
    assert d == pytest.approx([-0.1 / (4 * 2**2.5), 0, 0], rel=1e-12)
    assert d[0] == pytest.approx(-4.4194e-3, rel=1e-4)
    assert not mu.any()


@given(vec, vec)
def test_dipoles_are_field_gradients(r, pi):
    phase = PhasePoint(r, np.asarray(pi) + [0.1, 0, 0])
    for field in (CROSSED, POLY):
        rep = dipole_gradient_check(phase, field, ParticleParams(0.8, -1.0))
        assert rep["d_relative_error"] <= 1e-6
        assert rep["mu_relative_error"] <= 1e-6


def test_uniform_E_force_is_exact_lorentz():
    f = force_terms(PhasePoint([1, 2, 3], [0.3, -0.4, 0.5]), uniform_E(Ex=0.01, Ey=0.02), ParticleParams(1.0, 1.0))
    assert np.array_equal(f["electric"], [0.01, 0.02, 0.0])
    for name in ("magnetic",) + CORRECTIONS:
        assert not f[name].any()


def test_uniform_B_force_is_orthogonal():
    params = ParticleParams(1.0, 1.0)
    p = PhasePoint([0, 0, 0], [0.3, -0.4, 0.5])
    f = force(p, uniform_B(Hz=0.7), params)
    eps = np.sqrt(1 + 0.5)
    assert np.allclose(f, np.cross(p.pi, [0, 0, 0.7]) / eps, rtol=0, atol=1e-16)
    assert abs(f @ p.pi) < 1e-16


def test_field_squared_term_example():
    params = ParticleParams(np.sqrt(3.0), 1.0)
    f = force_terms(PhasePoint([0, 0, 0], [0, 1, 0]), CROSSED, params)
    assert f["field_squared"] == pytest.approx([1e-4 / 128, 0, 0], rel=1e-12)


@given(vec, vec)
def test_lorentz_limit_at_zero_hbar(r, pi):
    params = ParticleParams(1.0, 1.0, hbar_scale=0.0)
    p = PhasePoint(r, pi)
    for field in (CROSSED, POLY):
        s = field.evaluate(p.r)
        eps = np.sqrt(1 + p.pi @ p.pi)
        lorentz = s.E + np.cross(p.pi, s.H) / eps
        assert np.array_equal(force(p, field, params), lorentz) or np.allclose(
            force(p, field, params), lorentz, rtol=1e-15, atol=1e-17
        )


@given(vec, vec, st.floats(0.1, 3.0))
def test_corrections_scale_with_hbar_squared(r, pi, hbar):
    p = PhasePoint(r, pi)
    base = force_terms(p, POLY, ParticleParams(1.0, 1.0))
    scaled = force_terms(p, POLY, ParticleParams(1.0, 1.0, hbar_scale=hbar))
    for name in CORRECTIONS:
        assert np.allclose(scaled[name], hbar**2 * base[name], rtol=1e-13, atol=1e-300)
    for name in ("electric", "magnetic"):
        assert np.array_equal(scaled[name], base[name])
    a, b = hs_energy(p, POLY, ParticleParams(1.0, 1.0)), hs_energy(p, POLY, ParticleParams(1.0, 1.0, hbar_scale=hbar))
    for name in ("quadrupole", "mixed_polarizability", "electric_polarizability"):
        assert getattr(b, name) == pytest.approx(hbar**2 * getattr(a, name), rel=1e-13, abs=1e-300)


def test_rest_particle_force_corrections():
    params = ParticleParams(1.0, 1.0)
    p = PhasePoint([0.3, 0.1, 0.0], [0, 0, 0])
    f = force_terms(p, POLY, params)
    assert not f["gradient"].any() and not f["polarization"].any()
    # the field-squared term does not carry pi: it is H x (E x H) / 8 m^4
    s = POLY.evaluate(p.r)
    assert np.allclose(f["field_squared"], np.cross(s.H, np.cross(s.E, s.H)) / 8)
    assert not force_terms(p, uniform_B(Hz=0.3), params)["field_squared"].any()


@given(vec, vec)
def test_velocity_is_pi_gradient_of_hs(r, pi):
    params = ParticleParams(0.9, 1.0)
    p = PhasePoint(r, np.asarray(pi) + [0.2, 0, 0])
    v = velocity(p, POLY, params)
    h = 1e-5
    fd = np.zeros(3)
    for i in range(3):
        d = np.zeros(3)
        d[i] = h
        fd[i] = (
            hs_energy(PhasePoint(p.r, p.pi + d), POLY, params).total
            - hs_energy(PhasePoint(p.r, p.pi - d), POLY, params).total
        ) / (2 * h)
    assert np.allclose(v, fd, rtol=1e-7, atol=1e-10)


def test_force_law_difference_is_small_for_crossed_fields():
    rep = force_law_difference(PhasePoint([0, 0, 0], [0.5, 0.3, 0.0]), CROSSED, ParticleParams(1.0, 1.0))
    assert rep["relative_difference"] < 1e-3


def test_cyclotron_orbit():
    params = ParticleParams(1.0, 1.0, hbar_scale=0.0)
    field = uniform_B(Hz=1.0)
    pi0 = np.array([0.8, 0.0, 0.0])
    eps = np.sqrt(1 + 0.64)
    period = 2 * np.pi * eps
    steps = 2000
    traj = integrate_trajectory(PhasePoint([0, 0, 0], pi0), field, params, period, period / steps)
    radius = 0.8
    centre = np.array([0.0, -radius, 0.0])  # e > 0, H along z: the force at the origin is -y
    assert np.allclose(np.linalg.norm(traj.r - centre, axis=1), radius, rtol=1e-6)
    assert np.linalg.norm(traj.r[-1] - traj.r[0]) / radius <= 1e-4
    assert np.allclose(np.linalg.norm(traj.pi, axis=1), 0.8, rtol=1e-9)


def test_uniform_E_momentum_linear_in_time():
    params = ParticleParams(1.0, 1.0, hbar_scale=0.0)
    traj = integrate_trajectory(PhasePoint([0, 0, 0], [0.1, 0.2, 0]), uniform_E(Ex=0.05), params, 3.0, 0.1)
    expect = np.array([0.1, 0.2, 0]) + np.outer(traj.times, [0.05, 0, 0])
    assert np.allclose(traj.pi, expect, rtol=0, atol=1e-14)


def test_quantum_deviation_scales_with_hbar_squared():
    field = crossed_EH((0.05, 0, 0), (0, 0, 0.5))
    phase = PhasePoint([0, 0, 0], [0.4, 0.3, 0])

    def final(hbar):
        return integrate_trajectory(phase, field, ParticleParams(1.0, 1.0, hbar_scale=hbar), 5.0, 0.01).r[-1]

    ref = final(0.0)
    ratio = np.linalg.norm(final(1.0) - ref) / np.linalg.norm(final(0.5) - ref)
    assert ratio == pytest.approx(4.0, rel=0.05)


def test_energy_conservation():
    params = ParticleParams(1.0, 1.0)
    start = PhasePoint([0.2, 0, 0], [0.5, 0.1, 0])
    exact = integrate_trajectory(start, POLY, params, 2.0, 0.01, force_law="hamiltonian")
    assert exact.energy_drift_rate() < 1e-8
    # the five-term law is not the exact flow of H_s; the drift stays at the
    # size of the quantum corrections
    five = integrate_trajectory(start, POLY, params, 2.0, 0.01)
    quantum = max(abs(t.quantum) for t in five.terms)
    assert five.energy_drift_rate() * 2.0 * abs(five.energy[0]) < 10 * quantum
    crossed = integrate_trajectory(start, CROSSED, params, 2.0, 0.01)
    assert crossed.energy_drift_rate() < 1e-8


def test_csv_layout():
    params = ParticleParams(1.0, 1.0)
    traj = integrate_trajectory(PhasePoint([0.2, 0, 0], [0.5, 0.1, 0]), POLY, params, 0.5, 0.01)
    assert np.all(np.diff(traj.times) > 0)
    rows = list(csv.reader(io.StringIO(traj.to_csv())))
    assert rows[0][:7] == ["t", "x", "y", "z", "pi_x", "pi_y", "pi_z"]
    assert rows[0][-6:] == ["d_x", "d_y", "d_z", "mu_x", "mu_y", "mu_z"]
    assert len(rows) == len(traj.times) + 1
    assert float(rows[5][1]) == traj.r[4, 0]  # full double precision


def test_unresolved_step_aborts():
    with pytest.raises(InstabilityError, match="cyclotron"):
        integrate_trajectory(PhasePoint([0, 0, 0], [0.5, 0, 0]), uniform_B(Hz=5.0), ParticleParams(1.0, 1.0), 1.0, 0.5)


def test_free_packet_moves_at_group_velocity():
    grid = Grid(1, 128, 80.0)
    spec = WavepacketSpec((-5.0,), (1.0,), 6.0, 0.05)
    rep = ehrenfest_compare(spec, FREE, ParticleParams(1.0, 0.0), grid, 5.0)
    assert rep["position_deviation"] <= 1e-2
    assert rep["momentum_deviation"] <= 1e-6
    assert rep["max_lower_fraction"] <= 1e-12


def test_ehrenfest_warns_outside_validity():
    grid = Grid(1, 64, 40.0)
    spec = WavepacketSpec((0.0,), (0.05,), 2.0, 0.05)
    rep = ehrenfest_compare(spec, FREE, ParticleParams(1.0, 0.0), grid, 0.5)
    assert rep["warnings"]
