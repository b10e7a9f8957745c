"""Command-line front end.

Every subcommand writes ``report.json`` (deterministic for a given config
and seed) and, where it produces data, a CSV or JSON data file into the
output directory.  Wall-clock time goes to ``timing.json`` so the report
itself stays byte-stable.  The exit code is 0 iff every check passed.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
import time
from dataclasses import dataclass, field as dc_field
from importlib import metadata
from pathlib import Path
from typing import Any

import numpy as np

from . import cffv, dkp, fw, semiclassical as sc
from .config import ConfigError, RunConfig, load_config
from .operators import (
    SpectrumError,
    TwoComponentState,
    check_pseudo_unitary,
    hermitize,
    pseudo_hermiticity_residual,
    pseudo_inner,
)

log = logging.getLogger("scalar_fw")

OUT_ENV = "SCALAR_FW_OUT"
SUITES = ("pseudo", "nindep", "commutators", "dkp", "hbar")


def tool_version() -> str:
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:
        return "0+unknown"


@dataclass
class RunReport:
    command: str
    config: dict
    seed: int
    checks: list = dc_field(default_factory=list)
    results: dict = dc_field(default_factory=dict)

    def check(self, name: str, value: float, tolerance: float, passed: bool | None = None, **detail):
        if passed is None:
            passed = bool(value <= tolerance)
        self.checks.append(
            {"name": name, "passed": bool(passed), "value": value, "tolerance": tolerance, **detail}
        )

    @property
    def passed(self) -> bool:
        return all(c["passed"] for c in self.checks)

    def as_dict(self) -> dict:
        return {
            "command": self.command,
            "tool_version": tool_version(),
            "seed": self.seed,
            "config": self.config,
            "passed": self.passed,
            "checks": self.checks,
            "results": self.results,
        }


def _jsonable(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return obj.item()
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    raise TypeError(f"not serializable: {type(obj)}")


def _dump(path: Path, payload: Any):
    path.write_text(json.dumps(payload, indent=2, sort_keys=True, default=_jsonable) + "\n")


def _write_table(out: Path, stem: str, columns: list[str], rows, fmt: str) -> Path:
    rows = [[float(v) if not isinstance(v, str) else v for v in r] for r in rows]
    if fmt == "json":
        path = out / f"{stem}.json"
        _dump(path, {"columns": columns, "rows": rows})
        return path
    path = out / f"{stem}.csv"
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([v if isinstance(v, str) else repr(v) for v in r])
    return path


# --- spectrum -------------------------------------------------------------------


def _free_reference(cfg: RunConfig) -> np.ndarray:
    grid, p = cfg.grid, cfg.particle
    k2 = np.sum(grid.momentum_coords**2, axis=1)
    return np.sqrt(p.mass**2 + p.hbar_scale**2 * k2)


def _block_eigs(op) -> tuple[np.ndarray, np.ndarray]:
    up = np.linalg.eigvalsh(hermitize(op.block(0, 0)))
    lo = np.linalg.eigvalsh(hermitize(op.block(1, 1)))
    return up, lo


def cmd_spectrum(cfg: RunConfig, report: RunReport, out: Path, fmt: str):
    grid, params, field = cfg.grid, cfg.particle, cfg.field
    kind = cfg["run"]["hamiltonian"]
    massless = params.mass == 0
    free = field.kind == "free" or params.charge == 0
    if kind == "cffv":
        vals = cffv.build_cffv_hamiltonian(field, params, grid).eigvals()
        report.results["max_imaginary_part"] = float(np.max(np.abs(vals.imag)))
        vals = vals.real
        pos, neg = np.sort(vals[vals > 0]), np.sort(vals[vals <= 0])
    elif kind == "fw-exact":
        ex = fw.exact_fw(cffv.split_meo(field, params, grid))
        report.check("offdiag_residual", ex.offdiag_residual, 1e-10)
        pos, neg = _block_eigs(ex.Hfw)
        neg = np.sort(neg)
    else:
        build = fw.fw_hamiltonian_numeric if kind == "fw-numeric" else (
            lambda f, p, g, z: fw.fw_hamiltonian_closed(f, p, g, massless=z).total
        )
        pos, neg = _block_eigs(build(field, params, grid, massless))
    if massless:
        # the p = 0 mode has eps = 0 and is excluded
        floor = 1e-8 * max(np.max(np.abs(pos), initial=1.0), 1.0)
        pos, neg = pos[np.abs(pos) > floor], neg[np.abs(neg) > floor]
    rows = [[i, v, "+"] for i, v in enumerate(pos)] + [[i, v, "-"] for i, v in enumerate(neg)]
    _write_table(out, "eigenvalues", ["index", "value", "branch"], rows, fmt)
    report.results["positive_count"] = int(pos.size)
    report.results["negative_count"] = int(neg.size)
    report.results["lowest_positive"] = pos[: cfg["run"]["levels"]].tolist()
    if free:
        ref = np.sort(_free_reference(cfg))
        if massless:
            ref = ref[ref > 0]
        if pos.size == ref.size:
            err = float(np.max(np.abs(pos - ref) / ref))
            report.check("free_spectrum_positive", err, 1e-10)
            err = float(np.max(np.abs(np.sort(-neg) - ref) / ref))
            report.check("free_spectrum_negative", err, 1e-10)
        else:
            report.check("free_spectrum_count", abs(pos.size - ref.size), 0)
    if field.kind == "uniform_B" and params.charge != 0 and kind in ("fw-exact", "cffv"):
        levels = fw.cluster_levels(pos)[: cfg["run"]["levels"]]
        pred = fw.landau_prediction(params, float(np.linalg.norm(field.H_uniform)), len(levels))
        found = np.array([lv for lv, _ in levels])
        rel = (np.abs(found - pred) / pred).tolist()
        report.results["landau"] = {
            "levels": found.tolist(),
            "multiplicities": [m for _, m in levels],
            "predicted": pred.tolist(),
            "relative_errors": rel,
        }
        report.check("landau_levels", max(rel, default=np.inf), 1e-2)


# --- verify ---------------------------------------------------------------------


def _random_state(grid, rng) -> TwoComponentState:
    n = grid.size
    return TwoComponentState(
        grid, rng.standard_normal(n) + 1j * rng.standard_normal(n),
        rng.standard_normal(n) + 1j * rng.standard_normal(n),
    )


def suite_pseudo(cfg: RunConfig, report: RunReport, rng):
    grid, params, field = cfg.grid, cfg.particle, cfg.field
    h = cffv.build_cffv_hamiltonian(field, params, grid)
    report.check("cffv_pseudo_hermiticity", pseudo_hermiticity_residual(h), 1e-12)
    ops = {}
    try:
        ops["step_operator"] = fw.fw_step_operator(field, params, grid, params.mass == 0).U
    except (SpectrumError, ValueError) as exc:
        report.results["step_operator_skipped"] = str(exc)
    try:
        ops["exact_fw"] = fw.exact_fw(cffv.split_meo(field, params, grid)).U
    except (fw.CommutationError, SpectrumError) as exc:
        report.results["exact_fw_skipped"] = str(exc)
    a, b = _random_state(grid, rng), _random_state(grid, rng)
    ref = pseudo_inner(a, b)
    scale = a.l2_norm() * b.l2_norm()
    for name, u in ops.items():
        ok, res = check_pseudo_unitary(u, 1e-10)
        report.check(f"{name}_pseudo_unitary", res, 1e-10, ok)
        moved = pseudo_inner(u @ a, u @ b)
        report.check(f"{name}_inner_invariance", abs(moved - ref) / scale, 1e-10)


def _n_values(cfg: RunConfig) -> list[float]:
    nv = cfg["run"]["n_values"]
    if nv:
        return [float(x) for x in nv]
    m = cfg.particle.mass
    return [m, 2 * m, 5 * m] if m > 0 else [0.5, 1.0, 3.0]


def suite_nindep(cfg: RunConfig, report: RunReport, rng):
    params = cfg.particle
    rep = fw.verify_n_independence(
        cfg.field, params, cfg.grid, _n_values(cfg), exclude_zero_mode=params.mass == 0
    )
    report.results["nindep"] = rep
    report.check("fw_n_independence", rep["max_relative_difference"], 1e-9)
    # the CFFV Hamiltonian itself must change with N, otherwise the test is vacuous
    control = rep["cffv_max_relative_difference"]
    report.check("cffv_n_dependence_control", control, 1e-2, control >= 1e-2)


def suite_commutators(cfg: RunConfig, report: RunReport, rng):
    field = cfg.field
    rep = fw.verify_commutator_identities(field, cfg.particle, cfg.grid)
    report.results["commutators"] = rep
    tol = 1e-4 if field.windowed else 1e-8
    report.check("single_commutator", rep["single_commutator_residual"], tol)
    report.check("double_commutator", rep["double_commutator_residual"], tol)


def _default_packet(cfg: RunConfig) -> TwoComponentState:
    wp = cfg["wavepacket"]
    spec = sc.WavepacketSpec(tuple(wp["r0"]), tuple(wp["pi0"]), float(wp["sigma"]), float(wp["dt"]))
    phi, _ = sc.fw_wavepacket(spec, cfg.field, cfg.particle, cfg.grid)
    step = fw.fw_step_operator(cfg.field, cfg.particle, cfg.grid)
    return step.U_inv @ TwoComponentState(cfg.grid, phi, np.zeros_like(phi))


def suite_dkp(cfg: RunConfig, report: RunReport, rng):
    params = cfg.particle
    if params.mass <= 0:
        report.results["refusal"] = (
            "the DKP equation is inapplicable to massless particles (m = 0)"
        )
        report.check("dkp_applicable", 0.0, 0.0, False, reason="massless")
        return
    report.results["beta_algebra"] = dkp.beta_algebra_report()
    dist = dkp.reduced_vs_cffv(cfg.field, params, cfg.grid)
    report.check("reduced_equals_cffv", dist, 1e-10)
    psi0 = _default_packet(cfg)
    run = cfg["run"]
    rep = dkp.check_dkp_cffv_equivalence(cfg.field, params, psi0, run["dt"], run["steps"])
    report.results["twin_evolution"] = rep
    report.check("twin_pseudo_discrepancy", rep["max_pseudo_discrepancy"], 1e-8)
    report.check("twin_l2_discrepancy", rep["max_l2_discrepancy"], 1e-8)


def suite_hbar(cfg: RunConfig, report: RunReport, rng):
    params = cfg.particle
    tr = cfg["trajectory"]
    phase = sc.PhasePoint(tr["r0"], tr["pi0"])
    base = params.replace(hbar_scale=1.0)
    double = params.replace(hbar_scale=2.0)
    t1, t2 = sc.hs_energy(phase, cfg.field, base), sc.hs_energy(phase, cfg.field, double)
    worst = 0.0
    for name in ("quadrupole", "mixed_polarizability", "electric_polarizability"):
        a, b = getattr(t1, name), getattr(t2, name)
        worst = max(worst, abs(b - 4 * a) / max(abs(4 * a), 1e-300) if a else abs(b))
    report.check("hs_terms_hbar_squared", worst, 1e-12)
    report.check(
        "classical_terms_unchanged",
        abs(t1.classical - t2.classical) / max(abs(t1.classical), 1e-300), 1e-15,
    )
    f1 = sc.force_terms(phase, cfg.field, base)
    f2 = sc.force_terms(phase, cfg.field, double)
    worst = 0.0
    for name in ("gradient", "field_squared", "polarization"):
        a, b = f1[name], f2[name]
        s = np.linalg.norm(4 * a)
        worst = max(worst, float(np.linalg.norm(b - 4 * a) / s) if s else float(np.linalg.norm(b)))
    report.check("force_corrections_hbar_squared", worst, 1e-12)
    lorentz = f1["electric"] + f1["magnetic"]
    zero = sc.force(phase, cfg.field, params.replace(hbar_scale=0.0))
    report.check(
        "lorentz_limit", float(np.linalg.norm(zero - lorentz)), 1e-15 * max(1.0, np.linalg.norm(lorentz)),
    )


SUITE_FUNCS = {
    "pseudo": suite_pseudo,
    "nindep": suite_nindep,
    "commutators": suite_commutators,
    "dkp": suite_dkp,
    "hbar": suite_hbar,
}


def cmd_verify(cfg: RunConfig, report: RunReport, out: Path, fmt: str, suite: str, rng):
    if suite not in SUITE_FUNCS:
        raise ConfigError(f"unknown suite {suite!r}; expected one of {SUITES}")
    report.results["suite"] = suite
    SUITE_FUNCS[suite](cfg, report, rng)


# --- evolve / trajectory / ehrenfest / dipoles ---------------------------------


def _initial_state(cfg: RunConfig) -> tuple[TwoComponentState, float | None]:
    wp = cfg["wavepacket"]
    if float(wp["sigma"]) <= 0:
        # snap to the nearest lattice momentum so the wave is an exact eigenstate
        grid = cfg.grid
        k = np.zeros(grid.dim)
        want = np.asarray(wp["pi0"], dtype=float)[: grid.dim]
        k[: want.size] = want / cfg.particle.hbar_scale
        k = grid.momenta[np.argmin(np.abs(grid.momenta[None, :] - k[:, None]), axis=1)]
        return cffv.plane_wave_state(grid, k, cfg.particle)
    return _default_packet(cfg), None


def cmd_evolve(cfg: RunConfig, report: RunReport, out: Path, fmt: str):
    grid, params, field = cfg.grid, cfg.particle, cfg.field
    run = cfg["run"]
    psi0, energy = _initial_state(cfg)
    evo = cffv.evolve_cffv(psi0, field, params, run["dt"], run["steps"])
    scale = psi0.l2_norm() ** 2
    report.check("pseudo_norm_drift", evo.max_drift / scale, 1e-8)
    origin = int(np.argmin(np.sum(grid.coords**2, axis=1)))
    rows = []
    amp0 = None
    for t, s, pn in zip(evo.times, evo.states, evo.pseudo_norms):
        psi = cffv.project_kg(s)
        w = np.abs(psi) ** 2
        centre = (w @ grid.coords) / w.sum()
        amp = abs(psi[origin])
        amp0 = amp if amp0 is None else amp0
        rows.append([t, pn, *centre, amp, float(np.angle(psi[origin]))])
    _write_table(
        out, "evolution", ["t", "pseudo_norm", "x", "y", "z", "amplitude_origin", "phase_origin"],
        rows, fmt,
    )
    if len(evo.states) >= 3:
        report.results["kg_residual"] = cffv.kg_residual(evo, field, params)
    if energy is not None:
        amps = np.array([r[5] for r in rows])
        report.check("plane_wave_amplitude", float(np.max(np.abs(amps - amps[0]))), 1e-8)
        psi_t = cffv.project_kg(evo.states[-1])[origin]
        psi_0 = cffv.project_kg(evo.states[0])[origin]
        phase = float(np.angle(psi_t / psi_0))
        expect = float(np.angle(np.exp(-1j * energy * evo.times[-1] / params.hbar_scale)))
        report.results["plane_wave_energy"] = float(energy)
        report.results["phase_error"] = float(np.angle(np.exp(1j * (phase - expect))))


def cmd_trajectory(cfg: RunConfig, report: RunReport, out: Path, fmt: str):
    params, field = cfg.particle, cfg.field
    tr = cfg["trajectory"]
    phase0 = sc.PhasePoint(tr["r0"], tr["pi0"])
    traj = sc.integrate_trajectory(phase0, field, params, tr["t_end"], tr["dt"], tr["force_law"])
    _write_table(out, "trajectory", list(traj.COLUMNS), list(traj.rows()), fmt)
    report.results["energy_drift_rate"] = traj.energy_drift_rate()
    report.results["force_law_difference"] = sc.force_law_difference(phase0, field, params)
    report.check("energy_drift_per_time", traj.energy_drift_rate(), 1e-6)
    h = field.H_uniform
    if field.kind == "uniform_B" and params.hbar_scale == 0 and params.charge != 0 and h.any():
        eh = abs(params.charge) * float(np.linalg.norm(h))
        eps = float(np.sqrt(params.mass**2 + phase0.pi @ phase0.pi))
        period = 2 * np.pi * eps / eh
        radius = float(np.linalg.norm(np.cross(phase0.pi, h / np.linalg.norm(h)))) / eh
        revs = int(traj.times[-1] // period)
        report.results["cyclotron"] = {"period": period, "radius": radius, "revolutions": revs}
        if revs >= 1:
            one = sc.integrate_trajectory(phase0, field, params, period, period / round(period / tr["dt"]))
            closure = float(np.linalg.norm(one.r[-1] - one.r[0])) / radius
            report.check("cyclotron_closure_per_revolution", closure, 1e-4)


def cmd_ehrenfest(cfg: RunConfig, report: RunReport, out: Path, fmt: str):
    wp = cfg["wavepacket"]
    spec = sc.WavepacketSpec(tuple(wp["r0"]), tuple(wp["pi0"]), float(wp["sigma"]), float(wp["dt"]))
    rep = sc.ehrenfest_compare(spec, cfg.field, cfg.particle, cfg.grid, float(wp["t_end"]))
    rows = [
        [t, *rq, *pq, *rc, *pc]
        for t, rq, pq, rc, pc in zip(
            rep["times"], rep["quantum_r"], rep["quantum_pi"], rep["classical_r"], rep["classical_pi"]
        )
    ]
    cols = ["t"] + [f"{a}_{c}" for a in ("qr", "qpi", "cr", "cpi") for c in "xyz"]
    _write_table(out, "ehrenfest", cols, rows, fmt)
    report.results["warnings"] = rep["warnings"]
    report.results["max_lower_fraction"] = rep["max_lower_fraction"]
    report.check("centroid_position", rep["position_deviation"], rep["tolerance"])
    report.check("centroid_momentum", rep["momentum_deviation"], rep["tolerance"])


def cmd_dipoles(cfg: RunConfig, report: RunReport, out: Path, fmt: str):
    tr = cfg["trajectory"]
    phase = sc.PhasePoint(tr["r0"], tr["pi0"])
    rep = sc.dipole_gradient_check(phase, cfg.field, cfg.particle)
    terms = sc.hs_energy(phase, cfg.field, cfg.particle).as_dict()
    report.results["hs_terms"] = terms
    report.results["dipoles"] = rep
    report.check("electric_dipole_gradient", rep["d_relative_error"], 1e-6)
    report.check("magnetic_dipole_gradient", rep["mu_relative_error"], 1e-6)
    rows = [[*rep["d"], *rep["mu"]]]
    _write_table(out, "dipoles", ["d_x", "d_y", "d_z", "mu_x", "mu_y", "mu_z"], rows, fmt)


# --- entry point ----------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="TOML config file")
    common.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE",
                        help="override a config value (repeatable)")
    common.add_argument("--out", type=Path, help=f"output directory (default ${OUT_ENV} or ./scalar_fw_out)")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--format", choices=("csv", "json"), default="csv")
    common.add_argument("-v", "--verbose", action="store_true")
    parser = argparse.ArgumentParser(
        prog="scalar-fw", description="CFFV/FW transformations for scalar particles"
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("spectrum", "evolve", "trajectory", "ehrenfest", "dipoles"):
        sub.add_parser(name, parents=[common])
    v = sub.add_parser("verify", parents=[common])
    v.add_argument("suite", help=f"one of {', '.join(SUITES)}")
    return parser


def _out_dir(args) -> Path:
    if args.out is not None:
        return args.out
    return Path(os.environ.get(OUT_ENV, "scalar_fw_out"))


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        text = args.config.read_text() if args.config else None
        cfg = load_config(text, args.set)
    except (ConfigError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    out = _out_dir(args)
    out.mkdir(parents=True, exist_ok=True)
    report = RunReport(args.command, cfg.echo(), args.seed)
    rng = np.random.default_rng(args.seed)
    start = time.perf_counter()
    try:
        if args.command == "verify":
            cmd_verify(cfg, report, out, args.format, args.suite, rng)
        else:
            COMMANDS[args.command](cfg, report, out, args.format)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, RuntimeError) as exc:
        report.results["error"] = f"{type(exc).__name__}: {exc}"
        report.check("completed", 1.0, 0.0, False)
    _dump(out / "report.json", report.as_dict())
    _dump(out / "timing.json", {"command": args.command, "wall_time_s": time.perf_counter() - start})
    for c in report.checks:
        print(f"{'PASS' if c['passed'] else 'FAIL'} {c['name']}: {c['value']:.3e} (tol {c['tolerance']:.1e})")
    if "error" in report.results:
        print(report.results["error"], file=sys.stderr)
    return 0 if report.passed else 1


COMMANDS = {
    "spectrum": cmd_spectrum,
    "evolve": cmd_evolve,
    "trajectory": cmd_trajectory,
    "ehrenfest": cmd_ehrenfest,
    "dipoles": cmd_dipoles,
}


if __name__ == "__main__":
    sys.exit(main())
