"""TOML run configuration.

Sections and keys (defaults in :data:`DEFAULTS`)::

    [grid]        dim, points, length
    [particle]    mass, charge, cffv_n, hbar_scale
    [field]       kind, gauge, window_width, plus the kind's parameters
                  (Ex, Ey, Ez, Hx, Hy, Hz, k, phi0, gx, ..., qyz)
    [run]         hamiltonian, dt, steps, n_values, levels
    [wavepacket]  r0, pi0, sigma, dt, t_end
    [trajectory]  r0, pi0, dt, t_end, force_law

Precedence is ``--set`` override > file > default.  Unknown sections or
keys are rejected with the line on which they appear.
"""

from __future__ import annotations

import copy
import re
import sys
from dataclasses import dataclass
from typing import Any

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .cffv import ParticleParams
from .fields import PARAMETERS, FieldConfig
from .grid import Grid, build_grid

DEFAULTS: dict[str, dict[str, Any]] = {
    "grid": {"dim": 1, "points": 64, "length": 20.0},
    "particle": {"mass": 1.0, "charge": 1.0, "cffv_n": None, "hbar_scale": 1.0},
    "field": {"kind": "free", "gauge": "symmetric", "window_width": 0.0},
    "run": {"hamiltonian": "cffv", "dt": 0.01, "steps": 100, "n_values": None, "levels": 5},
    "wavepacket": {"r0": [0.0], "pi0": [1.0], "sigma": 2.0, "dt": 0.05, "t_end": 10.0},
    "trajectory": {
        "r0": [0.0, 0.0, 0.0], "pi0": [1.0, 0.0, 0.0], "dt": 0.01, "t_end": 10.0,
        "force_law": "corrected_lorentz",
    },
}

HAMILTONIANS = ("cffv", "fw-exact", "fw-closed", "fw-numeric")
_FIELD_KEYS = {k for keys in PARAMETERS.values() for k in keys}


class ConfigError(ValueError):
    """Invalid configuration; the message names the offending line when known."""


def _key_line(text: str, section: str, key: str | None) -> int | None:
    current = None
    for no, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        m = re.match(r"^\[\s*([^\]]+?)\s*\]", line)
        if m:
            current = m.group(1)
            if key is None and current == section:
                return no
            continue
        if key is not None and current == section and re.match(rf"^{re.escape(key)}\s*=", line):
            return no
    return None


def _where(text: str | None, section: str, key: str | None = None) -> str:
    if text is None:
        return ""
    no = _key_line(text, section, key)
    return f" (line {no})" if no else ""


@dataclass(frozen=True)
class RunConfig:
    sections: dict

    def __getitem__(self, name: str) -> dict:
        return self.sections[name]

    @property
    def grid(self) -> Grid:
        g = self.sections["grid"]
        return build_grid(g["dim"], g["points"], g["length"])

    @property
    def particle(self) -> ParticleParams:
        return ParticleParams(**self.sections["particle"])

    @property
    def field(self) -> FieldConfig:
        f = dict(self.sections["field"])
        kind = f.pop("kind")
        gauge = f.pop("gauge")
        width = float(f.pop("window_width"))
        cell = float(self.sections["grid"]["length"]) if width > 0 else None
        return FieldConfig(kind, f, gauge, width, cell)

    def echo(self) -> dict:
        return copy.deepcopy(self.sections)


def _validate(sections: dict, text: str | None) -> None:
    for name, body in sections.items():
        if name not in DEFAULTS:
            raise ConfigError(f"unknown section [{name}]{_where(text, name)}")
        if not isinstance(body, dict):
            raise ConfigError(f"[{name}] must be a table{_where(text, name)}")
        allowed = set(DEFAULTS[name]) | (_FIELD_KEYS if name == "field" else set())
        for key in body:
            if key not in allowed:
                raise ConfigError(f"unknown key {name}.{key}{_where(text, name, key)}")


def _merge(base: dict, extra: dict) -> dict:
    out = copy.deepcopy(base)
    for name, body in extra.items():
        out.setdefault(name, {}).update(body)
    return out


def parse_value(raw: str) -> Any:
    """Interpret an override value with TOML syntax, falling back to a bare string."""
    try:
        return tomllib.loads(f"v = {raw}")["v"]
    except tomllib.TOMLDecodeError:
        return raw


def parse_overrides(items) -> dict:
    out: dict[str, dict] = {}
    for item in items or ():
        if "=" not in item or "." not in item.split("=", 1)[0]:
            raise ConfigError(f"override {item!r} must look like section.key=value")
        lhs, raw = item.split("=", 1)
        section, key = lhs.strip().split(".", 1)
        out.setdefault(section, {})[key] = parse_value(raw.strip())
    return out


def _finish(sections: dict, text: str | None) -> RunConfig:
    f = sections["field"]
    kind = f.get("kind")
    if kind not in PARAMETERS:
        raise ConfigError(f"unknown field kind {kind!r}{_where(text, 'field', 'kind')}")
    for key in list(f):
        if key in _FIELD_KEYS and key not in PARAMETERS[kind]:
            raise ConfigError(
                f"field kind {kind!r} does not take {key!r}{_where(text, 'field', key)}"
            )
    if sections["run"]["hamiltonian"] not in HAMILTONIANS:
        raise ConfigError(
            f"run.hamiltonian must be one of {HAMILTONIANS}{_where(text, 'run', 'hamiltonian')}"
        )
    cfg = RunConfig(sections)
    try:
        cfg.grid, cfg.particle, cfg.field  # noqa: B018 -- construct to validate
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    return cfg


def load_config(text: str | None = None, overrides=None) -> RunConfig:
    """Parse config text (may be None) and apply ``--set`` style overrides."""
    file_sections: dict = {}
    if text is not None:
        try:
            file_sections = tomllib.loads(text)
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"config parse error: {exc}") from exc
        _validate(file_sections, text)
    over = parse_overrides(overrides) if not isinstance(overrides, dict) else overrides
    _validate(over, None)
    sections = _merge(_merge(DEFAULTS, file_sections), over)
    return _finish(sections, text)


def load_field(config_text: str) -> FieldConfig:
    """FieldConfig from config text; only the [field] and [grid] sections matter."""
    return load_config(config_text).field
