"""Analytic stationary electromagnetic field configurations.

Gaussian units: the magnetic field is written H and a charge ``e`` feels
``e(E + v x H)``.  Every builtin returns its potentials, field strengths
and the gradient tensor ``dE[i, j] = dE_j/dx_i`` in closed form.

Polynomial scalar potentials do not fit on a periodic cell.  When the
field carries a ``window_width`` and a ``cell_length`` the scalar
potential is multiplied by a C-infinity window that is flat in the
interior and vanishes with all derivatives at the cell faces; the
returned E and dE include the window's derivatives.  Vector potentials
are never windowed, which keeps magnetic fields exactly uniform.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Mapping

import numpy as np

KINDS = ("free", "uniform_E", "uniform_B", "harmonic_scalar", "crossed_EH", "polynomial")
GAUGES = ("symmetric", "landau")

_VEC_E = ("Ex", "Ey", "Ez")
_VEC_H = ("Hx", "Hy", "Hz")
_POLY = ("phi0", "gx", "gy", "gz", "qxx", "qyy", "qzz", "qxy", "qxz", "qyz")

PARAMETERS: Mapping[str, tuple[str, ...]] = {
    "free": (),
    "uniform_E": _VEC_E,
    "uniform_B": _VEC_H,
    "harmonic_scalar": ("k",),
    "crossed_EH": _VEC_E + _VEC_H,
    "polynomial": _POLY + _VEC_H,
}


@dataclass(frozen=True)
class FieldSample:
    phi: np.ndarray  # (...,)
    A: np.ndarray  # (..., 3)
    E: np.ndarray  # (..., 3)
    H: np.ndarray  # (..., 3)
    dE: np.ndarray  # (..., 3, 3), dE[..., i, j] = dE_j/dx_i
    dH: np.ndarray  # (..., 3, 3)


@dataclass(frozen=True)
class FieldConfig:
    kind: str = "free"
    params: Mapping[str, float] = field(default_factory=dict)
    gauge: str = "symmetric"
    window_width: float = 0.0
    cell_length: float | None = None
    stationary: bool = True

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown field kind {self.kind!r}; expected one of {KINDS}")
        allowed = PARAMETERS[self.kind]
        unknown = set(self.params) - set(allowed)
        if unknown:
            raise ValueError(
                f"field kind {self.kind!r} does not take parameters {sorted(unknown)}"
            )
        full = {k: float(self.params.get(k, 0.0)) for k in allowed}
        object.__setattr__(self, "params", MappingProxyType(full))
        if self.gauge not in GAUGES:
            raise ValueError(f"unknown gauge {self.gauge!r}; expected one of {GAUGES}")
        if self.gauge == "landau" and (self.H_uniform[0] or self.H_uniform[1]):
            raise ValueError("landau gauge supports magnetic fields along z only")
        if self.window_width < 0:
            raise ValueError("window_width must be non-negative")
        if self.windowed and 2 * self.window_width >= self.cell_length:
            raise ValueError("window_width must be below half the cell length")

    def __hash__(self):
        return hash((self.kind, tuple(sorted(self.params.items())), self.gauge,
                     self.window_width, self.cell_length, self.stationary))

    def __eq__(self, other):
        if not isinstance(other, FieldConfig):
            return NotImplemented
        return hash(self) == hash(other) and dict(self.params) == dict(other.params)

    @property
    def windowed(self) -> bool:
        return self.window_width > 0 and self.cell_length is not None

    @property
    def E_uniform(self) -> np.ndarray:
        return np.array([self.params.get(k, 0.0) for k in _VEC_E])

    @property
    def H_uniform(self) -> np.ndarray:
        return np.array([self.params.get(k, 0.0) for k in _VEC_H])

    @property
    def has_magnetic(self) -> bool:
        return bool(np.any(self.H_uniform))

    def with_cell(self, cell_length: float | None) -> "FieldConfig":
        return FieldConfig(
            self.kind, dict(self.params), self.gauge, self.window_width, cell_length,
            self.stationary,
        )

    def _scalar_parts(self, r):
        """Unwindowed phi, grad(phi), Hessian(phi) at points r (..., 3)."""
        p = self.params
        shape = r.shape[:-1]
        if self.kind in ("uniform_E", "crossed_EH"):
            e = self.E_uniform
            phi = -r @ e
            grad = np.broadcast_to(-e, r.shape).copy()
            hess = np.zeros(shape + (3, 3))
        elif self.kind == "harmonic_scalar":
            k = p["k"]
            phi = 0.5 * k * np.sum(r * r, axis=-1)
            grad = k * r
            hess = np.broadcast_to(k * np.eye(3), shape + (3, 3)).copy()
        elif self.kind == "polynomial":
            g = np.array([p["gx"], p["gy"], p["gz"]])
            q = np.array(
                [
                    [p["qxx"], p["qxy"], p["qxz"]],
                    [p["qxy"], p["qyy"], p["qyz"]],
                    [p["qxz"], p["qyz"], p["qzz"]],
                ]
            )
            phi = p["phi0"] + r @ g + 0.5 * np.einsum("...i,ij,...j->...", r, q, r)
            grad = g + r @ q
            hess = np.broadcast_to(q, shape + (3, 3)).copy()
        else:
            phi = np.zeros(shape)
            grad = np.zeros(r.shape)
            hess = np.zeros(shape + (3, 3))
        return phi, grad, hess

    def _vector_potential(self, r):
        h = self.H_uniform
        if self.kind not in ("uniform_B", "crossed_EH", "polynomial") or not h.any():
            return np.zeros(r.shape)
        if self.gauge == "landau":
            a = np.zeros(r.shape)
            a[..., 1] = h[2] * r[..., 0]
            return a
        return 0.5 * np.cross(h, r)

    def wrap(self, r) -> np.ndarray:
        """Map points onto the periodic cell [-L/2, L/2) when windowed."""
        r = np.asarray(r, dtype=float)
        if not self.windowed:
            return r
        half = 0.5 * self.cell_length
        return (r + half) % self.cell_length - half

    def evaluate(self, r, t: float = 0.0) -> FieldSample:
        r = self.wrap(np.asarray(r, dtype=float))
        if r.shape[-1] != 3:
            raise ValueError("points must have three components")
        phi, grad, hess = self._scalar_parts(r)
        if self.windowed:
            w, dw, d2w = window(r, self.cell_length, self.window_width)
            grad_w = w[..., None] * grad + phi[..., None] * dw
            hess_w = (
                w[..., None, None] * hess
                + dw[..., :, None] * grad[..., None, :]
                + grad[..., :, None] * dw[..., None, :]
                + phi[..., None, None] * d2w
            )
            phi, grad, hess = w * phi, grad_w, hess_w
        shape = r.shape[:-1]
        return FieldSample(
            phi=phi,
            A=self._vector_potential(r),
            E=-grad,
            H=np.broadcast_to(self.H_uniform, r.shape).copy(),
            dE=-hess,
            dH=np.zeros(shape + (3, 3)),
        )


def eval_field(field: FieldConfig, r, t: float = 0.0) -> FieldSample:
    """Potentials, fields and field gradients at points ``r`` (shape (..., 3))."""
    return field.evaluate(r, t)


def _bump(u):
    """exp(-1/u) for u > 0 and its first two derivatives."""
    u = np.asarray(u, dtype=float)
    g = np.zeros_like(u)
    g1 = np.zeros_like(u)
    g2 = np.zeros_like(u)
    pos = u > 0
    up = u[pos]
    e = np.exp(-1.0 / up)
    g[pos] = e
    g1[pos] = e / up**2
    g2[pos] = e * (1.0 / up**4 - 2.0 / up**3)
    return g, g1, g2


def _smooth_step_down(u):
    """C-infinity step from 1 (u <= 0) to 0 (u >= 1), with u-derivatives."""
    u = np.clip(u, 0.0, 1.0)
    a, a1, a2 = _bump(1.0 - u)
    b, b1, b2 = _bump(u)
    # d/du of a(1-u) flips sign
    a1, a2 = -a1, a2
    d = a + b
    d1 = a1 + b1
    d2 = a2 + b2
    s = a / d
    s1 = a1 / d - a * d1 / d**2
    s2 = a2 / d - 2 * a1 * d1 / d**2 - a * d2 / d**2 + 2 * a * d1**2 / d**3
    return s, s1, s2


def window_1d(x, cell_length: float, width: float):
    """Flat-top window on one axis with first and second derivatives."""
    x = np.asarray(x, dtype=float)
    inner = 0.5 * cell_length - width
    u = (np.abs(x) - inner) / width
    s, s1, s2 = _smooth_step_down(u)
    inside = u <= 0
    s1 = np.where(inside, 0.0, s1)
    s2 = np.where(inside, 0.0, s2)
    return s, s1 * np.sign(x) / width, s2 / width**2


def window(r, cell_length: float, width: float):
    """Product window over the three axes: value, gradient, Hessian."""
    r = np.asarray(r, dtype=float)
    vals = [window_1d(r[..., i], cell_length, width) for i in range(3)]
    w = vals[0][0] * vals[1][0] * vals[2][0]
    shape = r.shape[:-1]
    grad = np.zeros(shape + (3,))
    hess = np.zeros(shape + (3, 3))
    for i in range(3):
        others = [vals[j][0] for j in range(3) if j != i]
        grad[..., i] = vals[i][1] * others[0] * others[1]
        hess[..., i, i] = vals[i][2] * others[0] * others[1]
        for j in range(3):
            if j == i:
                continue
            k = 3 - i - j
            hess[..., i, j] = vals[i][1] * vals[j][1] * vals[k][0]
    return w, grad, hess


def uniform_E(Ex=0.0, Ey=0.0, Ez=0.0, **kw) -> FieldConfig:
    return FieldConfig("uniform_E", {"Ex": Ex, "Ey": Ey, "Ez": Ez}, **kw)


def uniform_B(Hx=0.0, Hy=0.0, Hz=0.0, **kw) -> FieldConfig:
    return FieldConfig("uniform_B", {"Hx": Hx, "Hy": Hy, "Hz": Hz}, **kw)


def harmonic_scalar(k: float, **kw) -> FieldConfig:
    return FieldConfig("harmonic_scalar", {"k": k}, **kw)


def crossed_EH(E=(0.0, 0.0, 0.0), H=(0.0, 0.0, 0.0), **kw) -> FieldConfig:
    params = dict(zip(_VEC_E, map(float, E)))
    params.update(zip(_VEC_H, map(float, H)))
    return FieldConfig("crossed_EH", params, **kw)


FREE = FieldConfig("free")
