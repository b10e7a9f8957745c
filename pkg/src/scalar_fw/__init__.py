"""Exact and approximate Foldy-Wouthuysen transformations for scalar particles.

Modules:

- :mod:`operators`  pseudo-metric operator algebra on two-component states
- :mod:`fields`     external electromagnetic field configurations
- :mod:`cffv`       the generalized CFFV Hamiltonian and its time evolution
- :mod:`fw`         exact, staged and closed-form FW Hamiltonians
- :mod:`dkp`        the five-component DKP form and its reduction
- :mod:`semiclassical`  H_s, induced dipoles, force law and trajectories
- :mod:`cli`        the ``scalar-fw`` command
"""

from .cffv import ParticleParams, build_cffv_hamiltonian, evolve_cffv, split_meo
from .fields import FieldConfig, crossed_EH, harmonic_scalar, uniform_B, uniform_E
from .fw import exact_fw, fw_hamiltonian_closed, fw_hamiltonian_numeric, landau_levels
from .grid import Grid, build_grid
from .operators import LinearOperator, TwoComponentState, pseudo_inner

__version__ = "0.1.0"

__all__ = [
    "Grid",
    "build_grid",
    "LinearOperator",
    "TwoComponentState",
    "pseudo_inner",
    "FieldConfig",
    "uniform_E",
    "uniform_B",
    "harmonic_scalar",
    "crossed_EH",
    "ParticleParams",
    "build_cffv_hamiltonian",
    "split_meo",
    "evolve_cffv",
    "exact_fw",
    "fw_hamiltonian_closed",
    "fw_hamiltonian_numeric",
    "landau_levels",
]
