"""Desk-scale laboratory for minimizing the rescaled vector Allen-Cahn energy

    J_eps(u) = int_Omega ( eps/2 |grad u|^2 + W(u)/eps ) dx,   u = g on the boundary,

on 2D domains, together with the 1D heteroclinic machinery (connection actions
sigma, sigma_plus, sigma_star), layer diagnostics, and sharp energy-bound
bookkeeping.

Subpackages map one-to-one onto the pipeline stages:

- :mod:`aclab.potential`      multi-well potentials W and their well constants
- :mod:`aclab.connection1d`   1D action minimizers and the fiber classifier
- :mod:`aclab.geometry`       gridded domains (stadium, disc, generic SDF)
- :mod:`aclab.boundary_data`  Dirichlet data (eps-ramp and constant modes)
- :mod:`aclab.energy`         discrete energy, first variation, test fields
- :mod:`aclab.minimize`       semi-implicit gradient flow with multistart
- :mod:`aclab.analysis`       layer classification, decay fits, bound reports
- :mod:`aclab.harness`        config, runs, sweeps, snapshots, CLI backend
"""

from . import (
    analysis,
    boundary_data,
    connection1d,
    energy,
    geometry,
    harness,
    minimize,
    potential,
    snapshot,
)

__version__ = "0.1.0"

__all__ = [
    "analysis",
    "boundary_data",
    "connection1d",
    "energy",
    "geometry",
    "harness",
    "minimize",
    "potential",
    "snapshot",
]
