"""Random field ensembles for the inequality harness and the stability constants.

Three families, all seeded through ``numpy.random.Generator``:

* span fields with coefficients ``lambda_j**(-s) * N(0, 1)``;
* grid fields built from fixed sine series (plain, or as the discrete curl of
  a stream function for solenoidal fields), so the same seed gives the same
  continuum field on every grid (needed for refinement studies);
* discrete Stokes responses to point forces, the prototypical W^{1,p} fields.
"""

from __future__ import annotations

import numpy as np

from nsgalerkin.forcing import point_weights
from nsgalerkin.grid import Grid
from nsgalerkin.stokes_basis import StokesEigenbasis, stokes_solve

SMOOTHNESS = (0.5, 1.0, 1.5)
SINE_MODES = 8


def span_coefficients(B: StokesEigenbasis, rng: np.random.Generator, s: float) -> np.ndarray:
    return B.lambdas ** (-s) * rng.standard_normal(B.k)


def sine_field(g: Grid, rng: np.random.Generator, s: float, modes: int = SINE_MODES) -> np.ndarray:
    """Flat no-slip field ``sum a_mn (m^2 + n^2)^(-s) sin(m pi x) sin(n pi y)`` per component."""
    x, y, comp = g.face_coordinates()
    m = np.arange(1, modes + 1)
    decay = (m[:, None] ** 2 + m[None, :] ** 2) ** (-float(s))
    coef = rng.standard_normal((2, modes, modes)) * decay[None]
    sx = np.sin(np.pi * np.outer(x, m))
    sy = np.sin(np.pi * np.outer(y, m))
    vals = np.einsum("pi,cij,pj->cp", sx, coef, sy)
    return np.where(comp == 0, vals[0], vals[1])


def stream_field(g: Grid, rng: np.random.Generator, s: float, modes: int = SINE_MODES) -> np.ndarray:
    """Flat discretely divergence-free no-slip field, the discrete curl of a stream function.

    The stream function ``sum a_mn phi_m(x) phi_n(y)`` with
    ``phi_m(x) = sin(pi x) sin(m pi x)`` vanishes to second order on the
    wall, so both velocity components vanish there in the continuum.
    """
    n, h = g.n, g.h
    m = np.arange(1, modes + 1)
    decay = (m[:, None] ** 2 + m[None, :] ** 2) ** (-float(s) - 0.5)
    coef = rng.standard_normal((modes, modes)) * decay
    x = np.arange(n + 1) * h
    phi = np.sin(np.pi * x)[:, None] * np.sin(np.pi * np.outer(x, m))
    psi = phi @ coef @ phi.T  # nodes (i, j)
    u = (psi[:, 1:] - psi[:, :-1]) / h
    v = -(psi[1:, :] - psi[:-1, :]) / h
    return g.join_full(u, v)


def point_stokes_field(g: Grid, rng: np.random.Generator) -> np.ndarray:
    """Discrete Stokes velocity for a unit point force at a random interior point."""
    loc = rng.uniform(0.25, 0.75, size=2)
    direction = rng.standard_normal(2)
    direction /= np.linalg.norm(direction)
    load = (direction @ point_weights(g, loc)) / g.cell_area
    return stokes_solve(g, load)


def smoothness_cycle(i: int) -> float:
    return SMOOTHNESS[i % len(SMOOTHNESS)]
