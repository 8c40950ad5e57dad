"""Low-regularity forces and their Galerkin moments.

A force is a small algebraic tree: ``RegularField`` (grid field times an
optional time profile), ``PointForce`` (Dirac mass with a time-dependent
vector amplitude), ``Scaled`` and ``Sum``.  Moments ``<f(t), psi_j>`` are the
face-quadrature inner product for regular fields and the literal duality
pairing ``e . psi_j(x0)`` for point forces, with ``psi_j`` interpolated
bilinearly from its face values.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence, Union

import numpy as np

from nsgalerkin.errors import ConfigurationError, NumericalError, PreconditionError
from nsgalerkin.grid import Grid, VelocityField, flat_norm_W1p
from nsgalerkin.stokes_basis import StokesEigenbasis

__all__ = [
    "Profile",
    "RegularField",
    "PointForce",
    "Scaled",
    "Sum",
    "ForceSpec",
    "AdmissibilityParams",
    "validate_params",
    "force_moments",
    "force_load",
    "compile_force",
    "dual_norm_estimate",
    "point_weights",
    "contains_point_force",
    "is_time_independent",
]


@dataclass(frozen=True)
class Profile:
    """Scalar time profile ``t -> value``.

    kinds: ``constant`` (``scale``), ``sine`` (``scale * sin(omega t + phase)``),
    ``cosine``, ``power`` (``scale * t**exponent``, integrable singularity
    allowed at ``t = 0``) and ``exp`` (``scale * exp(-rate t)``).
    """

    kind: str = "constant"
    scale: float = 1.0
    omega: float = 1.0
    phase: float = 0.0
    exponent: float = 0.0
    rate: float = 0.0

    def __post_init__(self):
        if self.kind not in {"constant", "sine", "cosine", "power", "exp"}:
            raise ConfigurationError(f"unknown time profile kind {self.kind!r}")

    def __call__(self, t: float) -> float:
        k = self.kind
        if k == "constant":
            return self.scale
        if k == "sine":
            return self.scale * math.sin(self.omega * t + self.phase)
        if k == "cosine":
            return self.scale * math.cos(self.omega * t + self.phase)
        if k == "exp":
            return self.scale * math.exp(-self.rate * t)
        if t == 0.0 and self.exponent < 0:
            return math.inf
        return self.scale * t**self.exponent

    @property
    def is_constant(self) -> bool:
        return self.kind == "constant" or (self.kind == "power" and self.exponent == 0.0)


def _as_profile(p) -> Callable[[float], float]:
    if p is None:
        return Profile()
    if isinstance(p, (int, float)):
        return Profile(scale=float(p))
    return p


@dataclass(frozen=True, eq=False)
class RegularField:
    """``profile(t) * field`` or ``builder(t)`` for a grid force field."""

    field: Union[VelocityField, Callable[[float], VelocityField]]
    profile: Callable[[float], float] | None = None

    def spatial(self, t: float) -> VelocityField:
        if isinstance(self.field, VelocityField):
            return self.field
        return self.field(t)

    def factor(self, t: float) -> float:
        return float(_as_profile(self.profile)(t))


@dataclass(frozen=True, eq=False)
class PointForce:
    """Dirac force ``amplitude(t) * delta_{location}``."""

    location: tuple
    amplitude: Union[Sequence[float], Callable[[float], Sequence[float]]] = (1.0, 0.0)
    profile: Callable[[float], float] | None = None

    def vector(self, t: float) -> np.ndarray:
        amp = self.amplitude(t) if callable(self.amplitude) else self.amplitude
        return np.asarray(amp, dtype=float).reshape(2) * float(_as_profile(self.profile)(t))


@dataclass(frozen=True, eq=False)
class Scaled:
    factor: float
    force: "ForceSpec"


@dataclass(frozen=True, eq=False)
class Sum:
    terms: tuple

    def __init__(self, terms):
        object.__setattr__(self, "terms", tuple(terms))


ForceSpec = Union[RegularField, PointForce, Scaled, Sum, None]


# -- admissibility ------------------------------------------------------------


@dataclass(frozen=True)
class AdmissibilityParams:
    """Accepted exponents with the derived facts ``q > 4`` and ``p' = p/(p-1)``."""

    p: float
    q: float
    p_conjugate: float
    q_exceeds_4: bool


def validate_params(p: float, q: float) -> AdmissibilityParams:
    """Accept ``(p, q)`` iff ``4/3 <= p < 2`` and ``q > 2p/(p-1)``."""
    p = float(p)
    q = float(q)
    if not (np.isfinite(p) and np.isfinite(q)):
        raise ConfigurationError(f"exponents must be finite, got p={p}, q={q}")
    if not p >= 4.0 / 3.0:
        raise ConfigurationError(f"inadmissible exponents: need p >= 4/3, got p={p}")
    if not p < 2.0:
        raise ConfigurationError(f"inadmissible exponents: need p < 2, got p={p}")
    bound = 2.0 * p / (p - 1.0)
    if not q > bound:
        raise ConfigurationError(f"inadmissible exponents: need q > 2p/(p-1) = {bound:g}, got q={q}")
    return AdmissibilityParams(p=p, q=q, p_conjugate=p / (p - 1.0), q_exceeds_4=q > 4.0)


# -- point evaluation ---------------------------------------------------------


def point_weights(g: Grid, location) -> np.ndarray:
    """Bilinear interpolation weights as two flat rows ``(2, n_dof)``.

    Row 0 evaluates the first component at ``location``, row 1 the second.
    """
    x, y = (float(c) for c in location)
    margin = 2.0 * g.h
    if min(x, y, 1.0 - x, 1.0 - y) < margin - 1e-12:
        raise PreconditionError(
            f"point force at ({x}, {y}) is closer than 2h = {margin:g} to the boundary"
        )
    n, h = g.n, g.h
    w = np.zeros((2, g.n_dof))
    # u lives at (i h, (j + 1/2) h)
    i0 = int(math.floor(x / h))
    sx = x / h - i0
    j0 = int(math.floor(y / h - 0.5))
    sy = y / h - 0.5 - j0
    for di, wx in ((0, 1 - sx), (1, sx)):
        for dj, wy in ((0, 1 - sy), (1, sy)):
            w[0, (i0 + di - 1) * n + (j0 + dj)] += wx * wy
    # v lives at ((i + 1/2) h, j h)
    i0 = int(math.floor(x / h - 0.5))
    sx = x / h - 0.5 - i0
    j0 = int(math.floor(y / h))
    sy = y / h - j0
    for di, wx in ((0, 1 - sx), (1, sx)):
        for dj, wy in ((0, 1 - sy), (1, sy)):
            w[1, g.n_u + (i0 + di) * (n - 1) + (j0 + dj - 1)] += wx * wy
    return w


# -- reductions ---------------------------------------------------------------


def _leaves(F, factor=1.0):
    """Flatten a force tree into ``(factor, leaf)`` pairs."""
    if F is None:
        return []
    if isinstance(F, (RegularField, PointForce)):
        return [(factor, F)]
    if isinstance(F, Scaled):
        return _leaves(F.force, factor * float(F.factor))
    if isinstance(F, Sum):
        out = []
        for term in F.terms:
            out.extend(_leaves(term, factor))
        return out
    raise ConfigurationError(f"not a force specification: {type(F).__name__}")


def contains_point_force(F) -> bool:
    return any(isinstance(leaf, PointForce) for _, leaf in _leaves(F))


def is_time_independent(F) -> bool:
    for _, leaf in _leaves(F):
        if isinstance(leaf, RegularField):
            if not isinstance(leaf.field, VelocityField):
                return False
            prof = _as_profile(leaf.profile)
            if not (isinstance(prof, Profile) and prof.is_constant):
                return False
        else:
            if callable(leaf.amplitude):
                return False
            prof = _as_profile(leaf.profile)
            if not (isinstance(prof, Profile) and prof.is_constant):
                return False
    return True


def force_load(F, g: Grid, t: float) -> np.ndarray:
    """The force as a flat face vector (Dirac masses spread as ``weights / h^2``)."""
    out = np.zeros(g.n_dof)
    for fac, leaf in _leaves(F):
        if isinstance(leaf, RegularField):
            out += fac * leaf.factor(t) * leaf.spatial(t).flat()
        else:
            amp = leaf.vector(t)
            out += fac * (amp @ point_weights(g, leaf.location)) / g.cell_area
    return out


def compile_force(F, B: StokesEigenbasis) -> Callable[[float], np.ndarray]:
    """Return ``t -> <f(t), psi_j>`` with the spatial work done once."""
    g = B.grid
    static = []
    dynamic = []
    for fac, leaf in _leaves(F):
        if isinstance(leaf, PointForce):
            vals = point_weights(g, leaf.location) @ B.modes  # (2, k)
            static.append((fac, leaf.vector, vals.T))
        elif isinstance(leaf.field, VelocityField):
            mom = B.coefficients(leaf.field)
            static.append((fac, leaf.factor, mom))
        else:
            dynamic.append((fac, leaf))
    k = B.k

    def leaf_value(fac, amp, vals, t):
        with np.errstate(invalid="ignore", over="ignore"):
            a = amp(t)
            return fac * (vals @ a if vals.ndim == 2 else a * vals)

    def moments(t: float, shift: float | None = None) -> np.ndarray:
        """Moments at ``t``; a leaf that is singular at ``t`` is read at ``t + shift`` if given."""
        out = np.zeros(k)
        for fac, amp, vals in static:
            val = leaf_value(fac, amp, vals, t)
            if shift is not None and not np.all(np.isfinite(val)):
                val = leaf_value(fac, amp, vals, t + shift)
            out += val
        for fac, leaf in dynamic:
            out += fac * leaf.factor(t) * B.coefficients(leaf.spatial(t))
        if not np.all(np.isfinite(out)):
            raise NumericalError(f"force moments are not finite at t={t}")
        return out

    return moments


def force_moments(F, B: StokesEigenbasis, t: float) -> np.ndarray:
    """``<f(t), psi_j>`` for ``j = 1..k``."""
    return compile_force(F, B)(t)


def dual_norm_estimate(F, g: Grid, t: float, p: float) -> float:
    """Surrogate W^{-1,p} norm: ``||grad W||_{L^p}`` with ``-lap W = f``, ``W = 0`` on the wall."""
    if not p > 1.0:
        raise ConfigurationError(f"dual norm needs p > 1, got {p}")
    load = force_load(F, g, t)
    if not np.any(load):
        return 0.0
    return flat_norm_W1p(g, g.solve_dirichlet(load), p)
