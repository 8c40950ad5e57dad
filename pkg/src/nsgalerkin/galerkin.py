"""Faedo-Galerkin system in the Stokes eigenbasis.

The coefficient ODE for ``y_k = sum_j c_j psi_j`` is

    c_j' = g_j(t) - nu lambda_j c_j - nu0 b(y, y, psi_j)
           - b(e1, y, psi_j) - b(y, e2, psi_j)

which covers Navier-Stokes (``nu0 = 1``), Oseen-type linearizations
(``nu0 = 0`` with ``e1``, ``e2``) and pure Stokes.  Time stepping is the
two-stage exponential scheme ETD2RK: the diagonal Stokes part is integrated
exactly and the remaining terms enter through ``phi_1`` and ``phi_2``.

Trajectories keep the predictor (stage) states as well as the step states.
When a trajectory is used as an advecting field or as a source on the same
time grid, stage evaluations read the stage states, so that a linearized run
is the exact tangent of the nonlinear discrete map.
"""

from __future__ import annotations

import csv
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional, Union

import numpy as np

from nsgalerkin.errors import (
    ConfigurationError,
    DimensionError,
    DivergenceError,
    FormatError,
    NumericalError,
)
from nsgalerkin.forcing import compile_force, force_load
from nsgalerkin.grid import Grid, ScalarField, VelocityField, convect_flat, flat_norm_Lr
from nsgalerkin.stokes_basis import StokesEigenbasis

__all__ = [
    "TrilinearTensor",
    "GalerkinConfig",
    "Trajectory",
    "assemble_trilinear",
    "rhs",
    "integrate",
    "energy_residual",
    "recover_pressure",
    "time_norm",
    "same_time_grid",
    "export_csv",
    "save_trajectory",
    "load_trajectory",
    "BLOWUP_THRESHOLD",
]

BLOWUP_THRESHOLD = 1e8
SCHEMES = ("etd2",)


@dataclass(frozen=True, eq=False)
class TrilinearTensor:
    """``values[i, j, l] = b(psi_i, psi_j, psi_l)``."""

    values: np.ndarray

    @property
    def k(self) -> int:
        return self.values.shape[0]

    def contract(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        """``(b(y_a, y_b, psi_j))_j`` for coefficient vectors ``a`` and ``b``."""
        return b @ np.tensordot(a, self.values, axes=(0, 0))

    def form(self, a, b, w) -> float:
        return float(w @ self.contract(a, b))

    def skew_defect(self) -> float:
        return float(np.max(np.abs(self.values + self.values.transpose(0, 2, 1))))


def assemble_trilinear(B: StokesEigenbasis) -> TrilinearTensor:
    g = B.grid
    k = B.k
    out = np.empty((k, k, k))
    for i in range(k):
        conv = convect_flat(g, B.modes[:, i], B.modes)  # columns: M(psi_i) psi_l
        out[i] = g.cell_area * (conv.T @ B.modes)
    return TrilinearTensor(out)


@dataclass
class Trajectory:
    """Coefficient time series with norm monitors.

    ``stages[m]`` is the predictor state of the step from ``times[m]`` to
    ``times[m + 1]``.  ``monitors`` holds per-time ``L2``, ``H1``, ``L4``
    arrays and ``energy_residual`` (residual of the step ending at that time,
    0 at ``t = 0``).
    """

    times: np.ndarray
    coeffs: np.ndarray
    stages: Optional[np.ndarray] = None
    monitors: dict = field(default_factory=dict)
    grid_n: int = 0
    nu: float = 0.0

    def __post_init__(self):
        self.times = np.asarray(self.times, float)
        self.coeffs = np.asarray(self.coeffs, float)
        if self.coeffs.ndim != 2 or self.coeffs.shape[0] != self.times.shape[0]:
            raise DimensionError("coeffs must be (len(times), k)")
        if self.times.size > 1 and np.any(np.diff(self.times) <= 0):
            raise ConfigurationError("trajectory times must be strictly ascending")
        if self.stages is not None:
            self.stages = np.asarray(self.stages, float)
            if self.stages.shape != (self.times.size - 1, self.coeffs.shape[1]):
                raise DimensionError("stages must be (len(times) - 1, k)")

    @property
    def k(self) -> int:
        return self.coeffs.shape[1]

    @property
    def n_steps(self) -> int:
        return self.times.size - 1

    def at(self, t: float) -> np.ndarray:
        """Coefficients linearly interpolated in time."""
        t = float(t)
        ts = self.times
        if t <= ts[0]:
            return self.coeffs[0].copy()
        if t >= ts[-1]:
            return self.coeffs[-1].copy()
        m = int(np.searchsorted(ts, t, side="right")) - 1
        w = (t - ts[m]) / (ts[m + 1] - ts[m])
        return (1 - w) * self.coeffs[m] + w * self.coeffs[m + 1]

    def __add__(self, other: "Trajectory") -> "Trajectory":
        if not np.array_equal(self.times, other.times):
            raise DimensionError("trajectories live on different time grids")
        st = None
        if self.stages is not None and other.stages is not None:
            st = self.stages + other.stages
        return Trajectory(self.times.copy(), self.coeffs + other.coeffs, st, grid_n=self.grid_n, nu=self.nu)

    def __sub__(self, other: "Trajectory") -> "Trajectory":
        return self + other.scaled(-1.0)

    def scaled(self, c: float) -> "Trajectory":
        st = None if self.stages is None else c * self.stages
        return Trajectory(self.times.copy(), c * self.coeffs, st, grid_n=self.grid_n, nu=self.nu)


EField = Union[None, np.ndarray, Trajectory, VelocityField]


@dataclass
class GalerkinConfig:
    """Parameters of the general system; ``e1``, ``e2`` are advecting fields."""

    nu: float
    dt: float
    T: float
    nu0: float = 1.0
    e1: EField = None
    e2: EField = None
    scheme: str = "etd2"

    def __post_init__(self):
        if not self.nu > 0:
            raise ConfigurationError(f"viscosity must be positive, got {self.nu}")
        if not self.nu0 >= 0:
            raise ConfigurationError(f"nu0 must be nonnegative, got {self.nu0}")
        if not (self.dt > 0 and self.T > 0):
            raise ConfigurationError(f"dt and T must be positive, got dt={self.dt}, T={self.T}")
        if self.dt > self.T * (1 + 1e-12):
            raise ConfigurationError(f"dt={self.dt} exceeds the horizon T={self.T}")
        if self.scheme not in SCHEMES:
            raise ConfigurationError(f"unknown time scheme {self.scheme!r}; available: {SCHEMES}")

    @property
    def n_steps(self) -> int:
        return max(1, int(round(self.T / self.dt)))

    def time_grid(self) -> np.ndarray:
        m = self.n_steps
        return self.T * np.arange(m + 1) / m

    def replace(self, **kw) -> "GalerkinConfig":
        data = dict(nu=self.nu, dt=self.dt, T=self.T, nu0=self.nu0, e1=self.e1, e2=self.e2, scheme=self.scheme)
        data.update(kw)
        return GalerkinConfig(**data)


# -- problem assembly ---------------------------------------------------------


class _Advector:
    """Coefficient access for an advecting field at step ``n``, stage ``s``."""

    def __init__(self, e: EField, B: StokesEigenbasis, times: np.ndarray, T3: TrilinearTensor):
        self.kind = "none"
        self.coeff = None
        self.traj = None
        self.res_first = None  # (k, k): b(r, psi_l, psi_j)
        self.res_second = None  # (k, k): b(psi_i, r, psi_j)
        if e is None:
            return
        if isinstance(e, Trajectory):
            if e.k != B.k:
                raise DimensionError(f"advecting trajectory has k={e.k}, basis has k={B.k}")
            self.kind = "traj"
            self.traj = e
            self.aligned = (
                same_time_grid(e.times, times) and e.stages is not None
            )
            return
        if isinstance(e, VelocityField):
            g = B.grid
            flat = e.flat()
            self.coeff = B.coefficients(flat)
            r = flat - B.synthesize(self.coeff)
            if np.max(np.abs(r)) > 0:
                self.res_first = g.cell_area * (B.modes.T @ convect_flat(g, r, B.modes))
                cols = np.stack([convect_flat(g, B.modes[:, i], r) for i in range(B.k)], axis=1)
                self.res_second = g.cell_area * (B.modes.T @ cols)
            self.kind = "steady"
            return
        c = np.asarray(e, float)
        if c.shape != (B.k,):
            raise DimensionError(f"advecting coefficients must have shape ({B.k},), got {c.shape}")
        self.kind = "steady"
        self.coeff = c

    def state(self, n: int, s: int, t: float):
        if self.kind == "none":
            return None
        if self.kind == "steady":
            return self.coeff
        if self.aligned:
            return self.traj.coeffs[n] if s == 0 else self.traj.stages[n]
        return self.traj.at(t)

    def state_at_time(self, t: float):
        if self.kind == "none":
            return None
        if self.kind == "steady":
            return self.coeff
        return self.traj.at(t)


MomentSource = Callable[[int, int, float], np.ndarray]


class _Problem:
    def __init__(self, cfg: GalerkinConfig, T3, F, B: StokesEigenbasis, moments: Optional[MomentSource] = None):
        self.cfg = cfg
        self.B = B
        self.T3 = T3
        self.times = cfg.time_grid()
        self.dt = self.times[1] - self.times[0]
        self.force = compile_force(F, B) if F is not None else None
        self.extra = moments
        self.e1 = _Advector(cfg.e1, B, self.times, T3)
        self.e2 = _Advector(cfg.e2, B, self.times, T3)
        needs_tensor = cfg.nu0 != 0 or self.e1.kind != "none" or self.e2.kind != "none"
        if needs_tensor and T3 is None:
            raise ConfigurationError("a trilinear tensor is required for convective terms")
        if T3 is not None and T3.k != B.k:
            raise DimensionError(f"tensor has k={T3.k}, basis has k={B.k}")
        self.decay = -cfg.nu * B.lambdas

    def forcing(self, n: int, s: int, t: float) -> np.ndarray:
        out = np.zeros(self.B.k)
        if self.force is not None:
            # an integrable singularity of an amplitude at t = 0 is read at dt/2
            shift = 0.5 * self.dt if t == self.times[0] else None
            out = out + self.force(t, shift)
        if self.extra is not None:
            out = out + self.extra(n, s, t)
        return out

    def convective(self, c: np.ndarray, e1, e2) -> np.ndarray:
        out = np.zeros_like(c)
        T3 = self.T3
        if self.cfg.nu0 != 0:
            out -= self.cfg.nu0 * T3.contract(c, c)
        if e1 is not None:
            out -= T3.contract(e1, c)
            if self.e1.res_first is not None:
                out -= self.e1.res_first @ c
        if e2 is not None:
            out -= T3.contract(c, e2)
            if self.e2.res_second is not None:
                out -= self.e2.res_second @ c
        return out

    def explicit(self, n: int, s: int, t: float, c: np.ndarray) -> np.ndarray:
        e1 = self.e1.state(n, s, t)
        e2 = self.e2.state(n, s, t)
        return self.forcing(n, s, t) + self.convective(c, e1, e2)

    def power(self, n: int, t: float, c: np.ndarray) -> float:
        """``<g, y> - a(y, y) - b(y, e2, y)`` at a step state."""
        g = self.forcing(n, 0, t)
        val = float(g @ c) - float(self.cfg.nu * np.sum(self.B.lambdas * c * c))
        e2 = self.e2.state(n, 0, t)
        if e2 is not None:
            val -= float(c @ self.T3.contract(c, e2))
            if self.e2.res_second is not None:
                val -= float(c @ (self.e2.res_second @ c))
        return val


def rhs(c, t, cfg: GalerkinConfig, T3: Optional[TrilinearTensor], F, B: StokesEigenbasis) -> np.ndarray:
    """Right-hand side of the coefficient ODE at time ``t``."""
    c = np.asarray(c, float)
    if c.shape != (B.k,):
        raise DimensionError(f"coefficient vector must have shape ({B.k},), got {c.shape}")
    if not np.all(np.isfinite(c)):
        raise NumericalError("non-finite coefficient vector")
    prob = _Problem(cfg, T3, F, B)
    e1 = prob.e1.state_at_time(t)
    e2 = prob.e2.state_at_time(t)
    g = prob.force(t) if prob.force is not None else np.zeros(B.k)
    return g + prob.decay * c + prob.convective(c, e1, e2)


def _phi_functions(z: np.ndarray):
    """``exp(z)``, ``phi1(z) = (e^z - 1)/z`` and ``phi2(z) = (e^z - 1 - z)/z^2``."""
    E = np.exp(z)
    phi1 = np.empty_like(z)
    phi2 = np.empty_like(z)
    small = np.abs(z) < 0.1
    zs = z[small]
    # Taylor series; nine terms reach round-off for |z| < 0.1
    p1 = np.zeros_like(zs)
    p2 = np.zeros_like(zs)
    term1 = np.ones_like(zs)
    term2 = np.full_like(zs, 0.5)
    for m in range(1, 12):
        p1 += term1
        p2 += term2
        term1 = term1 * zs / (m + 1)
        term2 = term2 * zs / (m + 2)
    phi1[small] = p1
    phi2[small] = p2
    zl = z[~small]
    phi1[~small] = np.expm1(zl) / zl
    phi2[~small] = (np.expm1(zl) - zl) / zl**2
    return E, phi1, phi2


def _fill_monitors(traj: Trajectory, B: StokesEigenbasis) -> None:
    g = B.grid
    C = traj.coeffs
    traj.monitors["L2"] = np.sqrt(np.sum(C * C, axis=1))
    traj.monitors["H1"] = np.sqrt(np.sum(B.lambdas[None, :] * C * C, axis=1))
    l4 = np.empty(C.shape[0])
    chunk = 256
    for start in range(0, C.shape[0], chunk):
        Y = B.synthesize(C[start : start + chunk].T)
        for m in range(Y.shape[1]):
            l4[start + m] = flat_norm_Lr(g, Y[:, m], 4.0)
    traj.monitors["L4"] = l4


def integrate(
    c0,
    cfg: GalerkinConfig,
    T3: Optional[TrilinearTensor],
    F,
    B: StokesEigenbasis,
    moments: Optional[MomentSource] = None,
    monitors: bool = True,
) -> Trajectory:
    """ETD2RK integration of the Galerkin system from ``c0`` on ``[0, T]``.

    ``moments(n, s, t)`` adds a source given per step ``n`` and stage ``s``
    (``s = 0`` at ``times[n]``, ``s = 1`` for the predictor ending at
    ``times[n + 1]``).
    """
    prob = _Problem(cfg, T3, F, B, moments)
    c = np.array(c0, dtype=float)
    if c.shape != (B.k,):
        raise DimensionError(f"initial coefficients must have shape ({B.k},), got {c.shape}")
    times = prob.times
    dt = prob.dt
    m = times.size - 1
    E, phi1, phi2 = _phi_functions(prob.decay * dt)
    coeffs = np.empty((m + 1, B.k))
    stages = np.empty((m, B.k))
    coeffs[0] = c
    for n in range(m):
        t = times[n]
        n0 = prob.explicit(n, 0, t, c)
        a = E * c + dt * phi1 * n0
        n1 = prob.explicit(n, 1, times[n + 1], a)
        c = a + dt * phi2 * (n1 - n0)
        size = float(np.sqrt(c @ c))
        if not np.isfinite(size):
            raise NumericalError(f"non-finite coefficients at t={times[n + 1]:.6g}")
        if size > BLOWUP_THRESHOLD:
            raise DivergenceError(
                f"coefficient norm {size:.3e} exceeded {BLOWUP_THRESHOLD:.0e} at t={times[n + 1]:.6g}",
                time=float(times[n + 1]),
                residual=size,
            )
        stages[n] = a
        coeffs[n + 1] = c
    traj = Trajectory(times, coeffs, stages, grid_n=B.grid.n, nu=cfg.nu)
    if monitors:
        _fill_monitors(traj, B)
        _, series = _energy_series(traj, prob)
        traj.monitors["energy_residual"] = np.concatenate([[0.0], series])
    return traj


def same_time_grid(a: np.ndarray, b: np.ndarray) -> bool:
    """Equal length and equal nodes to 1e-12."""
    return a.shape == b.shape and bool(np.allclose(a, b, rtol=0, atol=1e-12))


def _energy_series(traj: Trajectory, prob: _Problem):
    C = traj.coeffs
    times = traj.times
    pw = np.array([prob.power(n, times[n], C[n]) for n in range(times.size)])
    energy = np.sum(C * C, axis=1)
    dts = np.diff(times)
    series = (energy[1:] - energy[:-1]) / (2.0 * dts) - 0.5 * (pw[:-1] + pw[1:])
    return float(np.max(np.abs(series))) if series.size else 0.0, series


def energy_residual(
    traj: Trajectory,
    cfg: GalerkinConfig,
    F,
    B: StokesEigenbasis,
    T3: Optional[TrilinearTensor] = None,
    moments: Optional[MomentSource] = None,
):
    """Trapezoidal residual of the energy identity per step; returns ``(max, series)``.

    The identity is ``1/2 d/dt |y|^2 + a(y, y) + b(y, e2, y) = <g, y>``.
    """
    if traj.times.size < 2:
        raise ConfigurationError("energy residual needs at least two time levels")
    if not same_time_grid(traj.times, cfg.time_grid()):
        cfg = cfg.replace(T=float(traj.times[-1]), dt=float(traj.times[1] - traj.times[0]))
    prob = _Problem(cfg, T3, F, B, moments)
    return _energy_series(traj, prob)


def time_norm(traj: Trajectory, key: str, q: float) -> float:
    """Trapezoidal ``L^q(0, T)`` norm of a monitor series."""
    vals = np.asarray(traj.monitors[key], float)
    if np.isinf(q):
        return float(np.max(vals))
    integrand = vals**q
    return float(np.trapezoid(integrand, traj.times) ** (1.0 / q))


# -- pressure -----------------------------------------------------------------


def _grid_field(e, B: Optional[StokesEigenbasis], t: float):
    if e is None:
        return None
    if isinstance(e, VelocityField):
        return e.flat()
    if B is None:
        raise ConfigurationError("a basis is needed to reconstruct coefficient-valued advecting fields")
    c = e.at(t) if isinstance(e, Trajectory) else np.asarray(e, float)
    return B.synthesize(c)


def recover_pressure(
    g: Grid,
    y_before: VelocityField,
    y_after: VelocityField,
    dt: float,
    cfg: GalerkinConfig,
    F,
    t: float,
    B: Optional[StokesEigenbasis] = None,
    return_residuals: bool = False,
):
    """Pressure closing the time-discrete momentum balance of one step.

    With midpoint velocity ``ym`` the residual is
    ``R = f(t + dt/2) + nu lap ym - conv(ym) - (y_after - y_before)/dt``;
    the pressure solves ``div grad p = div R`` with zero mean, so that
    ``R - grad p`` is solenoidal.  With ``return_residuals`` the L2 norms of
    ``R`` and ``R - grad p`` are returned as well.
    """
    if not dt > 0:
        raise ConfigurationError(f"dt must be positive, got {dt}")
    yb = y_before.flat()
    ya = y_after.flat()
    ym = 0.5 * (yb + ya)
    tm = t + 0.5 * dt
    res = force_load(F, g, tm) + cfg.nu * (g.lap_matrix @ ym) - (ya - yb) / dt
    if cfg.nu0 != 0:
        res -= cfg.nu0 * convect_flat(g, ym, ym)
    e1 = _grid_field(cfg.e1, B, tm)
    e2 = _grid_field(cfg.e2, B, tm)
    if e1 is not None:
        res -= convect_flat(g, e1, ym)
    if e2 is not None:
        res -= convect_flat(g, ym, e2)
    pot = g.solve_neumann(g.div_matrix @ res)
    p = ScalarField(pot.reshape(g.n, g.n))
    if not return_residuals:
        return p
    closed = res - g.grad_matrix @ pot
    return p, float(g.h * np.linalg.norm(res)), float(g.h * np.linalg.norm(closed))


# -- export -------------------------------------------------------------------

_TRAJ_HEADER = struct.Struct("<4sIIIdIId")
TRAJ_MAGIC = b"GTRJ"
TRAJ_VERSION = 1


def export_csv(traj: Trajectory, path) -> None:
    """Write ``time, L2, H1, L4, energy_residual`` rows."""
    keys = ["L2", "H1", "L4", "energy_residual"]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["time"] + keys)
        for m, t in enumerate(traj.times):
            w.writerow([repr(float(t))] + [repr(float(traj.monitors[key][m])) for key in keys])


def save_trajectory(traj: Trajectory, path) -> None:
    """Binary coefficient dump with the eigenbasis cache conventions."""
    has_stages = traj.stages is not None
    dt = float(traj.times[1] - traj.times[0]) if traj.times.size > 1 else 0.0
    with open(path, "wb") as fh:
        fh.write(_TRAJ_HEADER.pack(TRAJ_MAGIC, TRAJ_VERSION, traj.grid_n, traj.k, traj.nu, traj.times.size, int(has_stages), dt))
        fh.write(np.asarray(traj.times, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(traj.coeffs, dtype="<f8").tobytes())
        if has_stages:
            fh.write(np.ascontiguousarray(traj.stages, dtype="<f8").tobytes())


def load_trajectory(path) -> Trajectory:
    data = Path(path).read_bytes()
    if len(data) < _TRAJ_HEADER.size:
        raise FormatError(f"{path}: file too short for a trajectory header")
    magic, version, n, k, nu, nt, has_stages, _dt = _TRAJ_HEADER.unpack_from(data)
    if magic != TRAJ_MAGIC or version != TRAJ_VERSION:
        raise FormatError(f"{path}: not a version-{TRAJ_VERSION} trajectory file")
    ns = (nt - 1) if has_stages else 0
    expected = _TRAJ_HEADER.size + 8 * (nt + nt * k + ns * k)
    if len(data) != expected:
        raise FormatError(f"{path}: expected {expected} bytes, found {len(data)}")
    off = _TRAJ_HEADER.size
    times = np.frombuffer(data, "<f8", nt, off).astype(float)
    off += 8 * nt
    coeffs = np.frombuffer(data, "<f8", nt * k, off).reshape(nt, k).astype(float)
    off += 8 * nt * k
    stages = np.frombuffer(data, "<f8", ns * k, off).reshape(ns, k).astype(float) if has_stages else None
    return Trajectory(times, coeffs, stages, grid_n=n, nu=nu)
