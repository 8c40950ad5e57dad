"""First and second derivatives of the force-to-solution map.

``z_g = G'(f) g`` solves the system linearized around ``y = G(f)`` with
forcing ``g`` and zero data; ``z_{g1,g2} = G''(f)(g1, g2)`` solves the same
linear system with source ``-b(z2, z1, .) - b(z1, z2, .)``.  Because the base
and the first derivatives are read at their own stage states, these are the
exact derivatives of the discrete time stepper, and the finite-difference
remainders show clean orders 2 and 3.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from nsgalerkin.errors import DimensionError
from nsgalerkin.forcing import Scaled, Sum
from nsgalerkin.galerkin import GalerkinConfig, Trajectory, TrilinearTensor, integrate, same_time_grid
from nsgalerkin.stokes_basis import StokesEigenbasis

__all__ = [
    "EPSILON_LADDER",
    "FDReport",
    "solve_linearized",
    "solve_second",
    "sup_l2",
    "fd_derivative_report",
    "export_fd_csv",
]

EPSILON_LADDER = (1e-1, 3e-2, 1e-2, 3e-3, 1e-3, 3e-4, 1e-4)
# remainders below this multiple of eps * ||G(f)|| are cancellation noise
ROUNDOFF_FACTOR = 50.0


def _check_grid(traj: Trajectory, cfg: GalerkinConfig, name: str) -> None:
    if traj.stages is None or not same_time_grid(traj.times, cfg.time_grid()):
        raise DimensionError(f"{name} must be a trajectory with stages on the time grid of cfg")


def solve_linearized(y: Trajectory, G, cfg: GalerkinConfig, T3: TrilinearTensor, B: StokesEigenbasis) -> Trajectory:
    """``z' + A z + B(y, z) + B(z, y) = g``, ``z(0) = 0``."""
    _check_grid(y, cfg, "y")
    lin = cfg.replace(nu0=0.0, e1=y, e2=y)
    return integrate(np.zeros(B.k), lin, T3, G, B, monitors=False)


def solve_second(
    y: Trajectory, z1: Trajectory, z2: Trajectory, cfg: GalerkinConfig, T3: TrilinearTensor, B: StokesEigenbasis
) -> Trajectory:
    """Second derivative in the directions of ``z1`` and ``z2``."""
    for traj, name in ((y, "y"), (z1, "z1"), (z2, "z2")):
        _check_grid(traj, cfg, name)

    def moments(n: int, s: int, t: float) -> np.ndarray:
        a = z1.coeffs[n] if s == 0 else z1.stages[n]
        b = z2.coeffs[n] if s == 0 else z2.stages[n]
        return -(T3.contract(b, a) + T3.contract(a, b))

    lin = cfg.replace(nu0=0.0, e1=y, e2=y)
    return integrate(np.zeros(B.k), lin, T3, None, B, moments=moments, monitors=False)


def sup_l2(coeffs: np.ndarray) -> float:
    """``L^inf(I; L^2)`` norm of a coefficient series."""
    return float(np.max(np.sqrt(np.sum(coeffs * coeffs, axis=1))))


def _fit_order(eps: np.ndarray, rem: np.ndarray) -> float:
    if eps.size < 2 or np.any(rem <= 0):
        return float("nan")
    slope, _ = np.polyfit(np.log(eps), np.log(rem), 1)
    return float(slope)


@dataclass
class FDReport:
    """Finite-difference table and fitted remainder orders."""

    epsilons: np.ndarray
    remainder_1: np.ndarray
    remainder_2: np.ndarray
    roundoff: np.ndarray
    order_1: float
    order_2: float
    norms: dict = field(default_factory=dict)


def fd_derivative_report(
    F,
    G,
    c0,
    cfg: GalerkinConfig,
    T3: TrilinearTensor,
    B: StokesEigenbasis,
    epsilons=EPSILON_LADDER,
    fit_slice: slice = slice(1, 6),
) -> FDReport:
    """Taylor remainders of ``G(f + eps g)`` against the derivative solvers.

    ``remainder_1 = ||G(f + eps g) - G(f) - eps z_g||`` and ``remainder_2``
    additionally subtracts ``eps^2 z_{g,g} / 2``; both in ``L^inf(I; L^2)``.
    Orders are least-squares slopes over ``fit_slice`` of the ladder, dropping
    rows flagged as round-off dominated.
    """
    ns = cfg.replace(nu0=1.0, e1=None, e2=None)
    base = integrate(c0, ns, T3, F, B, monitors=False)
    z = solve_linearized(base, G, ns, T3, B)
    zz = solve_second(base, z, z, ns, T3, B)
    floor = float(ROUNDOFF_FACTOR * np.finfo(float).eps * sup_l2(base.coeffs))
    eps = np.asarray(epsilons, float)
    r1 = np.empty(eps.size)
    r2 = np.empty(eps.size)
    for i, e in enumerate(eps):
        pert = integrate(c0, ns, T3, Sum([F, Scaled(e, G)]), B, monitors=False)
        d1 = pert.coeffs - base.coeffs - e * z.coeffs
        r1[i] = sup_l2(d1)
        r2[i] = sup_l2(d1 - 0.5 * e * e * zz.coeffs)
    flags = r2 < floor
    idx = np.arange(eps.size)[fit_slice]
    use1 = idx[r1[idx] >= floor]
    use2 = idx[~flags[idx]]
    return FDReport(
        epsilons=eps,
        remainder_1=r1,
        remainder_2=r2,
        roundoff=flags,
        order_1=_fit_order(eps[use1], r1[use1]),
        order_2=_fit_order(eps[use2], r2[use2]),
        norms={"base": sup_l2(base.coeffs), "z_g": sup_l2(z.coeffs), "z_gg": sup_l2(zz.coeffs), "roundoff_floor": floor},
    )


def export_fd_csv(report: FDReport, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["epsilon", "remainder_1", "remainder_2", "roundoff", "norm_base", "norm_z_g", "norm_z_gg"])
        nb, nz, nzz = (repr(report.norms[key]) for key in ("base", "z_g", "z_gg"))
        for e, a, b, f in zip(report.epsilons, report.remainder_1, report.remainder_2, report.roundoff):
            w.writerow([repr(float(e)), repr(float(a)), repr(float(b)), int(bool(f)), nb, nz, nzz])
