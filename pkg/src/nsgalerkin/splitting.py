"""Stokes/nonlinear splitting ``y = y_N + y_S``.

``y_S`` solves the linear Stokes problem with the (possibly rough) force and
``y_N`` solves Navier-Stokes perturbed by ``y_S`` with the smooth source
``-b(y_S, y_S, .)``.  Because the perturbed run reads the stage states of
``y_S``, the recomposition reproduces the direct solve up to round-off; the
interesting comparisons are against the dt self-convergence error and
between different splits of the initial data.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from nsgalerkin.errors import DimensionError
from nsgalerkin.galerkin import GalerkinConfig, Trajectory, TrilinearTensor, integrate, same_time_grid
from nsgalerkin.stokes_basis import StokesEigenbasis

__all__ = [
    "SplitReport",
    "solve_stokes_rough",
    "solve_perturbed",
    "perturbation_moments",
    "recompose_and_compare",
    "self_convergence_error",
    "export_split_csv",
]


def solve_stokes_rough(F, c0S, cfg: GalerkinConfig, B: StokesEigenbasis, monitors: bool = True) -> Trajectory:
    """Linear Stokes run ``c_j' = -nu lambda_j c_j + <f, psi_j>``."""
    lin = cfg.replace(nu0=0.0, e1=None, e2=None)
    return integrate(c0S, lin, None, F, B, monitors=monitors)


def perturbation_moments(yS: Trajectory, T3: TrilinearTensor):
    """Source ``-b(y_S, y_S, psi_j)`` evaluated at step and stage states."""
    if yS.stages is None:
        raise DimensionError("the Stokes trajectory must carry its stage states")

    def moments(n: int, s: int, t: float) -> np.ndarray:
        c = yS.coeffs[n] if s == 0 else yS.stages[n]
        return -T3.contract(c, c)

    return moments


def solve_perturbed(
    yS: Trajectory, c0N, cfg: GalerkinConfig, T3: TrilinearTensor, B: StokesEigenbasis, monitors: bool = True
) -> Trajectory:
    """Nonlinear remainder ``y_N`` with ``nu0 = 1`` and ``e1 = e2 = y_S``."""
    if not same_time_grid(yS.times, cfg.time_grid()):
        raise DimensionError("y_S must live on the time grid of cfg")
    pert = cfg.replace(nu0=1.0, e1=yS, e2=yS)
    return integrate(c0N, pert, T3, None, B, moments=perturbation_moments(yS, T3), monitors=monitors)


def _l2_series(a: np.ndarray) -> np.ndarray:
    return np.sqrt(np.sum(a * a, axis=1))


def self_convergence_error(c0, cfg: GalerkinConfig, T3, F, B: StokesEigenbasis) -> float:
    """``max_t ||y_dt - y_{dt/2}||_{L2}`` on the coarse time grid."""
    coarse = integrate(c0, cfg, T3, F, B, monitors=False)
    fine = integrate(c0, cfg.replace(dt=cfg.dt / 2), T3, F, B, monitors=False)
    if fine.n_steps != 2 * coarse.n_steps:
        raise DimensionError("time grid does not halve cleanly")
    return float(np.max(_l2_series(coarse.coeffs - fine.coeffs[::2])))


@dataclass
class SplitReport:
    times: np.ndarray
    stokes_L2: np.ndarray
    nonlinear_L2: np.ndarray
    discrepancy: np.ndarray

    @property
    def max_discrepancy(self) -> float:
        return float(np.max(self.discrepancy))


def recompose_and_compare(
    yN: Trajectory, yS: Trajectory, F, c0, cfg: GalerkinConfig, T3: TrilinearTensor, B: StokesEigenbasis
) -> SplitReport:
    """Compare ``y_N + y_S`` with a direct Navier-Stokes solve from ``c0``.

    The direct solve is well defined for point forces as well, so ``F`` may be
    rough here.
    """
    direct = integrate(c0, cfg.replace(nu0=1.0, e1=None, e2=None), T3, F, B, monitors=False)
    diff = yN.coeffs + yS.coeffs - direct.coeffs
    return SplitReport(
        times=direct.times.copy(),
        stokes_L2=_l2_series(yS.coeffs),
        nonlinear_L2=_l2_series(yN.coeffs),
        discrepancy=_l2_series(diff),
    )


def export_split_csv(report: SplitReport, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["time", "stokes_L2", "nonlinear_L2", "discrepancy"])
        for m, t in enumerate(report.times):
            w.writerow([repr(float(v)) for v in (t, report.stokes_L2[m], report.nonlinear_L2[m], report.discrepancy[m])])
