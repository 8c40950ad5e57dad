"""Steady states, empirical constants and exponential decay toward equilibrium.

The smallness condition used here is the operative one inside the decay
argument, ``nu - C1 ||y_inf||_{L4} > 0``, with ``C1`` and the Poincare-type
constant ``C3`` measured on random span fields.  The predicted rate is
``alpha = (nu - C1 ||y_inf||_{L4}) / C3**2``.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field

import numpy as np

from nsgalerkin.errors import ConfigurationError, PreconditionError
from nsgalerkin.forcing import compile_force, is_time_independent
from nsgalerkin.galerkin import GalerkinConfig, TrilinearTensor, integrate
from nsgalerkin.grid import Grid, flat_norm_Lr
from nsgalerkin.sampling import smoothness_cycle, span_coefficients
from nsgalerkin.stokes_basis import StokesEigenbasis

__all__ = [
    "SteadyState",
    "solve_steady",
    "EmpiricalConstants",
    "empirical_constants",
    "DecayResult",
    "decay_experiment",
    "SmallnessReport",
    "smallness_report",
    "amplitude_sweep",
    "SeparationResult",
    "separation_experiment",
    "GronwallFit",
    "gronwall_fit",
    "export_decay_csv",
    "decay_summary",
    "export_summary_json",
]

PICARD_MAX = 500
NEWTON_MAX = 50
STEADY_TOL = 1e-10
FIT_FLOOR = 1e-8


@dataclass
class SteadyState:
    coeffs: np.ndarray
    residual: float
    norms: dict
    iterations: int
    method: str
    converged: bool
    regime: str = "small"


def _steady_residual(c, f, stiff, T3):
    return stiff * c + T3.contract(c, c) - f


def _jacobian(c, stiff, T3):
    T = T3.values
    return np.diag(stiff) + np.tensordot(c, T, axes=(0, 0)).T + np.tensordot(c, T, axes=(0, 1)).T


def _norms(B: StokesEigenbasis, c: np.ndarray) -> dict:
    return {
        "L2": float(np.sqrt(c @ c)),
        "H1": float(np.sqrt(np.sum(B.lambdas * c * c))),
        "L4": flat_norm_Lr(B.grid, B.synthesize(c), 4.0),
    }


def solve_steady(
    F,
    cfg: GalerkinConfig,
    T3: TrilinearTensor,
    B: StokesEigenbasis,
    method: str = "auto",
    start: np.ndarray | None = None,
) -> SteadyState:
    """Solve ``nu lambda_j c_j + b(y, y, psi_j) = f_j``.

    ``auto`` runs Stokes-preconditioned Picard from the Stokes solution and
    switches to Newton once two successive Picard steps contract; ``picard``
    and ``newton`` force a single method.  Non-convergence is reported through
    ``converged`` and ``regime`` rather than raised.
    """
    if method not in ("auto", "picard", "newton"):
        raise ConfigurationError(f"unknown steady-state method {method!r}")
    if not is_time_independent(F):
        raise PreconditionError("steady states need a time-independent force")
    f = compile_force(F, B)(0.0) if F is not None else np.zeros(B.k)
    stiff = cfg.nu * B.lambdas
    tol = STEADY_TOL * max(1.0, float(np.linalg.norm(f)))
    c = f / stiff if start is None else np.array(start, float)
    best_c, best_r = c.copy(), float(np.max(np.abs(_steady_residual(c, f, stiff, T3))))
    it = 0
    used = method
    contracting = True
    if method != "newton":
        prev_step = np.inf
        streak = 0
        contracting = False
        for it in range(1, PICARD_MAX + 1):
            # a diverging Picard sequence overflows before it is abandoned
            with np.errstate(over="ignore", invalid="ignore"):
                new = (f - T3.contract(c, c)) / stiff
                step = float(np.linalg.norm(new - c))
                c = new
                r = float(np.max(np.abs(_steady_residual(c, f, stiff, T3))))
            if not np.isfinite(r):
                break
            if r < best_r:
                best_c, best_r = c.copy(), r
            streak = streak + 1 if step < 0.9 * prev_step else 0
            prev_step = step
            if r <= tol or (method == "auto" and streak >= 2):
                contracting = r <= tol or streak >= 2
                break
        c = best_c.copy()
    if best_r > tol and method != "picard":
        if method == "auto":
            used = "picard+newton"
        for _ in range(NEWTON_MAX):
            it += 1
            c = c - np.linalg.solve(_jacobian(c, stiff, T3), _steady_residual(c, f, stiff, T3))
            r = float(np.max(np.abs(_steady_residual(c, f, stiff, T3))))
            if not np.isfinite(r):
                break
            if r < best_r:
                best_c, best_r = c.copy(), r
            if r <= tol:
                break
    converged = best_r <= tol
    regime = "small" if contracting and converged else "outside smallness regime"
    return SteadyState(
        coeffs=best_c,
        residual=best_r,
        norms=_norms(B, best_c),
        iterations=it,
        method=used,
        converged=converged,
        regime=regime,
    )


# -- constants ----------------------------------------------------------------


@dataclass
class EmpiricalConstants:
    C1: float
    C3: float
    samples: int
    argmax_C1: int
    argmax_C3: int


def empirical_constants(
    g: Grid, B: StokesEigenbasis, samples: int, T3: TrilinearTensor | None = None, seed: int = 0, scale: float = 1.0
) -> EmpiricalConstants:
    """Sampled ``C1`` (convective bound) and ``C3`` (Poincare-type bound).

    Candidates are random span fields with smoothness cycling through
    ``SMOOTHNESS``; the basis modes are added as ``C3`` candidates.  ``scale``
    multiplies every sample and must leave both constants unchanged.
    """
    if samples < 100:
        raise ConfigurationError(f"empirical constants need at least 100 samples, got {samples}")
    if B.grid != g:
        raise ConfigurationError("basis and grid disagree")
    if T3 is None:
        from nsgalerkin.galerkin import assemble_trilinear

        T3 = assemble_trilinear(B)
    rng = np.random.default_rng(seed)
    lam = B.lambdas
    c1 = c3 = 0.0
    a1 = a3 = -1
    for i in range(samples):
        s = smoothness_cycle(i)
        y = scale * span_coefficients(B, rng, s)
        w = scale * span_coefficients(B, rng, s)
        h1sq = float(np.sum(lam * y * y))
        l4 = flat_norm_Lr(g, B.synthesize(w), 4.0)
        r1 = abs(T3.form(y, y, w)) / (l4 * h1sq)
        r3 = float(np.sqrt(y @ y / h1sq))
        if r1 > c1:
            c1, a1 = r1, i
        if r3 > c3:
            c3, a3 = r3, i
    # basis modes: C3 is attained at the ground mode
    for j in range(B.k):
        r3 = float(1.0 / np.sqrt(lam[j]))
        if r3 > c3:
            c3, a3 = r3, samples + j
    return EmpiricalConstants(C1=float(c1), C3=float(c3), samples=samples, argmax_C1=a1, argmax_C3=a3)


# -- decay --------------------------------------------------------------------


@dataclass
class DecayResult:
    times: np.ndarray
    distance: np.ndarray
    alpha_fit: float
    r2: float
    monotone: bool
    monotone_all: bool
    passed: bool
    window: tuple = field(default=(0, 0))


def _fit_window(d: np.ndarray):
    d0 = d[0]
    inside = (d >= FIT_FLOOR) & (d <= 0.5 * d0)
    idx = np.flatnonzero(inside)
    if idx.size < 3:
        return None
    # contiguous run starting at the first entry
    stop = idx[0]
    while stop + 1 < d.size and inside[stop + 1]:
        stop += 1
    return int(idx[0]), int(stop) + 1


def decay_experiment(
    F, c0, cfg: GalerkinConfig, T3: TrilinearTensor, B: StokesEigenbasis, steady: SteadyState | None = None
) -> DecayResult:
    """Fit ``log ||y(t) - y_inf||`` linearly on the window ``[1e-8, d(0)/2]``."""
    if steady is None:
        steady = solve_steady(F, cfg, T3, B)
    if not steady.converged:
        raise PreconditionError(f"steady solve did not converge (residual {steady.residual:.3e})")
    run = cfg.replace(e1=None, e2=None)
    traj = integrate(c0, run, T3 if run.nu0 != 0 else None, F, B, monitors=False)
    diff = traj.coeffs - steady.coeffs[None, :]
    d = np.sqrt(np.sum(diff * diff, axis=1))
    win = _fit_window(d)
    slack = 1e-13 * d[0]
    monotone_all = bool(np.all(np.diff(d) <= slack))
    if win is None:
        return DecayResult(traj.times, d, float("nan"), float("nan"), False, monotone_all, False)
    lo, hi = win
    t = traj.times[lo:hi]
    logd = np.log(d[lo:hi])
    slope, icpt = np.polyfit(t, logd, 1)
    pred = slope * t + icpt
    ss_res = float(np.sum((logd - pred) ** 2))
    ss_tot = float(np.sum((logd - logd.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    monotone = bool(np.all(np.diff(d[lo:]) <= slack))
    alpha = float(-slope)
    return DecayResult(
        times=traj.times,
        distance=d,
        alpha_fit=alpha,
        r2=float(r2),
        monotone=monotone,
        monotone_all=monotone_all,
        passed=bool(alpha > 0 and monotone and r2 >= 0.99),
        window=(lo, hi),
    )


@dataclass
class SmallnessReport:
    C1_L4: float
    margin: float
    alpha_pred: float | None
    nu: float


def smallness_report(steady: SteadyState, constants: EmpiricalConstants, nu: float) -> SmallnessReport:
    """Operative smallness margin ``nu - C1 ||y_inf||_{L4}`` and predicted rate."""
    prod = constants.C1 * steady.norms["L4"]
    margin = nu - prod
    alpha = margin / constants.C3**2 if margin > 0 else None
    return SmallnessReport(C1_L4=float(prod), margin=float(margin), alpha_pred=alpha, nu=float(nu))


def amplitude_sweep(F, amplitudes, constants: EmpiricalConstants, cfg, T3, B):
    """Smallness reports for ``a * F`` over the given amplitudes."""
    from nsgalerkin.forcing import Scaled

    out = []
    for a in amplitudes:
        st = solve_steady(Scaled(float(a), F), cfg, T3, B)
        out.append((float(a), st, smallness_report(st, constants, cfg.nu)))
    return out


# -- separation of nearby trajectories ---------------------------------------


@dataclass
class SeparationResult:
    times: np.ndarray
    separation: np.ndarray
    h1_integral: np.ndarray
    K: float


def separation_experiment(
    c0, delta0, F, cfg: GalerkinConfig, T3: TrilinearTensor, B: StokesEigenbasis
) -> SeparationResult:
    """Smallest ``K`` with ``||delta(t)|| <= ||delta0|| exp(K int_0^t ||y||_{H1}^2)``."""
    run = cfg.replace(nu0=1.0, e1=None, e2=None)
    a = integrate(c0, run, T3, F, B, monitors=False)
    b = integrate(np.asarray(c0) + np.asarray(delta0), run, T3, F, B, monitors=False)
    sep = np.sqrt(np.sum((b.coeffs - a.coeffs) ** 2, axis=1))
    h1sq = np.sum(B.lambdas[None, :] * a.coeffs**2, axis=1)
    dt = np.diff(a.times)
    integral = np.concatenate([[0.0], np.cumsum(0.5 * dt * (h1sq[1:] + h1sq[:-1]))])
    eps = sep[0]
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.log(sep[1:] / eps) / integral[1:]
    return SeparationResult(a.times, sep, integral, float(np.max(ratio)))



@dataclass
class GronwallFit:
    """Global separation constant over scenarios with leave-one-out refits."""

    K: float
    per_scenario: np.ndarray
    leave_one_out: np.ndarray

    @property
    def max_relative_change(self) -> float:
        return float(np.max(np.abs(self.leave_one_out - self.K)) / abs(self.K))


def gronwall_fit(results) -> GronwallFit:
    """The smallest ``K`` valid for every scenario, and how it moves when one is dropped."""
    ks = np.array([r.K for r in results], float)
    if ks.size < 2:
        raise ConfigurationError("a global fit needs at least two scenarios")
    loo = np.array([np.max(np.delete(ks, i)) for i in range(ks.size)])
    return GronwallFit(K=float(np.max(ks)), per_scenario=ks, leave_one_out=loo)


# -- export -------------------------------------------------------------------


def export_decay_csv(result: DecayResult, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "d"])
        for t, d in zip(result.times, result.distance):
            w.writerow([repr(float(t)), repr(float(d))])


def decay_summary(result: DecayResult, report: SmallnessReport | None = None, steady: SteadyState | None = None) -> dict:
    summary = {
        "alpha_fit": result.alpha_fit,
        "r2": result.r2,
        "passed": result.passed,
        "monotone": result.monotone,
    }
    if report is not None:
        summary.update({"alpha_pred": report.alpha_pred, "margin": report.margin, "C1_L4": report.C1_L4})
    if steady is not None:
        summary.update({"steady_residual": steady.residual, "steady_norms": steady.norms, "steady_regime": steady.regime})
    return summary


def export_summary_json(path, result: DecayResult, report: SmallnessReport | None = None, steady: SteadyState | None = None) -> dict:
    summary = decay_summary(result, report, steady)
    with open(path, "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return summary
