"""Numerical probes of the interpolation, skew-symmetry and trilinear bounds.

Every bound is tested as ratio boundedness: the maximum of
``lhs / rhs`` over an ensemble of random fields, and its change when the
ensemble or the grid is doubled.  No particular constant is asserted.

Field classes (all grid-consistent, so a seed names the same continuum
field on every grid):

* no-slip fields: sine series with random coefficients;
* ``H`` class: discrete curls of random stream functions;
* ``W`` class: Stokes responses to random point forces, whose gradients lie
  in ``L^p`` only for ``p < 2``.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass

import numpy as np

from nsgalerkin.errors import ConfigurationError
from nsgalerkin.forcing import AdmissibilityParams
from nsgalerkin.galerkin import TrilinearTensor
from nsgalerkin.grid import Grid, build_grid, convect_flat, flat_norm_H1, flat_norm_Lr, flat_norm_W1p
from nsgalerkin.sampling import point_stokes_field, sine_field, smoothness_cycle, span_coefficients, stream_field
from nsgalerkin.stokes_basis import StokesEigenbasis

__all__ = [
    "RatioResult",
    "SaturationReport",
    "gagliardo_ratio",
    "gagliardo_check",
    "skew_check",
    "ESTIMATES",
    "trilinear_bounds_check",
    "dual_convection_norm",
    "saturation",
    "write_json",
]

ESTIMATES = ("H_H", "H_W", "W_H", "W_W", "combined")
SATURATION_TOL = 0.15


@dataclass
class RatioResult:
    max_ratio: float
    argmax: int
    samples: int
    n: int


def gagliardo_ratio(g: Grid, y: np.ndarray, r: float) -> float:
    """``||y||_{L^r} / (||y||^{2/r} ||y||_{H1}^{(r-2)/r})``; ``nan`` for the zero field."""
    l2 = flat_norm_Lr(g, y, 2.0)
    h1 = flat_norm_H1(g, y)
    if l2 == 0.0 or h1 == 0.0:
        return float("nan")
    return flat_norm_Lr(g, y, r) / (l2 ** (2.0 / r) * h1 ** ((r - 2.0) / r))


def gagliardo_check(g: Grid, r: float, samples: int, seed: int = 0, scale: float = 1.0, allow_r2: bool = False) -> RatioResult:
    """Max interpolation ratio over random no-slip fields.

    ``allow_r2`` admits the degenerate exponent ``r = 2``, where the ratio is 1.
    """
    if not (r > 2.0 or (allow_r2 and r == 2.0)):
        raise ConfigurationError(f"Gagliardo exponent must exceed 2, got r={r}")
    if samples < 100:
        raise ConfigurationError(f"need at least 100 samples, got {samples}")
    rng = np.random.default_rng(seed)
    best, arg = -np.inf, -1
    for i in range(samples):
        y = scale * sine_field(g, rng, smoothness_cycle(i))
        val = gagliardo_ratio(g, y, r)
        if np.isfinite(val) and val > best:
            best, arg = val, i
    return RatioResult(max_ratio=float(best), argmax=arg, samples=samples, n=g.n)


def skew_check(T3: TrilinearTensor, B: StokesEigenbasis, samples: int, seed: int = 0) -> dict:
    """Normalized ``|b(u, v, v)|`` and the polarized defect ``|b(u, v, w) + b(u, w, v)|``."""
    if samples < 100:
        raise ConfigurationError(f"need at least 100 samples, got {samples}")
    rng = np.random.default_rng(seed)
    worst_vv = worst_pol = 0.0
    for i in range(samples):
        s = smoothness_cycle(i)
        u, v, w = (span_coefficients(B, rng, s) for _ in range(3))
        nu_, nv, nw = (np.linalg.norm(x) for x in (u, v, w))
        worst_vv = max(worst_vv, abs(T3.form(u, v, v)) / (nu_ * nv * nv))
        worst_pol = max(worst_pol, abs(T3.form(u, v, w) + T3.form(u, w, v)) / (nu_ * nv * nw))
    return {"max_normalized_b_uvv": float(worst_vv), "max_polarization_defect": float(worst_pol), "samples": samples}


def dual_convection_norm(g: Grid, a: np.ndarray, b: np.ndarray) -> float:
    """``sup_psi |b(a, b, psi)| / ||psi||_{H1}`` over discrete no-slip ``psi``.

    The supremum is attained at ``psi = (-lap)^{-1} conv(a, b)``, so it equals
    ``sqrt(h^2 R . (-lap)^{-1} R)`` with ``R = conv(a, b)``.
    """
    r = convect_flat(g, a, b)
    if not np.any(r):
        return 0.0
    return float(np.sqrt(max(g.cell_area * (r @ g.solve_dirichlet(r)), 0.0)))


def _h_norm(g: Grid, y: np.ndarray) -> float:
    # the instantaneous form of ||y||_{L^inf L^2} + ||y||_{L^2 H^1}
    return flat_norm_Lr(g, y, 2.0) + flat_norm_H1(g, y)


def trilinear_bounds_check(g: Grid, params: AdmissibilityParams, samples: int, seed: int = 0) -> dict:
    """Max ratio of ``||B(y1, y2)||_{H^-1}`` to each bound's right-hand side.

    The bounds are the instantaneous spatial forms of the four pairing
    estimates (``H x H`` via ``L^4``, ``H x W`` via ``L^{2p'}``, ``W x H``,
    ``W x W`` via the ``W^{1,p} -> L^4`` embedding) and of their sum, with
    ``y = y_H + a y_W``.  Taking the exact supremum over the test function
    removes one source of sampling noise from the maxima.
    """
    if samples < 100:
        raise ConfigurationError(f"need at least 100 samples, got {samples}")
    p = params.p
    pc = params.p_conjugate
    rng = np.random.default_rng(seed)
    best = {key: (-np.inf, -1) for key in ESTIMATES}
    for i in range(samples):
        s = smoothness_cycle(i)
        h1, h2 = stream_field(g, rng, s), stream_field(g, rng, s)
        w1, w2 = point_stokes_field(g, rng), point_stokes_field(g, rng)
        a1, a2 = rng.standard_normal(2)
        (l1, d1), (l2, d2) = ((flat_norm_Lr(g, y, 2.0), flat_norm_H1(g, y)) for y in (h1, h2))
        n1, n2 = (flat_norm_W1p(g, y, p) for y in (w1, w2))
        ratios = {
            "H_H": dual_convection_norm(g, h1, h2) / np.sqrt(l1 * d1 * l2 * d2),
            "H_W": dual_convection_norm(g, h1, w2) / (l1 ** (1 / pc) * d1 ** (1 / p) * n2),
            "W_H": dual_convection_norm(g, w1, h2) / (n1 * np.sqrt(l2 * d2)),
            "W_W": dual_convection_norm(g, w1, w2) / (n1 * n2),
        }
        rhs1 = _h_norm(g, h1) + abs(a1) * n1
        rhs2 = _h_norm(g, h2) + abs(a2) * n2
        ratios["combined"] = dual_convection_norm(g, h1 + a1 * w1, h2 + a2 * w2) / (rhs1 * rhs2)
        for key, val in ratios.items():
            if np.isfinite(val) and val > best[key][0]:
                best[key] = (float(val), i)
    return {key: RatioResult(max_ratio=v, argmax=a, samples=samples, n=g.n) for key, (v, a) in best.items()}


@dataclass
class SaturationReport:
    name: str
    max_ratio: float
    samples: int
    n: int
    sample_doubled: float
    grid_doubled: float
    sample_change: float
    grid_change: float
    trend: float
    saturated: bool


def _report(name: str, base: RatioResult, more: RatioResult, finer: RatioResult, tol: float) -> SaturationReport:
    sc = abs(more.max_ratio / base.max_ratio - 1.0)
    gc = abs(finer.max_ratio / base.max_ratio - 1.0)
    return SaturationReport(
        name=name,
        max_ratio=base.max_ratio,
        samples=base.samples,
        n=base.n,
        sample_doubled=more.max_ratio,
        grid_doubled=finer.max_ratio,
        sample_change=float(sc),
        grid_change=float(gc),
        trend=float(np.log2(finer.max_ratio / base.max_ratio)),
        saturated=bool(np.isfinite(base.max_ratio) and sc <= tol and gc <= tol),
    )


def saturation(
    n: int, samples: int, params: AdmissibilityParams, r: float = 4.0, seed: int = 0, tol: float = SATURATION_TOL
) -> list:
    """Gagliardo and trilinear ratios at ``(n, N)``, ``(n, 2N)`` and ``(2n, N)``."""
    g, g2 = build_grid(n), build_grid(2 * n)
    out = [
        _report(
            f"gagliardo_r{r:g}",
            gagliardo_check(g, r, samples, seed),
            gagliardo_check(g, r, 2 * samples, seed),
            gagliardo_check(g2, r, samples, seed),
            tol,
        )
    ]
    base = trilinear_bounds_check(g, params, samples, seed)
    more = trilinear_bounds_check(g, params, 2 * samples, seed)
    finer = trilinear_bounds_check(g2, params, samples, seed)
    out.extend(_report(f"trilinear_{key}", base[key], more[key], finer[key], tol) for key in ESTIMATES)
    return out


def write_json(path, payload) -> None:
    def conv(obj):
        if isinstance(obj, (SaturationReport, RatioResult)):
            return asdict(obj)
        raise TypeError(f"cannot serialize {type(obj).__name__}")

    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True, default=conv)
        fh.write("\n")
