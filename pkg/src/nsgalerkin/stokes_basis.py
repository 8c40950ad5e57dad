"""Discrete Stokes operator, its low eigenmodes, and the binary basis cache.

Eigenvalues are stored Laplacian-normalized: ``-P lap psi_j = lambda_j psi_j``,
so the Stokes operator ``A = -nu P lap`` has eigenvalues ``nu * lambda_j``.
The Galerkin ODEs then read ``c_j' = -nu lambda_j c_j + ...``.

Cache layout (little endian): ``b"STKB"``, ``uint32`` version, ``uint32`` n,
``uint32`` k, ``float64`` nu, ``k`` float64 eigenvalues, then the ``k`` modes,
each as its flat interior-face vector (u faces then v faces).
"""

from __future__ import annotations

import os
import struct
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from nsgalerkin.errors import (
    ConfigurationError,
    FormatError,
    IntegrityError,
    NumericalError,
    PreconditionError,
)
from nsgalerkin.grid import Grid, VelocityField, build_grid

__all__ = [
    "StokesEigenbasis",
    "stokes_apply",
    "compute_eigenbasis",
    "frac_power_apply",
    "save_basis",
    "load_basis",
    "cached_eigenbasis",
    "verify_basis",
    "stokes_solve",
    "CACHE_ENV",
]

MAGIC = b"STKB"
VERSION = 1
_HEADER = struct.Struct("<4sIIId")
CACHE_ENV = "NSGALERKIN_CACHE"

EIG_SEED = 20240917
EIG_MAX_ITER = 400
EIG_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class StokesEigenbasis:
    """Ascending Stokes eigenpairs, L2-orthonormal and discretely solenoidal.

    ``modes`` is an ``(n_dof, k)`` array whose columns are flat face vectors.
    """

    grid: Grid
    nu: float
    lambdas: np.ndarray
    modes: np.ndarray

    @property
    def k(self) -> int:
        return len(self.lambdas)

    @property
    def stokes_eigenvalues(self) -> np.ndarray:
        return self.nu * self.lambdas

    def mode(self, j: int) -> VelocityField:
        return VelocityField.from_flat(self.grid, self.modes[:, j])

    def coefficients(self, y) -> np.ndarray:
        """L2 coefficients ``(y, psi_j)`` of a field or flat vector."""
        flat = y.flat() if isinstance(y, VelocityField) else np.asarray(y, float)
        return self.grid.cell_area * (self.modes.T @ flat)

    def synthesize(self, c: np.ndarray) -> np.ndarray:
        """Flat field ``sum_j c_j psi_j``; ``c`` may be ``(k,)`` or ``(k, m)``."""
        return self.modes @ np.asarray(c, float)

    def field(self, c: np.ndarray) -> VelocityField:
        return VelocityField.from_flat(self.grid, self.synthesize(c))


def _max_div(g: Grid, flat: np.ndarray) -> float:
    return float(np.max(np.abs(g.div_matrix @ flat)))


def stokes_apply(g: Grid, nu: float, y: VelocityField) -> VelocityField:
    """``-nu P lap y`` for a discretely divergence-free ``y``."""
    if nu <= 0:
        raise ConfigurationError(f"viscosity must be positive, got {nu}")
    flat = y.flat()
    div = _max_div(g, flat)
    if div > 1e-8:
        raise PreconditionError(f"stokes_apply needs a divergence-free field, max |div| = {div:.3e}")
    return VelocityField.from_flat(g, -nu * g.leray_flat(g.lap_matrix @ flat))


@lru_cache(maxsize=8)
def _stokes_lu(g: Grid):
    # [-lap  grad; div  0] with the pressure of cell 0 pinned
    grad = g.grad_matrix[:, 1:]
    div = g.div_matrix[1:, :]
    m = sp.bmat([[-g.lap_matrix, grad], [div, None]], format="csc")
    return spla.splu(m)


def stokes_solve(g: Grid, f: np.ndarray) -> np.ndarray:
    """Velocity of ``-lap u + grad p = f, div u = 0`` (flat load, columns allowed)."""
    lu = _stokes_lu(g)
    rhs = np.zeros((g.n_dof + g.n_cells - 1,) + f.shape[1:])
    rhs[: g.n_dof] = f
    return lu.solve(rhs)[: g.n_dof]


def _orthonormalize(g: Grid, x: np.ndarray) -> np.ndarray:
    q, _ = np.linalg.qr(x)
    return q / g.h


def _residuals(g: Grid, modes: np.ndarray, lambdas: np.ndarray) -> np.ndarray:
    ax = g.leray_flat(-(g.lap_matrix @ modes))
    r = ax - modes * lambdas[None, :]
    return g.h * np.linalg.norm(r, axis=0)


def _fix_signs(modes: np.ndarray) -> np.ndarray:
    out = modes.copy()
    for j in range(out.shape[1]):
        col = out[:, j]
        idx = int(np.argmax(np.abs(col) > 1e-6 * np.max(np.abs(col))))
        if col[idx] < 0:
            out[:, j] = -col
    return out


def compute_eigenbasis(g: Grid, nu: float, k: int) -> StokesEigenbasis:
    """Lowest ``k`` Stokes eigenpairs by block inverse iteration.

    Each sweep applies the exact inverse of the unit-viscosity Stokes operator
    (a sparse saddle-point solve, so iterates stay solenoidal), orthonormalizes
    and performs a Rayleigh-Ritz step with the Laplacian.  The block carries
    ``k + 8`` extra vectors to speed convergence of the wanted modes.
    """
    if nu <= 0:
        raise ConfigurationError(f"viscosity must be positive, got {nu}")
    capacity = (g.n - 1) ** 2
    if int(k) != k or k < 1 or k > capacity:
        raise ConfigurationError(f"k must satisfy 1 <= k <= {capacity} (divergence-free dimension), got {k}")
    k = int(k)
    block = min(capacity, 2 * k + 8)
    rng = np.random.default_rng(EIG_SEED)
    x = stokes_solve(g, rng.standard_normal((g.n_dof, block)))
    lap = -g.lap_matrix
    res = None
    for _ in range(EIG_MAX_ITER):
        q = _orthonormalize(g, x)
        ritz = g.cell_area * (q.T @ (lap @ q))
        theta, vecs = np.linalg.eigh(0.5 * (ritz + ritz.T))
        q = q @ vecs
        res = _residuals(g, q[:, :k], theta[:k])
        if np.all(res <= EIG_TOL * theta[:k]):
            break
        x = stokes_solve(g, q)
    else:
        worst = float(np.max(res / theta[:k]))
        raise NumericalError(
            f"eigen-iteration did not converge in {EIG_MAX_ITER} sweeps, worst relative residual {worst:.3e}",
            residual=worst,
        )
    modes = g.leray_flat(q[:, :k])
    modes = modes / (g.h * np.linalg.norm(modes, axis=0))[None, :]
    modes = _fix_signs(modes)
    return StokesEigenbasis(grid=g, nu=float(nu), lambdas=theta[:k].copy(), modes=np.ascontiguousarray(modes))


def frac_power_apply(B: StokesEigenbasis, alpha: float, y: VelocityField) -> VelocityField:
    """``A^alpha`` by spectral calculus on ``span(B)``, ``A = -nu P lap``."""
    if not 0.0 <= alpha <= 1.0:
        raise ConfigurationError(f"fractional power must lie in [0, 1], got {alpha}")
    c = B.coefficients(y)
    return B.field(B.stokes_eigenvalues**alpha * c)


def verify_basis(B: StokesEigenbasis) -> dict:
    """Check every basis invariant; raise :class:`IntegrityError` on failure."""
    g = B.grid
    lam = np.asarray(B.lambdas)
    if B.modes.shape != (g.n_dof, B.k):
        raise IntegrityError(f"modes have shape {B.modes.shape}, expected {(g.n_dof, B.k)}")
    if not np.all(np.isfinite(lam)) or not np.all(np.isfinite(B.modes)):
        raise IntegrityError("basis contains non-finite values")
    if lam[0] <= 0 or np.any(np.diff(lam) < 0):
        raise IntegrityError("eigenvalues must be positive and ascending")
    gram = g.cell_area * (B.modes.T @ B.modes)
    ortho = float(np.max(np.abs(gram - np.eye(B.k))))
    div = float(np.max(np.abs(g.div_matrix @ B.modes)))
    rel = float(np.max(_residuals(g, B.modes, lam) / lam))
    report = {"orthonormality": ortho, "divergence": div, "relative_residual": rel}
    if ortho > 1e-10:
        raise IntegrityError(f"orthonormality defect {ortho:.3e} exceeds 1e-10")
    if div > 1e-10:
        raise IntegrityError(f"max divergence {div:.3e} exceeds 1e-10")
    if rel > 1e-8:
        raise IntegrityError(f"eigenpair residual {rel:.3e} exceeds 1e-8 relative")
    return report


def save_basis(B: StokesEigenbasis, path) -> None:
    path = Path(path)
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, VERSION, B.grid.n, B.k, B.nu))
        fh.write(np.asarray(B.lambdas, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(B.modes.T, dtype="<f8").tobytes())


def load_basis(path, n: int | None = None, k: int | None = None, nu: float | None = None) -> StokesEigenbasis:
    """Load a cached basis; ``n``, ``k``, ``nu`` are checked when given."""
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        raise FormatError(f"{path}: file too short for a basis header")
    magic, version, fn, fk, fnu = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}")
    if version != VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    if fn < 8 or fk < 1:
        raise FormatError(f"{path}: invalid header n={fn} k={fk}")
    g = build_grid(fn)
    expected = _HEADER.size + 8 * fk * (1 + g.n_dof)
    if len(data) != expected:
        raise FormatError(f"{path}: expected {expected} bytes, found {len(data)}")
    for name, want, have in (("n", n, fn), ("k", k, fk), ("nu", nu, fnu)):
        if want is not None and want != have:
            raise IntegrityError(f"{path}: {name} mismatch, file has {have}, expected {want}")
    lam = np.frombuffer(data, dtype="<f8", count=fk, offset=_HEADER.size).astype(float)
    modes = np.frombuffer(data, dtype="<f8", count=fk * g.n_dof, offset=_HEADER.size + 8 * fk)
    modes = np.ascontiguousarray(modes.reshape(fk, g.n_dof).T.astype(float))
    B = StokesEigenbasis(grid=g, nu=float(fnu), lambdas=lam, modes=modes)
    verify_basis(B)
    return B


def cache_path(n: int, k: int, nu: float, cache_dir=None) -> Path | None:
    root = cache_dir if cache_dir is not None else os.environ.get(CACHE_ENV)
    if not root:
        return None
    return Path(root) / f"stokes_n{n}_k{k}_nu{float(nu).hex()}.stkb"


def cached_eigenbasis(n: int, nu: float, k: int, cache_dir=None) -> StokesEigenbasis:
    """Eigenbasis from the cache directory (``$NSGALERKIN_CACHE``), computing on a miss."""
    path = cache_path(n, k, nu, cache_dir)
    if path is not None and path.exists():
        return load_basis(path, n=n, k=k, nu=float(nu))
    B = compute_eigenbasis(build_grid(n), nu, k)
    if path is not None:
        path.parent.mkdir(parents=True, exist_ok=True)
        save_basis(B, path)
    return B
