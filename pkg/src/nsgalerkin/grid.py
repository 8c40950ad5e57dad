"""Staggered (MAC) discretization of the unit square with no-slip walls.

Layout
------
``u[i, j]`` lives on the vertical face at ``(i h, (j + 1/2) h)`` for
``i = 0..n``, ``j = 0..n-1``; ``v[i, j]`` lives on the horizontal face at
``((i + 1/2) h, j h)`` for ``i = 0..n-1``, ``j = 0..n``.  Wall faces carry the
zero normal component and are not degrees of freedom.  Tangential no-slip is
imposed by ghost reflection (the ghost value is the negative of the first
interior value), which gives the ``-3`` corner entries of the 1D Laplacian.

Interior degrees of freedom are flattened as ``u[1:n, :]`` followed by
``v[:, 1:n]`` in C order ("face-major").  All discrete inner products carry
the cell area ``h**2`` so that divergence and gradient are exact negative
adjoints.

Quadrature of ``|y|**r`` uses, at every cell centre, the root mean square of
the two adjacent face values per component.  At ``r = 2`` this reproduces the
face inner product exactly, so ``inner_L2(y, y) == norm_Lr(y, 2)**2``.
Gradient magnitudes are assembled the same way: cell-centred derivatives
enter directly and every node-centred derivative contributes a quarter of its
square to each of the four cells that share the node.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from nsgalerkin.errors import ConfigurationError, DimensionError, NumericalError

__all__ = [
    "Grid",
    "VelocityField",
    "ScalarField",
    "build_grid",
    "divergence",
    "gradient",
    "laplacian",
    "leray_project",
    "inner_L2",
    "norm_Lr",
    "norm_H1",
    "norm_W1p",
    "convect",
    "trilinear",
]

MIN_CELLS = 8


@dataclass(frozen=True)
class Grid:
    """Uniform ``n x n`` MAC grid on the unit square."""

    n: int
    h: float

    @property
    def n_u(self) -> int:
        return (self.n - 1) * self.n

    @property
    def n_dof(self) -> int:
        return 2 * self.n * (self.n - 1)

    @property
    def n_cells(self) -> int:
        return self.n * self.n

    @property
    def cell_area(self) -> float:
        return self.h * self.h

    # -- sparse operators on flat interior dofs -----------------------------

    @cached_property
    def grad_matrix(self) -> sp.csr_matrix:
        """Cell centres -> interior faces, ``(p[i] - p[i-1]) / h``."""
        n = self.n
        fwd = sp.diags([-np.ones(n - 1), np.ones(n - 1)], [0, 1], shape=(n - 1, n))
        eye = sp.identity(n)
        gx = sp.kron(fwd, eye)
        gy = sp.kron(eye, fwd)
        return (sp.vstack([gx, gy]) / self.h).tocsr()

    @cached_property
    def div_matrix(self) -> sp.csr_matrix:
        """Interior faces -> cell centres; exactly ``-grad_matrix.T``."""
        return (-self.grad_matrix.T).tocsr()

    @cached_property
    def lap_matrix(self) -> sp.csr_matrix:
        """Vector Laplacian with Dirichlet normal and reflected tangential BCs."""
        n = self.n
        dirichlet = sp.diags(
            [np.ones(n - 2), -2.0 * np.ones(n - 1), np.ones(n - 2)], [-1, 0, 1]
        )
        main = -2.0 * np.ones(n)
        main[0] = main[-1] = -3.0
        ghost = sp.diags([np.ones(n - 1), main, np.ones(n - 1)], [-1, 0, 1])
        lap_u = sp.kron(dirichlet, sp.identity(n)) + sp.kron(sp.identity(n - 1), ghost)
        lap_v = sp.kron(ghost, sp.identity(n - 1)) + sp.kron(sp.identity(n), dirichlet)
        return (sp.block_diag([lap_u, lap_v]) / self.h**2).tocsr()

    @cached_property
    def _neumann_lu(self):
        # Reduced Neumann Laplacian with cell 0 pinned; the pinned equation is
        # implied by the zero-sum compatibility of any divergence.
        dg = (self.div_matrix @ self.grad_matrix).tocsc()
        return spla.splu(dg[1:, 1:].tocsc())

    @cached_property
    def _dirichlet_lu(self):
        return spla.splu((-self.lap_matrix).tocsc())

    def solve_neumann(self, rhs: np.ndarray) -> np.ndarray:
        """Zero-mean solution of ``div grad H = rhs`` (columns allowed)."""
        rhs = np.asarray(rhs, dtype=float)
        out = np.zeros_like(rhs)
        out[1:] = self._neumann_lu.solve(np.ascontiguousarray(rhs[1:]))
        out -= out.mean(axis=0)
        resid = self.div_matrix @ (self.grad_matrix @ out) - (rhs - rhs.mean(axis=0))
        scale = max(1.0, float(np.max(np.abs(rhs))))
        err = float(np.max(np.abs(resid))) if resid.size else 0.0
        if not np.isfinite(err) or err > 1e-8 * scale:
            raise NumericalError(f"Neumann Poisson solve failed, residual {err:.3e}", residual=err)
        return out

    def solve_dirichlet(self, rhs: np.ndarray) -> np.ndarray:
        """Solve ``-lap W = rhs`` on interior faces (columns allowed)."""
        rhs = np.asarray(rhs, dtype=float)
        out = self._dirichlet_lu.solve(np.ascontiguousarray(rhs))
        resid = -(self.lap_matrix @ out) - rhs
        scale = max(1.0, float(np.max(np.abs(rhs))))
        err = float(np.max(np.abs(resid)))
        if not np.isfinite(err) or err > 1e-8 * scale:
            raise NumericalError(f"Dirichlet Poisson solve failed, residual {err:.3e}", residual=err)
        return out

    def leray_flat(self, y: np.ndarray) -> np.ndarray:
        pot = self.solve_neumann(self.div_matrix @ y)
        return y - self.grad_matrix @ pot

    # -- full-array views ---------------------------------------------------

    def split_flat(self, y: np.ndarray):
        """Full ``(u, v)`` arrays, wall faces zero; trailing axes preserved."""
        n = self.n
        y = np.asarray(y)
        cols = y.shape[1:]
        u = np.zeros((n + 1, n) + cols)
        v = np.zeros((n, n + 1) + cols)
        u[1:n] = y[: self.n_u].reshape((n - 1, n) + cols)
        v[:, 1:n] = y[self.n_u :].reshape((n, n - 1) + cols)
        return u, v

    def join_full(self, u: np.ndarray, v: np.ndarray) -> np.ndarray:
        n = self.n
        cols = u.shape[2:]
        return np.concatenate(
            [u[1:n].reshape((self.n_u,) + cols), v[:, 1:n].reshape((self.n_u,) + cols)]
        )

    def speed_sq_cells(self, y: np.ndarray) -> np.ndarray:
        """``|y|^2`` at cell centres (RMS of adjacent face values)."""
        u, v = self.split_flat(y)
        return 0.5 * (u[:-1] ** 2 + u[1:] ** 2) + 0.5 * (v[:, :-1] ** 2 + v[:, 1:] ** 2)

    def gradient_components(self, y: np.ndarray):
        """``(du/dx, du/dy, dv/dx, dv/dy)``; cross derivatives live on nodes."""
        u, v = self.split_flat(y)
        h = self.h
        dudx = (u[1:] - u[:-1]) / h
        dvdy = (v[:, 1:] - v[:, :-1]) / h
        # nodes (i, j), i, j = 0..n; ghost reflection at the tangential walls
        up = np.concatenate([-u[:, :1], u, -u[:, -1:]], axis=1)
        dudy = (up[:, 1:] - up[:, :-1]) / h
        vp = np.concatenate([-v[:1], v, -v[-1:]], axis=0)
        dvdx = (vp[1:] - vp[:-1]) / h
        return dudx, dudy, dvdx, dvdy

    def grad_sq_cells(self, y: np.ndarray) -> np.ndarray:
        dudx, dudy, dvdx, dvdy = self.gradient_components(y)
        nodal = dudy**2 + dvdx**2
        corners = 0.25 * (nodal[:-1, :-1] + nodal[1:, :-1] + nodal[:-1, 1:] + nodal[1:, 1:])
        return dudx**2 + dvdy**2 + corners

    def face_coordinates(self):
        """Coordinates of the interior dofs, in flat order: ``(x, y, component)``."""
        n, h = self.n, self.h
        xu, yu = np.meshgrid(np.arange(1, n) * h, (np.arange(n) + 0.5) * h, indexing="ij")
        xv, yv = np.meshgrid((np.arange(n) + 0.5) * h, np.arange(1, n) * h, indexing="ij")
        x = np.concatenate([xu.ravel(), xv.ravel()])
        yy = np.concatenate([yu.ravel(), yv.ravel()])
        comp = np.concatenate([np.zeros(self.n_u, int), np.ones(self.n_u, int)])
        return x, yy, comp

    def cell_centers(self):
        c = (np.arange(self.n) + 0.5) * self.h
        return np.meshgrid(c, c, indexing="ij")

    def field_from_function(self, func) -> "VelocityField":
        """Sample ``func(x, y) -> (fx, fy)`` at the faces (walls forced to zero)."""
        x, yy, comp = self.face_coordinates()
        fx, fy = func(x, yy)
        fx = np.broadcast_to(np.asarray(fx, float), x.shape)
        fy = np.broadcast_to(np.asarray(fy, float), x.shape)
        flat = np.where(comp == 0, fx, fy)
        return VelocityField.from_flat(self, flat)


def build_grid(n: int) -> Grid:
    """Return the ``n x n`` MAC grid of the unit square."""
    if int(n) != n or n < MIN_CELLS:
        raise ConfigurationError(f"grid needs n >= {MIN_CELLS} cells per side, got {n}")
    n = int(n)
    return Grid(n=n, h=1.0 / n)


@dataclass(frozen=True, eq=False)
class VelocityField:
    """Face-centred velocity; ``u`` is ``(n+1, n)``, ``v`` is ``(n, n+1)``."""

    u: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        u = np.asarray(self.u, dtype=float)
        v = np.asarray(self.v, dtype=float)
        if u.ndim != 2 or v.shape != (u.shape[1], u.shape[0]) or u.shape[0] != u.shape[1] + 1:
            raise DimensionError(f"inconsistent face arrays {u.shape} and {v.shape}")
        if not (np.all(np.isfinite(u)) and np.all(np.isfinite(v))):
            raise NumericalError("velocity field contains non-finite entries")
        u = u.copy()
        v = v.copy()
        u[0] = u[-1] = 0.0
        v[:, 0] = v[:, -1] = 0.0
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "v", v)

    @property
    def n(self) -> int:
        return self.u.shape[1]

    @classmethod
    def zeros(cls, g: Grid) -> "VelocityField":
        return cls(np.zeros((g.n + 1, g.n)), np.zeros((g.n, g.n + 1)))

    @classmethod
    def from_flat(cls, g: Grid, flat: np.ndarray) -> "VelocityField":
        flat = np.asarray(flat, dtype=float)
        if flat.shape != (g.n_dof,):
            raise DimensionError(f"expected {g.n_dof} dofs, got shape {flat.shape}")
        return cls(*g.split_flat(flat))

    def flat(self) -> np.ndarray:
        n = self.n
        return np.concatenate([self.u[1:n].ravel(), self.v[:, 1:n].ravel()])

    def __add__(self, other: "VelocityField") -> "VelocityField":
        return VelocityField(self.u + other.u, self.v + other.v)

    def __sub__(self, other: "VelocityField") -> "VelocityField":
        return VelocityField(self.u - other.u, self.v - other.v)

    def __mul__(self, c: float) -> "VelocityField":
        return VelocityField(c * self.u, c * self.v)

    __rmul__ = __mul__

    def __neg__(self) -> "VelocityField":
        return VelocityField(-self.u, -self.v)


@dataclass(frozen=True, eq=False)
class ScalarField:
    """Cell-centred scalar, ``values`` of shape ``(n, n)``."""

    values: np.ndarray

    def __post_init__(self):
        vals = np.array(self.values, dtype=float)
        if vals.ndim != 2 or vals.shape[0] != vals.shape[1]:
            raise DimensionError(f"scalar field must be square, got {vals.shape}")
        if not np.all(np.isfinite(vals)):
            raise NumericalError("scalar field contains non-finite entries")
        object.__setattr__(self, "values", vals)

    def mean(self) -> float:
        return float(self.values.mean())


def _check(g: Grid, *fields) -> None:
    for f in fields:
        if isinstance(f, VelocityField):
            if f.n != g.n:
                raise DimensionError(f"field has n={f.n}, grid has n={g.n}")
        elif isinstance(f, ScalarField):
            if f.values.shape != (g.n, g.n):
                raise DimensionError(f"scalar field {f.values.shape} on grid n={g.n}")
        else:
            raise DimensionError(f"unsupported field type {type(f).__name__}")


def divergence(g: Grid, y: VelocityField) -> ScalarField:
    """Centred MAC divergence at cell centres."""
    _check(g, y)
    return ScalarField((g.div_matrix @ y.flat()).reshape(g.n, g.n))


def gradient(g: Grid, p: ScalarField) -> VelocityField:
    """Face gradient of a cell-centred scalar; wall faces are zero."""
    _check(g, p)
    return VelocityField.from_flat(g, g.grad_matrix @ p.values.ravel())


def laplacian(g: Grid, y: VelocityField) -> VelocityField:
    _check(g, y)
    return VelocityField.from_flat(g, g.lap_matrix @ y.flat())


def leray_project(g: Grid, y: VelocityField) -> VelocityField:
    """``y - grad H`` with ``div grad H = div y`` and zero-mean ``H``."""
    _check(g, y)
    return VelocityField.from_flat(g, g.leray_flat(y.flat()))


def inner_L2(g: Grid, y1: VelocityField, y2: VelocityField) -> float:
    _check(g, y1, y2)
    return float(g.cell_area * np.dot(y1.flat(), y2.flat()))


def _lr_from_cells(g: Grid, sq: np.ndarray, r: float) -> float:
    if r < 1:
        raise ConfigurationError(f"L^r norms need r >= 1, got {r}")
    mag = np.sqrt(sq)
    peak = float(mag.max()) if mag.size else 0.0
    if peak == 0.0:
        return 0.0
    # scale first so large r does not overflow
    return peak * float((g.cell_area * np.sum((mag / peak) ** r)) ** (1.0 / r))


def norm_Lr(g: Grid, y: VelocityField, r: float) -> float:
    """Midpoint-rule ``(int |y|^r dx)^(1/r)``."""
    _check(g, y)
    return _lr_from_cells(g, g.speed_sq_cells(y.flat()), r)


def norm_H1(g: Grid, y: VelocityField) -> float:
    """L2 norm of the discrete gradient (the W_0^{1,2} norm)."""
    _check(g, y)
    return flat_norm_H1(g, y.flat())


def norm_W1p(g: Grid, y: VelocityField, p: float) -> float:
    """``(int |grad y|^p dx)^(1/p)`` with the same cell quadrature."""
    _check(g, y)
    return _lr_from_cells(g, g.grad_sq_cells(y.flat()), p)


# -- flat-vector versions used by the solvers ---------------------------------


def flat_norm_Lr(g: Grid, y: np.ndarray, r: float) -> float:
    return _lr_from_cells(g, g.speed_sq_cells(y), r)


def flat_norm_H1(g: Grid, y: np.ndarray) -> float:
    dudx, dudy, dvdx, dvdy = g.gradient_components(y)
    # boundary nodes carry half weight; x-wall nodes of dudy are identically 0
    wy = np.ones(g.n + 1)
    wy[0] = wy[-1] = 0.5
    total = (
        np.sum(dudx**2)
        + np.sum(dvdy**2)
        + np.sum(dudy**2 * wy[None, :])
        + np.sum(dvdx**2 * wy[:, None])
    )
    return float(np.sqrt(g.cell_area * total))


def flat_norm_W1p(g: Grid, y: np.ndarray, p: float) -> float:
    return _lr_from_cells(g, g.grad_sq_cells(y), p)


# -- convection ---------------------------------------------------------------


def convect_flat(g: Grid, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Flux-form ``div(a (x) b)`` at interior faces; ``b`` may carry columns.

    Advecting velocities are averaged linearly to the control-volume faces and
    the transported field by the two neighbouring values.  The operator
    ``b -> convect(a, b)`` is skew-adjoint up to a diagonal equal to half the
    control-volume average of ``div a``, so it is exactly skew for discretely
    divergence-free ``a``.
    """
    n, h = g.n, g.h
    au, av = g.split_flat(a)
    bu, bv = g.split_flat(b)
    extra = (None,) * (bu.ndim - 2)

    def col(x):
        return x[(Ellipsis,) + extra] if extra else x

    # u-momentum control volumes at faces i = 1..n-1
    ue = 0.5 * (au[1:n] + au[2 : n + 1])
    uw = 0.5 * (au[0 : n - 1] + au[1:n])
    vn = 0.5 * (av[0 : n - 1, 1:] + av[1:n, 1:])
    vs = 0.5 * (av[0 : n - 1, :-1] + av[1:n, :-1])
    bpad = np.concatenate([np.zeros_like(bu[:, :1]), bu, np.zeros_like(bu[:, :1])], axis=1)
    center = bu[1:n]
    flux = (
        col(ue) * (center + bu[2 : n + 1])
        - col(uw) * (bu[0 : n - 1] + center)
        + col(vn) * (center + bpad[1:n, 2:])
        - col(vs) * (bpad[1:n, :-2] + center)
    )
    cu = np.zeros_like(bu)
    cu[1:n] = flux / (2.0 * h)

    # v-momentum control volumes at faces j = 1..n-1
    vnn = 0.5 * (av[:, 1:n] + av[:, 2 : n + 1])
    vss = 0.5 * (av[:, 0 : n - 1] + av[:, 1:n])
    uee = 0.5 * (au[1:, 0 : n - 1] + au[1:, 1:n])
    uww = 0.5 * (au[:-1, 0 : n - 1] + au[:-1, 1:n])
    vpad = np.concatenate([np.zeros_like(bv[:1]), bv, np.zeros_like(bv[:1])], axis=0)
    vcenter = bv[:, 1:n]
    flux = (
        col(vnn) * (vcenter + bv[:, 2 : n + 1])
        - col(vss) * (bv[:, 0 : n - 1] + vcenter)
        + col(uee) * (vcenter + vpad[2:, 1:n])
        - col(uww) * (vpad[:-2, 1:n] + vcenter)
    )
    cv = np.zeros_like(bv)
    cv[:, 1:n] = flux / (2.0 * h)
    return g.join_full(cu, cv)


def convect(g: Grid, a: VelocityField, b: VelocityField) -> VelocityField:
    """Discrete ``(a . grad) b`` in flux form."""
    _check(g, a, b)
    return VelocityField.from_flat(g, convect_flat(g, a.flat(), b.flat()))


def trilinear(g: Grid, a: VelocityField, b: VelocityField, w: VelocityField) -> float:
    """``b(a, b, w) = int (a . grad) b . w dx``."""
    _check(g, a, b, w)
    return float(g.cell_area * np.dot(convect_flat(g, a.flat(), b.flat()), w.flat()))
