"""Finite-difference exterior calculus on tensor grids.

All derivatives use second-order central differences at interior nodes and
second-order one-sided stencils at boundary nodes.  The boundary stencil
(-2, 7/2, -2, 1/2)/h has the same leading error term (h^2/6) f''' as the
central stencil, so the first-derivative error is smooth up to the boundary
and nested derivatives (Hessians, curvature) stay second order at every
node.  Axes with only 3 points fall back to the 3-point one-sided stencil.
The 1-D stencils along different axes commute exactly, so ``d1(d0(u))``
vanishes up to rounding at every node.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import AxisError, NotPositiveDefinite, ShapeError
from .fields import GridSpec, MatrixField, OneForm, ScalarField, SectionField, TwoForm, same_grid


def diff(values: np.ndarray, grid: GridSpec, axis: int, lead: int = 0) -> np.ndarray:
    """Derivative of a raw node array along grid ``axis``.

    ``lead`` counts non-spatial axes in front of the grid axes.
    """
    if not 0 <= axis < grid.n:
        raise AxisError(f"axis {axis} out of range for a {grid.n}-dimensional grid")
    moved = np.moveaxis(values, lead + axis, -1)
    return np.moveaxis(_diff_last(moved, grid.spacing[axis]), -1, lead + axis)


_EDGE4 = np.array([-2.0, 3.5, -2.0, 0.5])
_EDGE3 = np.array([-1.5, 2.0, -0.5])


def _diff_last(a: np.ndarray, h: float) -> np.ndarray:
    out = np.empty(a.shape)
    out[..., 1:-1] = (a[..., 2:] - a[..., :-2]) / (2.0 * h)
    edge = _EDGE4 if a.shape[-1] >= 4 else _EDGE3
    k = len(edge)
    out[..., 0] = a[..., :k] @ edge / h
    out[..., -1] = -(a[..., ::-1][..., :k] @ edge) / h
    return out


def stencil_matrix(points: int, h: float) -> np.ndarray:
    """The 1-D difference operator as a dense ``points x points`` matrix."""
    return _diff_last(np.eye(points), h).T


def partial(field, axis: int):
    """Partial derivative along ``axis``; returns a field of the same type."""
    if isinstance(field, OneForm):
        return OneForm(field.grid, diff(field.components, field.grid, axis, lead=1))
    return type(field)(field.grid, diff(field.values, field.grid, axis))


@dataclass(frozen=True)
class HessianField:
    grid: GridSpec
    values: np.ndarray
    inverse: Optional[np.ndarray] = None

    def with_inverse(self) -> "HessianField":
        if self.inverse is not None:
            return self
        return HessianField(self.grid, self.values, np.linalg.inv(self.values))

    def min_eigen(self):
        return np.linalg.eigvalsh(self.values)[..., 0]


def hessian(psi: ScalarField) -> HessianField:
    grid = psi.grid
    n = grid.n
    first = [diff(psi.values, grid, i) for i in range(n)]
    H = np.empty(grid.shape + (n, n))
    for i in range(n):
        for j in range(n):
            H[..., i, j] = diff(first[i], grid, j)
    H = 0.5 * (H + np.swapaxes(H, -1, -2))
    H.setflags(write=False)
    return HessianField(grid, H)


@dataclass(frozen=True)
class CurvatureTensor:
    """``blocks[..., j, k, :, :]`` is the r x r matrix theta_jk at each node."""

    grid: GridSpec
    blocks: np.ndarray

    def __post_init__(self):
        b = self.blocks
        n = self.grid.n
        if b.shape[:n] != self.grid.shape or b.shape[n:n + 2] != (n, n) or b.ndim != n + 4:
            raise ShapeError(f"curvature blocks shape {b.shape} does not fit grid {self.grid.shape}")

    @property
    def r(self) -> int:
        return self.blocks.shape[-1]

    def at(self, node) -> np.ndarray:
        return self.blocks[tuple(node)]


def _inverse(g: MatrixField) -> np.ndarray:
    lam = np.linalg.eigvalsh(g.values)[..., 0]
    if np.any(lam <= 0):
        node = np.unravel_index(int(np.argmin(lam)), g.grid.shape)
        raise NotPositiveDefinite("metric is singular or indefinite", node, float(lam[node]))
    return g.inverse


def connection(g: MatrixField) -> np.ndarray:
    """Stack ``A_j = g^{-1} dg/dx_j`` with shape ``(n,) + grid + (r, r)``."""
    ginv = _inverse(g)
    return np.stack([ginv @ diff(g.values, g.grid, j) for j in range(g.grid.n)])


def curvature_tensor(g: MatrixField) -> CurvatureTensor:
    """theta_jk = -d/dx_k (g^{-1} dg/dx_j), differentiated entrywise."""
    grid = g.grid
    n = grid.n
    A = connection(g)
    blocks = np.empty(grid.shape + (n, n, g.r, g.r))
    for j in range(n):
        for k in range(n):
            blocks[..., j, k, :, :] = -diff(A[j], grid, k)
    blocks.setflags(write=False)
    return CurvatureTensor(grid, blocks)


def d0(u: SectionField) -> OneForm:
    return OneForm(u.grid, np.stack([diff(u.values, u.grid, i) for i in range(u.grid.n)]))


def d1(alpha: OneForm) -> TwoForm:
    grid = alpha.grid
    n = grid.n
    c = alpha.components
    comps = [diff(c[j], grid, i) - diff(c[i], grid, j) for i in range(n) for j in range(i + 1, n)]
    return TwoForm(grid, np.stack(comps) if comps else np.zeros((0,) + c.shape[1:]))


def d_star(alpha: OneForm, g: MatrixField) -> SectionField:
    """Formal adjoint of d0 for the metric g: -sum_i (g^{-1} g_i alpha_i + d alpha_i/dx_i)."""
    grid = same_grid(alpha, g)
    A = connection(g)
    c = alpha.components
    out = np.zeros(grid.shape + (alpha.r,))
    for i in range(grid.n):
        out += np.einsum("...ab,...b->...a", A[i], c[i]) + diff(c[i], grid, i)
    return SectionField(grid, -out)


def gram_field(g: MatrixField, theta: CurvatureTensor) -> np.ndarray:
    """Symmetrized Nakano Gram matrices at every node, shape ``grid + (n*r, n*r)``.

    Block (k, j) of the unsymmetrized matrix is ``g theta_jk`` so that the
    quadratic form on stacked ``u = (u_1..u_n)`` is sum_jk <theta_jk u_j, u_k>_g.
    Only the symmetric part enters the quadratic form, so that is returned.
    """
    if theta.grid != g.grid or theta.r != g.r:
        raise ShapeError("curvature tensor and metric do not match")
    n, r = g.grid.n, g.r
    P = np.einsum("...ac,...jkcb->...jkab", g.values, theta.blocks)
    # rows indexed by (k, a), columns by (j, b)
    M = np.swapaxes(P, -4, -3)  # ... k j a b
    M = np.swapaxes(M, -3, -2)  # ... k a j b
    M = M.reshape(g.grid.shape + (n * r, n * r))
    return 0.5 * (M + np.swapaxes(M, -1, -2))


def nakano_gram(g: MatrixField, theta: CurvatureTensor, node) -> np.ndarray:
    """The symmetrized (n*r) x (n*r) Nakano Gram matrix at a single node."""
    if theta.grid != g.grid or theta.r != g.r:
        raise ShapeError("curvature tensor and metric do not match")
    node = tuple(node)
    n, r = g.grid.n, g.r
    gv = g.values[node]
    th = theta.blocks[node]
    M = np.empty((n * r, n * r))
    for k in range(n):
        for j in range(n):
            M[k * r:(k + 1) * r, j * r:(j + 1) * r] = gv @ th[j, k]
    return 0.5 * (M + M.T)
