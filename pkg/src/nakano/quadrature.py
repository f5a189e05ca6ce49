"""Tensor-product trapezoidal quadrature and weighted inner products.

Sums run over the C-ordered node array with numpy's pairwise reduction, so
a given input always produces the same bits.  Parallel evaluation of the
integrands (not performed here) may differ in the last ulps.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import GridError, HessianNotPD, NotPositiveDefinite
from .fields import GridSpec, MatrixField, OneForm, ScalarField, SectionField, TwoForm


def trapezoid_weights_1d(points: int, h: float) -> np.ndarray:
    w = np.full(points, h)
    w[0] = w[-1] = 0.5 * h
    return w


@dataclass(frozen=True)
class QuadratureRule:
    grid: GridSpec

    @cached_property
    def weights(self) -> np.ndarray:
        w = np.ones(())
        for p, h in zip(self.grid.points, self.grid.spacing):
            w = np.multiply.outer(w, trapezoid_weights_1d(p, h))
        w.setflags(write=False)
        return w

    def sum(self, density: np.ndarray) -> float:
        """Quadrature of raw node values of shape ``grid.shape``."""
        if density.shape != self.grid.shape:
            raise GridError(f"density shape {density.shape} != grid {self.grid.shape}")
        return float(np.sum((self.weights * density).ravel()))


def _rule(grid, rule):
    if rule is None:
        return QuadratureRule(grid)
    if rule.grid != grid:
        raise GridError("quadrature rule lives on a different grid")
    return rule


def _check(grid, *fields):
    for f in fields:
        if f is not None and f.grid != grid:
            raise GridError("fields live on different grids")


def _weight(psi, grid):
    if psi is None:
        return np.ones(grid.shape)
    return np.exp(-psi.values)


def _metric_values(g, grid, r):
    if g is None:
        return np.broadcast_to(np.eye(r), grid.shape + (r, r))
    lam = np.linalg.eigvalsh(g.values)[..., 0]
    if np.any(lam <= 0):
        node = np.unravel_index(int(np.argmin(lam)), grid.shape)
        raise NotPositiveDefinite("metric is not positive definite", node, float(lam[node]))
    return g.values


def pointwise_g(a: np.ndarray, b: np.ndarray, gv: np.ndarray) -> np.ndarray:
    """Node-wise ``<a, b>_g = b^T g a`` for stacks of r-vectors."""
    return np.einsum("...a,...ab,...b->...", b, gv, a)


def integrate(field: ScalarField, rule: QuadratureRule = None) -> float:
    rule = _rule(field.grid, rule)
    return rule.sum(field.values)


def inner_sections(u: SectionField, v: SectionField, g: MatrixField = None,
                   psi: ScalarField = None, rule: QuadratureRule = None) -> float:
    """Weighted pairing: integral of v^T g u e^{-psi}."""
    grid = u.grid
    _check(grid, v, g, psi)
    rule = _rule(grid, rule)
    gv = _metric_values(g, grid, u.r)
    return rule.sum(pointwise_g(u.values, v.values, gv) * _weight(psi, grid))


def inner_forms(alpha: OneForm, beta: OneForm, g: MatrixField = None,
                psi: ScalarField = None, rule: QuadratureRule = None) -> float:
    grid = alpha.grid
    _check(grid, beta, g, psi)
    rule = _rule(grid, rule)
    gv = _metric_values(g, grid, alpha.r)
    dens = sum(pointwise_g(alpha.components[i], beta.components[i], gv) for i in range(grid.n))
    return rule.sum(dens * _weight(psi, grid))


def inner_twoforms(a: TwoForm, b: TwoForm, g: MatrixField = None,
                   psi: ScalarField = None, rule: QuadratureRule = None) -> float:
    grid = a.grid
    _check(grid, b, g, psi)
    rule = _rule(grid, rule)
    if len(a.pairs) == 0:
        return 0.0
    gv = _metric_values(g, grid, a.r)
    dens = sum(pointwise_g(a.components[p], b.components[p], gv) for p in range(len(a.pairs)))
    return rule.sum(dens * _weight(psi, grid))


def hess_inv_pairing(f: OneForm, H, g: MatrixField = None, psi: ScalarField = None,
                     rule: QuadratureRule = None, tau_conv: float = 1e-10) -> float:
    """Integral of sum_ij psi^{ij} <f_i, f_j>_g e^{-psi}.

    ``H`` is a :class:`~nakano.diffops.HessianField`; strict convexity
    (smallest eigenvalue > tau_conv) is required at every node.
    """
    grid = f.grid
    _check(grid, H, g, psi)
    rule = _rule(grid, rule)
    lam = H.min_eigen()
    if np.any(lam <= tau_conv):
        node = np.unravel_index(int(np.argmin(lam)), grid.shape)
        raise HessianNotPD("Hessian is not positive definite", node, float(lam[node]))
    Hinv = H.with_inverse().inverse
    gv = _metric_values(g, grid, f.r)
    c = f.components
    n = grid.n
    dens = np.zeros(grid.shape)
    for i in range(n):
        for j in range(n):
            dens += Hinv[..., i, j] * pointwise_g(c[i], c[j], gv)
    return rule.sum(dens * _weight(psi, grid))
