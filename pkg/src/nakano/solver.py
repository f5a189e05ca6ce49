"""The d-equation on boxes and the quantitative checks built on it."""
from __future__ import annotations

from dataclasses import asdict, dataclass
from functools import lru_cache

import numpy as np

from .diffops import (CurvatureTensor, curvature_tensor, d0, d1, d_star, diff, gram_field, hessian,
                      stencil_matrix)
from .errors import ClosednessError, GramNotPD, HessianNotPD, MassSingularError, PathMismatchError, SupportError
from .fields import GridSpec, MatrixField, OneForm, ScalarField, SectionField, same_grid
from .quadrature import (QuadratureRule, hess_inv_pairing, inner_sections, inner_twoforms,
                         pointwise_g)

TAU_CLOSED = 1e-8
TAU_CONV = 1e-10
EPS_REP = 1e-6
COLLAR = 2


@lru_cache(maxsize=32)
def _antiderivative(points: int, h: float) -> np.ndarray:
    """Left inverse of the 1-D difference stencil, normalized to vanish at index 0.

    Maps node values f to u with D u = f whenever f is in the range of D
    (least squares otherwise).
    """
    D = stencil_matrix(points, h)
    P = np.zeros((points, points))
    P[1:] = np.linalg.pinv(D[:, 1:])
    P.setflags(write=False)
    return P


def _staircase(c: np.ndarray, grid: GridSpec, order) -> np.ndarray:
    """Line integral from the min corner, walking the axes in ``order``."""
    n = grid.n
    u = np.zeros(c.shape[1:])
    for pos, k in enumerate(order):
        later = order[pos + 1:]
        idx = tuple(slice(0, 1) if a in later else slice(None) for a in range(n))
        line = c[k][idx]
        P = _antiderivative(grid.points[k], grid.spacing[k])
        seg = np.moveaxis(np.tensordot(P, line, axes=([1], [k])), 0, k)
        u = u + seg
    return u


def closedness_residual(f: OneForm) -> float:
    """Max |d1 f| over interior nodes (0 when n == 1)."""
    df = d1(f)
    if df.components.shape[0] == 0:
        return 0.0
    interior = ~f.grid.boundary_mask()
    vals = np.abs(df.components)[:, interior]
    return float(vals.max()) if vals.size else 0.0


def solve_potential(f: OneForm, tau_closed: float = TAU_CLOSED) -> SectionField:
    """A section u with d0(u) = f, vanishing at the min corner of the box.

    Each staircase segment inverts the difference stencil along its axis, so
    for a discrete gradient f both path orders agree and d0(u) = f up to
    rounding.
    """
    grid = f.grid
    scale = 1.0 + float(np.max(np.abs(f.components)))
    tol = tau_closed * scale
    res = closedness_residual(f)
    if res > tol:
        raise ClosednessError(res, tol)
    order = tuple(range(grid.n))
    u = _staircase(f.components, grid, order)
    if grid.n > 1:
        u_rev = _staircase(f.components, grid, order[::-1])
        mismatch = float(np.max(np.abs(u - u_rev)))
        if mismatch > tol:
            raise PathMismatchError(mismatch, tol)
    return SectionField(grid, u)


def weighted_mass(g: MatrixField, psi: ScalarField = None, rule: QuadratureRule = None) -> np.ndarray:
    rule = rule or QuadratureRule(g.grid)
    w = rule.weights if psi is None else rule.weights * np.exp(-psi.values)
    return np.tensordot(w, g.values, axes=w.ndim)


def minimal_solution(u: SectionField, g: MatrixField, psi: ScalarField = None,
                     rule: QuadratureRule = None) -> SectionField:
    """Remove from u its weighted projection onto constant sections."""
    grid = same_grid(u, g)
    rule = rule or QuadratureRule(grid)
    w = rule.weights if psi is None else rule.weights * np.exp(-psi.values)
    mass = np.tensordot(w, g.values, axes=w.ndim)
    moment = np.tensordot(w, np.einsum("...ab,...b->...a", g.values, u.values), axes=w.ndim)
    if not np.all(np.isfinite(mass)) or np.linalg.cond(mass) > 1e14:
        raise MassSingularError("weighted mass matrix is singular")
    c = np.linalg.solve(mass, moment)
    return SectionField(grid, u.values - c)


def _check_support(values: np.ndarray, grid: GridSpec, collar: int, what: str):
    """values: (n,) + grid + (r,). Raise unless zero on the boundary collar."""
    mag = np.max(np.abs(values), axis=(0, -1))
    tol = 1e-12 * (1.0 + float(mag.max()))
    inside = grid.boundary_mask(collar)
    bad = inside & (mag > tol)
    if np.any(bad):
        node = np.unravel_index(int(np.argmax(bad)), grid.shape)
        raise SupportError(f"{what} is nonzero on the {collar}-node boundary collar", node, float(mag[node]))


@dataclass(frozen=True)
class EstimateReport:
    lhs: float
    rhs: float
    holds: bool
    closedness_residual: float
    boundary_mass: float
    eps_rep: float
    conclusive: bool
    path_residual: float

    @property
    def ratio(self) -> float:
        return self.lhs / self.rhs if self.rhs > 0 else 0.0

    def to_dict(self):
        d = asdict(self)
        d["ratio"] = self.ratio
        return d


def check_optimal_estimate(g: MatrixField, psi: ScalarField, f: OneForm, rule: QuadratureRule = None,
                           eps_rep: float = EPS_REP, tau_conv: float = TAU_CONV,
                           tau_closed: float = TAU_CLOSED, collar: int = COLLAR) -> EstimateReport:
    """Compare the minimal weighted solution of du = f with the Hessian bound.

    The tolerance is ``eps_rep + boundary_mass / rhs``; the check is
    conclusive only when the weight is negligible on the boundary collar
    (``boundary_mass <= 1e-10 * rhs``).
    """
    grid = same_grid(g, psi, f)
    rule = rule or QuadratureRule(grid)
    _check_support(f.components, grid, collar, "f")
    H = hessian(psi)
    lam = H.min_eigen()
    if np.any(lam <= tau_conv):
        node = np.unravel_index(int(np.argmin(lam)), grid.shape)
        raise HessianNotPD("psi is not strictly convex", node, float(lam[node]))
    res = closedness_residual(f)
    u = minimal_solution(solve_potential(f, tau_closed), g, psi, rule)
    path_res = float(np.max(np.abs(d0(u).components - f.components)))
    lhs = inner_sections(u, u, g, psi, rule)
    rhs = hess_inv_pairing(f, H, g, psi, rule, tau_conv)
    mass = rule.sum(np.exp(-psi.values) * grid.boundary_mask(collar))
    eps = eps_rep + (mass / rhs if rhs > 0 else 0.0)
    holds = lhs <= rhs * (1.0 + eps)
    return EstimateReport(
        lhs=lhs, rhs=rhs, holds=bool(holds), closedness_residual=res, boundary_mass=mass,
        eps_rep=eps, conclusive=bool(mass <= 1e-10 * rhs), path_residual=path_res,
    )


@dataclass(frozen=True)
class BochnerRecord:
    lhs: float
    rhs: float
    residual: float
    dstar_term: float
    d_term: float
    curvature_term: float
    gradient_term: float

    @property
    def relative(self) -> float:
        den = max(abs(self.lhs), abs(self.rhs))
        return self.residual / den if den > 0 else 0.0

    def to_dict(self):
        d = asdict(self)
        d["relative"] = self.relative
        return d


def stacked(alpha: OneForm) -> np.ndarray:
    """Node-wise stacked coefficients, shape ``grid + (n*r,)``."""
    c = np.moveaxis(alpha.components, 0, -2)
    return c.reshape(alpha.grid.shape + (alpha.grid.n * alpha.r,))


def curvature_pairing_density(alpha: OneForm, g: MatrixField, theta: CurvatureTensor) -> np.ndarray:
    """Node-wise sum_jk <theta_jk alpha_j, alpha_k>_g."""
    a = stacked(alpha)
    return np.einsum("...i,...ij,...j->...", a, gram_field(g, theta), a)


def bochner_residual(alpha: OneForm, g: MatrixField, rule: QuadratureRule = None,
                     collar: int = COLLAR, theta: CurvatureTensor = None) -> BochnerRecord:
    """Both sides of the Bochner identity for a compactly supported 1-form."""
    grid = same_grid(alpha, g)
    rule = rule or QuadratureRule(grid)
    _check_support(alpha.components, grid, collar, "alpha")
    theta = theta or curvature_tensor(g)
    ds = d_star(alpha, g)
    da = d1(alpha)
    dstar_term = inner_sections(ds, ds, g, None, rule)
    d_term = inner_twoforms(da, da, g, None, rule)
    curv = rule.sum(curvature_pairing_density(alpha, g, theta))
    c = alpha.components
    grad_dens = np.zeros(grid.shape)
    for i in range(grid.n):
        for j in range(grid.n):
            dij = diff(c[i], grid, j)
            grad_dens += pointwise_g(dij, dij, g.values)
    grad = rule.sum(grad_dens)
    lhs = dstar_term + d_term
    rhs = curv + grad
    return BochnerRecord(lhs, rhs, abs(lhs - rhs), dstar_term, d_term, curv, grad)


@dataclass(frozen=True)
class CauchySchwarzRecord:
    lhs: float
    rhs: float
    holds: bool

    def to_dict(self):
        return asdict(self)


def _metric_stack(f: OneForm, g: MatrixField) -> np.ndarray:
    """Stacked g f_k at every node."""
    gf = np.einsum("...ab,k...b->k...a", g.values, f.components)
    return np.moveaxis(gf, 0, -2).reshape(f.grid.shape + (f.grid.n * f.r,))


def _support_nodes(f: OneForm) -> np.ndarray:
    return np.max(np.abs(f.components), axis=(0, -1)) > 0


def _gram_on_support(f, g, theta):
    M = gram_field(g, theta)
    mask = _support_nodes(f)
    if np.any(mask):
        lam = np.linalg.eigvalsh(M[mask])[:, 0]
        if np.any(lam <= 0):
            k = int(np.argmin(lam))
            node = tuple(int(v[k]) for v in np.nonzero(mask))
            raise GramNotPD("Nakano Gram is not positive definite", node, float(lam[k]))
    return M, mask


def theta_inverse(f: OneForm, g: MatrixField, theta: CurvatureTensor = None) -> OneForm:
    """Node-wise Theta^{-1} f, realized as M^{-1} (g f) with M the symmetrized Gram."""
    grid = same_grid(f, g)
    theta = theta or curvature_tensor(g)
    M, mask = _gram_on_support(f, g, theta)
    out = np.zeros(grid.shape + (grid.n * f.r,))
    out[mask] = np.linalg.solve(M[mask], _metric_stack(f, g)[mask][..., None])[..., 0]
    comps = np.moveaxis(out.reshape(grid.shape + (grid.n, f.r)), -2, 0)
    return OneForm(grid, comps)


def cauchy_schwarz_check(f: OneForm, alpha: OneForm, g: MatrixField, theta: CurvatureTensor = None,
                         rule: QuadratureRule = None, eps_rep: float = EPS_REP) -> CauchySchwarzRecord:
    grid = same_grid(f, alpha, g)
    rule = rule or QuadratureRule(grid)
    theta = theta or curvature_tensor(g)
    M, mask = _gram_on_support(f, g, theta)
    gf = _metric_stack(f, g)
    a = stacked(alpha)
    pair = rule.sum(np.einsum("...i,...i->...", gf, a))
    inv_dens = np.zeros(grid.shape)
    if np.any(mask):
        sol = np.linalg.solve(M[mask], gf[mask][..., None])[..., 0]
        inv_dens[mask] = np.einsum("ki,ki->k", gf[mask], sol)
    theta_inv_ff = rule.sum(inv_dens)
    theta_aa = rule.sum(np.einsum("...i,...ij,...j->...", a, M, a))
    lhs = pair ** 2
    rhs = theta_inv_ff * theta_aa
    return CauchySchwarzRecord(lhs, rhs, bool(lhs <= rhs * (1.0 + eps_rep)))
