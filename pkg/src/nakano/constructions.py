"""Falsifier for Nakano semipositivity and the fiber-integration pipeline.

The falsifier seeds a closed, compactly supported form f = d((xi . (x - x0)) chi)
that equals xi on the half-radius ball, pairs it with the convex weights
psi_s = s (|x - x0|^2 - rho^2 / 4) and evaluates, for alpha_s = f / (2 s),

    s^2 [ int sum_jk <theta_jk alpha_j, alpha_k>_g e^{-psi_s}
          + int sum_jk <d_k alpha_j, d_j alpha_k>_g e^{-psi_s} ].

Semipositive metrics keep this nonnegative for every s; a negative
direction xi at x0 drives it below zero once s is large.
"""
from __future__ import annotations

import csv
import io
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, replace
from typing import Optional

import numpy as np

from .diffops import CurvatureTensor, curvature_tensor, d0, diff, gram_field
from .errors import DomainError, TruncationError
from .fields import (GridSpec, MatrixField, OneForm, ScalarField, SectionField, check_metric_values,
                     coord_to_nearest_index, node_coords)
from .positivity import DEFAULT_TAU, PositivityReport, nakano_verdict
from .quadrature import QuadratureRule, pointwise_g, trapezoid_weights_1d
from .solver import stacked

DEFAULT_SCHEDULE = tuple(2.0 ** k for k in range(15))
TAU_VIOL = 1e-6
MIN_ANNULUS_NODES = 8


class ResolutionWarning(UserWarning):
    pass


def smooth_step(s):
    """1 on (-inf, 0], 0 on [1, inf), smooth in between; equals 1/2 at s = 1/2."""
    s = np.asarray(s, dtype=float)
    out = np.where(s <= 0, 1.0, 0.0)
    mid = (s > 0) & (s < 1)
    t = s[mid]
    a = np.exp(-1.0 / (1.0 - t))
    b = np.exp(-1.0 / t)
    out[mid] = a / (a + b)
    return out


def _check_ball(center, radius, grid: GridSpec):
    center = np.asarray(center, dtype=float)
    if center.shape != (grid.n,):
        raise DomainError(f"center must have {grid.n} coordinates")
    if not radius > 0:
        raise DomainError("radius must be positive")
    lo = center - radius
    hi = center + radius
    if np.any(lo < np.array(grid.mins)) or np.any(hi > np.array(grid.maxs)):
        raise DomainError(f"ball B({center.tolist()}, {radius}) is not contained in the box")
    return center


def plateau_cutoff(center, radius: float, grid: GridSpec) -> ScalarField:
    """Smooth cutoff: 1 on B(center, radius/2), 0 outside B(center, radius)."""
    center = _check_ball(center, radius, grid)
    dist = np.sqrt(sum((x - c) ** 2 for x, c in zip(grid.mesh, center)))
    t = dist / radius
    return ScalarField(grid, smooth_step(2.0 * (t - 0.5)))


@dataclass(frozen=True)
class FalsifierConfig:
    center: tuple
    radius: float
    xi: Optional[tuple] = None
    s_schedule: tuple = DEFAULT_SCHEDULE
    c: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "center", tuple(float(v) for v in self.center))
        object.__setattr__(self, "s_schedule", tuple(float(v) for v in self.s_schedule))
        if self.xi is not None:
            xi = np.asarray(self.xi, dtype=float).ravel()
            norm = np.linalg.norm(xi)
            if norm == 0:
                raise DomainError("direction xi must be nonzero")
            object.__setattr__(self, "xi", tuple(float(v) for v in xi / norm))
        sched = self.s_schedule
        if not sched or any(s <= 0 for s in sched) or any(b <= a for a, b in zip(sched, sched[1:])):
            raise DomainError("s_schedule must be positive and strictly increasing")
        if not self.radius > 0:
            raise DomainError("radius must be positive")

    def to_dict(self):
        d = asdict(self)
        d["center"] = list(self.center)
        d["xi"] = None if self.xi is None else list(self.xi)
        d["s_schedule"] = list(self.s_schedule)
        return d


def annulus_resolution(cfg: FalsifierConfig, grid: GridSpec) -> int:
    """Fewest nodes spanning (rho/2, rho) along any axis."""
    return min(int(math.floor(0.5 * cfg.radius / h)) for h in grid.spacing)


def seed_form(cfg: FalsifierConfig, grid: GridSpec, r: Optional[int] = None) -> OneForm:
    """f = d0(v) with v = (sum_i xi_i (x_i - x0_i)) chi; xi is stacked (n*r,)."""
    if cfg.xi is None:
        raise DomainError("seed_form needs an explicit direction xi")
    xi = np.asarray(cfg.xi).reshape(grid.n, -1)
    if r is not None and xi.shape[1] != r:
        raise DomainError(f"xi has rank {xi.shape[1]}, expected {r}")
    lin, chi = _seed_parts(cfg, grid, xi)
    return d0(SectionField(grid, lin * chi[..., None]))


def _seed_parts(cfg, grid, xi):
    chi = plateau_cutoff(cfg.center, cfg.radius, grid).values
    lin = sum((x - c)[..., None] * xi[i] for i, (x, c) in enumerate(zip(grid.mesh, cfg.center)))
    return lin, chi


def psi_s(s: float, cfg: FalsifierConfig, grid: GridSpec) -> ScalarField:
    if not s > 0:
        raise DomainError("s must be positive")
    d2 = sum((x - c) ** 2 for x, c in zip(grid.mesh, cfg.center))
    return ScalarField(grid, s * (d2 - cfg.radius ** 2 / 4.0))


@dataclass(frozen=True)
class FunctionalRecord:
    """s^2-scaled falsifier terms.

    Values are computed with the weight e^{-psi_s - log_weight_shift} so that
    large s does not overflow; multiply by exp(log_weight_shift) for the raw
    values.  ``term_gradient_paired`` pairs d_k alpha_j with d_j alpha_k,
    ``term_gradient_full`` is sum_jk |d_k alpha_j|_g^2; ``term_gradient`` is
    the full form when r == 1 and the paired form otherwise, and
    ``total = term_curvature + term_gradient``.
    """

    s: float
    term_curvature: float
    term_gradient: float
    total: float
    term_gradient_paired: float
    term_gradient_full: float
    scale: float
    log_weight_shift: float

    def to_dict(self):
        return asdict(self)


class _Prepared:
    def __init__(self, g, cfg, rule, theta=None):
        self.grid = g.grid
        self.g = g
        self.rule = rule or QuadratureRule(g.grid)
        self.theta = theta or curvature_tensor(g)
        self.f = seed_form(cfg, g.grid, g.r)
        self.cfg = cfg
        c = self.f.components
        grid = self.grid
        a = stacked(self.f)
        self.curv_dens = np.einsum("...i,...ij,...j->...", a, gram_field(g, self.theta), a)
        cross = np.zeros(grid.shape)
        full = np.zeros(grid.shape)
        # second differences of the affine part vanish exactly; differentiate
        # lin * (chi - 1), which is 0 on the half ball, to avoid round-off there
        lin, chi = _seed_parts(cfg, grid, np.asarray(cfg.xi).reshape(grid.n, -1))
        rem = lin * (chi - 1.0)[..., None]
        first = [diff(rem, grid, j) for j in range(grid.n)]
        dc = [[diff(first[j], grid, k) for k in range(grid.n)] for j in range(grid.n)]
        for j in range(grid.n):
            for k in range(grid.n):
                cross += pointwise_g(dc[j][k], dc[k][j], g.values)
                full += pointwise_g(dc[j][k], dc[j][k], g.values)
        self.cross_dens = cross
        self.full_dens = full
        self.norm_dens = pointwise_g(c, c, np.broadcast_to(g.values, (grid.n,) + g.values.shape)).sum(axis=0)
        P = np.einsum("...ac,...jkcb->...jkab", g.values, self.theta.blocks)
        self.curv_scale = 1.0 + float(np.max(np.abs(P)))

    def evaluate(self, s):
        psi = psi_s(s, self.cfg, self.grid).values
        shift = float(np.max(-psi))
        w = self.rule.weights * np.exp(-psi - shift)
        # alpha_s = f / (2 s): the s^2 factor leaves a constant 1/4
        curv = 0.25 * float(np.sum((w * self.curv_dens).ravel()))
        cross = 0.25 * float(np.sum((w * self.cross_dens).ravel()))
        full = 0.25 * float(np.sum((w * self.full_dens).ravel()))
        grad = full if self.g.r == 1 else cross
        scale = self.curv_scale * 0.25 * float(np.sum((w * self.norm_dens).ravel()))
        return FunctionalRecord(s, curv, grad, curv + grad, cross, full, scale, shift)


def falsifier_functional(g: MatrixField, cfg: FalsifierConfig, s: float,
                         rule: QuadratureRule = None) -> FunctionalRecord:
    return _Prepared(g, cfg, rule).evaluate(s)


@dataclass(frozen=True)
class FalsifierTrace:
    records: tuple
    violated_at: Optional[float]
    config: FalsifierConfig
    tau_viol: float
    center_form: float
    warnings: tuple = ()

    @property
    def outcome(self) -> str:
        return "not_violated" if self.violated_at is None else "violated"

    @property
    def violated(self) -> bool:
        return self.violated_at is not None

    def to_dict(self):
        return {
            "outcome": self.outcome,
            "violated_at": self.violated_at,
            "records": [r.to_dict() for r in self.records],
            "config": self.config.to_dict(),
            "tau_viol": self.tau_viol,
            "center_form": self.center_form,
            "warnings": list(self.warnings),
        }

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["s", "term_curvature", "term_gradient", "total"])
        for r in self.records:
            w.writerow([repr(r.s), repr(r.term_curvature), repr(r.term_gradient), repr(r.total)])
        return buf.getvalue()


def _fits(grid: GridSpec, radius: float) -> np.ndarray:
    ok = np.ones(grid.shape, dtype=bool)
    for x, a, b in zip(grid.mesh, grid.mins, grid.maxs):
        ok &= (x - radius >= a) & (x + radius <= b)
    return ok


def center_witness(g: MatrixField, center, theta: CurvatureTensor = None):
    """Most negative Gram direction at the node nearest ``center``."""
    theta = theta or curvature_tensor(g)
    node = coord_to_nearest_index(g.grid, center)
    M = gram_field(g, theta)[node]
    lam, vecs = np.linalg.eigh(M)
    return float(lam[0]), vecs[:, 0]


def default_config(g: MatrixField, radius: float, theta: CurvatureTensor = None,
                   **kwargs) -> FalsifierConfig:
    """Center the ball at the most negative node among those where B(x, radius) fits."""
    theta = theta or curvature_tensor(g)
    ok = _fits(g.grid, radius)
    if not np.any(ok):
        raise DomainError(f"no node admits a ball of radius {radius} inside the box")
    low = np.linalg.eigvalsh(gram_field(g, theta))[..., 0]
    low = np.where(ok, low, np.inf)
    node = np.unravel_index(int(np.argmin(low.ravel())), g.grid.shape)
    _, xi = center_witness(g, node_coords(g.grid, node), theta)
    return FalsifierConfig(center=tuple(node_coords(g.grid, node)), radius=radius, xi=tuple(xi), **kwargs)


def falsify_scan(g: MatrixField, cfg: FalsifierConfig, rule: QuadratureRule = None,
                 tau_viol: float = TAU_VIOL, threads: int = 1) -> FalsifierTrace:
    """Evaluate the falsifier over the s schedule; report the first violation.

    Without an explicit ``cfg.xi`` the direction is the lowest Gram
    eigenvector at the node nearest ``cfg.center``.
    """
    theta = curvature_tensor(g)
    lam0, vec0 = center_witness(g, cfg.center, theta)
    if cfg.xi is None:
        cfg = replace(cfg, xi=tuple(vec0))
    notes = []
    nodes = annulus_resolution(cfg, g.grid)
    if nodes < MIN_ANNULUS_NODES:
        msg = f"only {nodes} nodes across the cutoff annulus (need {MIN_ANNULUS_NODES})"
        warnings.warn(msg, ResolutionWarning)
        notes.append(msg)
    prep = _Prepared(g, cfg, rule, theta)
    xi = np.asarray(cfg.xi)
    M0 = gram_field(g, theta)[coord_to_nearest_index(g.grid, cfg.center)]
    center_form = float(xi @ M0 @ xi)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            records = tuple(pool.map(prep.evaluate, cfg.s_schedule))
    else:
        records = tuple(prep.evaluate(s) for s in cfg.s_schedule)
    violated = None
    for rec in records:
        if rec.total < -tau_viol * rec.scale:
            violated = rec.s
            break
    return FalsifierTrace(records, violated, cfg, tau_viol, center_form, tuple(notes))


def fiber_weights(ygrid: GridSpec) -> np.ndarray:
    w = np.ones(())
    for p, h in zip(ygrid.points, ygrid.spacing):
        w = np.multiply.outer(w, trapezoid_weights_1d(p, h))
    return w


def prekopa_pushforward(g_tilde: MatrixField, n_x: int, threshold: float = 1e-10,
                        collar: int = 2, validate: bool = True) -> MatrixField:
    """Integrate out the trailing grid axes: g(x) = int g~(x, y) dy.

    The joint grid's first ``n_x`` axes are x, the rest are y.
    """
    xgrid, ygrid = g_tilde.grid.split(n_x)
    vals = g_tilde.values
    y_axes = tuple(range(n_x, g_tilde.grid.n))
    ymask = ygrid.boundary_mask(collar)
    edge = np.abs(vals[(slice(None),) * n_x + (ymask,)]).max()
    peak = np.abs(vals).max()
    ratio = float(edge / peak) if peak > 0 else 0.0
    if ratio > threshold:
        raise TruncationError(ratio, threshold)
    w = fiber_weights(ygrid)
    out = np.tensordot(w, vals, axes=(tuple(range(len(y_axes))), y_axes))
    if validate:
        out = check_metric_values(out)
    return MatrixField(xgrid, out)


@dataclass(frozen=True)
class PrekopaRecord:
    input_report: PositivityReport
    output_report: PositivityReport
    applicable: bool
    consistent: bool

    @property
    def input_verdict(self):
        return self.input_report.verdict

    @property
    def output_verdict(self):
        return self.output_report.verdict

    def to_dict(self):
        return {
            "input_verdict": self.input_verdict,
            "output_verdict": self.output_verdict,
            "consistent": self.consistent,
            "applicable": self.applicable,
            "status": "consistent" if self.applicable and self.consistent
            else ("not applicable" if not self.applicable else "inconsistent"),
            "input_report": self.input_report.to_dict(),
            "output_report": self.output_report.to_dict(),
        }


def prekopa_verify(g_tilde: MatrixField, n_x: int, tau: float = DEFAULT_TAU,
                   threshold: float = 1e-10) -> PrekopaRecord:
    inp = nakano_verdict(g_tilde, tau)
    out = nakano_verdict(prekopa_pushforward(g_tilde, n_x, threshold), tau)
    applicable = inp.semipositive
    consistent = (not applicable) or out.semipositive
    return PrekopaRecord(inp, out, applicable, consistent)
