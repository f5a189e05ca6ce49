"""Convexity and Nakano semipositivity verdicts from node-wise eigen scans."""
from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np

from .diffops import CurvatureTensor, curvature_tensor, gram_field, hessian
from .fields import MatrixField, ScalarField

SEMIPOSITIVE = "semipositive"
INDEFINITE = "indefinite"
POSITIVE = "positive"

DEFAULT_TAU = 1e-7


@dataclass(frozen=True)
class PositivityReport:
    verdict: str
    worst_node: tuple
    worst_eigenvalue: float
    witness: tuple
    scale: float
    tau: float
    interior_worst_eigenvalue: Optional[float]
    boundary_worst_eigenvalue: float
    worst_on_boundary: bool

    @property
    def semipositive(self) -> bool:
        return self.verdict != INDEFINITE

    def to_dict(self):
        d = asdict(self)
        d["worst_node"] = list(self.worst_node)
        d["witness"] = list(self.witness)
        return d


def scan(matrices: np.ndarray, scale: float, tau: float = DEFAULT_TAU, strict: bool = False,
         boundary: np.ndarray = None) -> PositivityReport:
    """Eigen-scan a stack of symmetric matrices (leading axes index nodes).

    Ties in the global minimum go to the smallest multi-index (C order).
    """
    spatial = matrices.shape[:-2]
    lam, vecs = np.linalg.eigh(matrices)
    low = lam[..., 0]
    flat = int(np.argmin(low.ravel()))
    node = np.unravel_index(flat, spatial)
    worst = float(low[node])
    witness = vecs[node][:, 0]
    k = int(np.argmax(np.abs(witness)))
    if witness[k] < 0:
        witness = -witness
    if boundary is None:
        boundary = np.zeros(spatial, dtype=bool)
    interior = low[~boundary]
    if worst >= -tau * scale:
        verdict = POSITIVE if strict and worst > tau * scale else SEMIPOSITIVE
    else:
        verdict = INDEFINITE
    return PositivityReport(
        verdict=verdict,
        worst_node=tuple(int(i) for i in node),
        worst_eigenvalue=worst,
        witness=tuple(float(x) for x in witness),
        scale=float(scale),
        tau=float(tau),
        interior_worst_eigenvalue=float(interior.min()) if interior.size else None,
        boundary_worst_eigenvalue=float(low[boundary].min()) if boundary.any() else worst,
        worst_on_boundary=bool(boundary[node]),
    )


def convexity_verdict(phi: ScalarField, tau: float = DEFAULT_TAU, strict: bool = False) -> PositivityReport:
    """Semipositivity of the Hessian of ``phi`` (witness is an n-vector)."""
    H = hessian(phi).values
    scale = 1.0 + float(np.max(np.abs(H)))
    return scan(H, scale, tau, strict, phi.grid.boundary_mask())


def nakano_verdict(g: MatrixField, tau: float = DEFAULT_TAU, strict: bool = False,
                   theta: CurvatureTensor = None) -> PositivityReport:
    """Nakano semipositivity of ``g``; the witness is the stacked n-tuple in R^{n r}."""
    if theta is None:
        theta = curvature_tensor(g)
    M = gram_field(g, theta)
    P = np.einsum("...ac,...jkcb->...jkab", g.values, theta.blocks)
    scale = 1.0 + float(np.max(np.abs(P)))
    return scan(M, scale, tau, strict, g.grid.boundary_mask())
