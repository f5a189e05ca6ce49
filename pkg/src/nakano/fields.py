"""Uniform tensor grids on boxes and the node-sampled field types.

Array layout: the leading ``n`` axes of every ``values`` array index grid
nodes (C order, last axis fastest); trailing axes hold the per-node payload
(nothing for scalars, ``(r,)`` for sections, ``(r, r)`` for matrices).
One-forms stack their ``n`` coefficient sections on a new leading axis.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from itertools import combinations
from typing import Optional, Sequence

import numpy as np

from . import expr as ex
from .errors import ExprVarError, GridError, NotPositiveDefinite, ShapeError, SymmetryError


@dataclass(frozen=True)
class GridSpec:
    mins: tuple
    maxs: tuple
    points: tuple

    def __post_init__(self):
        mins = tuple(float(v) for v in self.mins)
        maxs = tuple(float(v) for v in self.maxs)
        points = tuple(int(p) for p in self.points)
        object.__setattr__(self, "mins", mins)
        object.__setattr__(self, "maxs", maxs)
        object.__setattr__(self, "points", points)
        if not (len(mins) == len(maxs) == len(points)) or len(mins) == 0:
            raise GridError("mins, maxs and points must have the same nonzero length")
        for i, (a, b, p) in enumerate(zip(mins, maxs, points)):
            if not (np.isfinite(a) and np.isfinite(b)) or not a < b:
                raise GridError(f"axis {i}: need finite min < max, got [{a}, {b}]")
            if p < 3:
                raise GridError(f"axis {i}: need at least 3 points, got {p}")

    @classmethod
    def uniform(cls, lo, hi, points, n):
        return cls((lo,) * n, (hi,) * n, (points,) * n)

    @property
    def n(self) -> int:
        return len(self.points)

    @property
    def shape(self) -> tuple:
        return self.points

    @property
    def size(self) -> int:
        return int(np.prod(self.points))

    @property
    def spacing(self) -> tuple:
        return tuple((b - a) / (p - 1) for a, b, p in zip(self.mins, self.maxs, self.points))

    @property
    def volume(self) -> float:
        return float(np.prod([b - a for a, b in zip(self.mins, self.maxs)]))

    def axis(self, i: int) -> np.ndarray:
        return np.linspace(self.mins[i], self.maxs[i], self.points[i])

    @cached_property
    def mesh(self) -> tuple:
        """Coordinate arrays, one per axis, each of shape ``points``."""
        arrays = np.meshgrid(*[self.axis(i) for i in range(self.n)], indexing="ij")
        for a in arrays:
            a.setflags(write=False)
        return tuple(arrays)

    def product(self, other: "GridSpec") -> "GridSpec":
        return GridSpec(self.mins + other.mins, self.maxs + other.maxs, self.points + other.points)

    def split(self, n_first: int):
        if not 0 < n_first < self.n:
            raise GridError(f"cannot split a {self.n}-dimensional grid at {n_first}")
        a = GridSpec(self.mins[:n_first], self.maxs[:n_first], self.points[:n_first])
        b = GridSpec(self.mins[n_first:], self.maxs[n_first:], self.points[n_first:])
        return a, b

    def boundary_mask(self, width: int = 1) -> np.ndarray:
        """True at nodes within ``width`` nodes of some face of the box."""
        mask = np.zeros(self.points, dtype=bool)
        for i, p in enumerate(self.points):
            idx = [slice(None)] * self.n
            idx[i] = np.r_[0:min(width, p), max(p - width, 0):p]
            mask[tuple(idx)] = True
        return mask

    def to_dict(self):
        return {"mins": list(self.mins), "maxs": list(self.maxs), "points": list(self.points)}


def node_coords(grid: GridSpec, index: Sequence[int]) -> np.ndarray:
    index = tuple(index)
    if len(index) != grid.n:
        raise IndexError(f"need a {grid.n}-index, got {index}")
    for i, (k, p) in enumerate(zip(index, grid.points)):
        if not 0 <= k < p:
            raise IndexError(f"index {k} out of range [0, {p}) on axis {i}")
    return np.array([a + k * h for a, k, h in zip(grid.mins, index, grid.spacing)])


def coord_to_nearest_index(grid: GridSpec, point: Sequence[float]) -> tuple:
    point = np.asarray(point, dtype=float)
    idx = np.rint((point - np.array(grid.mins)) / np.array(grid.spacing)).astype(int)
    return tuple(int(v) for v in np.clip(idx, 0, np.array(grid.points) - 1))


def _frozen(values):
    values = np.array(values, dtype=float)
    if not np.all(np.isfinite(values)):
        raise ValueError("field values must be finite")
    values.setflags(write=False)
    return values


@dataclass(frozen=True)
class ScalarField:
    grid: GridSpec
    values: np.ndarray

    def __post_init__(self):
        v = _frozen(self.values)
        if v.shape != self.grid.shape:
            raise ShapeError(f"scalar field shape {v.shape} != grid {self.grid.shape}")
        object.__setattr__(self, "values", v)


@dataclass(frozen=True)
class SectionField:
    grid: GridSpec
    values: np.ndarray

    def __post_init__(self):
        v = _frozen(self.values)
        if v.ndim != self.grid.n + 1 or v.shape[:-1] != self.grid.shape:
            raise ShapeError(f"section shape {v.shape} does not fit grid {self.grid.shape}")
        object.__setattr__(self, "values", v)

    @property
    def r(self) -> int:
        return self.values.shape[-1]

    @classmethod
    def constant(cls, grid, vector):
        vector = np.asarray(vector, dtype=float)
        return cls(grid, np.broadcast_to(vector, grid.shape + vector.shape))


@dataclass(frozen=True)
class MatrixField:
    grid: GridSpec
    values: np.ndarray

    def __post_init__(self):
        v = _frozen(self.values)
        n = self.grid.n
        if v.ndim != n + 2 or v.shape[:n] != self.grid.shape or v.shape[-1] != v.shape[-2]:
            raise ShapeError(f"matrix field shape {v.shape} does not fit grid {self.grid.shape}")
        object.__setattr__(self, "values", v)

    @property
    def r(self) -> int:
        return self.values.shape[-1]

    @classmethod
    def constant(cls, grid, matrix):
        matrix = np.asarray(matrix, dtype=float)
        return cls(grid, np.broadcast_to(matrix, grid.shape + matrix.shape))

    @classmethod
    def from_weight(cls, phi: ScalarField, rank: int = 1):
        """The metric ``e^{-phi} I_rank``."""
        w = np.exp(-phi.values)
        return cls(phi.grid, w[..., None, None] * np.eye(rank))

    @classmethod
    def diagonal(cls, weights: Sequence[ScalarField]):
        """``diag(e^{-phi_1}, ..., e^{-phi_r})``."""
        grid = weights[0].grid
        d = np.stack([np.exp(-w.values) for w in weights], axis=-1)
        return cls(grid, d[..., None, :] * np.eye(len(weights)))

    @cached_property
    def inverse(self) -> np.ndarray:
        return np.linalg.inv(self.values)


@dataclass(frozen=True)
class OneForm:
    grid: GridSpec
    components: np.ndarray

    def __post_init__(self):
        c = _frozen(self.components)
        n = self.grid.n
        if c.ndim != n + 2 or c.shape[0] != n or c.shape[1:-1] != self.grid.shape:
            raise ShapeError(f"one-form shape {c.shape} does not fit grid {self.grid.shape}")
        object.__setattr__(self, "components", c)

    @property
    def r(self) -> int:
        return self.components.shape[-1]

    def component(self, i: int) -> SectionField:
        return SectionField(self.grid, self.components[i])

    @classmethod
    def from_sections(cls, sections: Sequence[SectionField]):
        return cls(sections[0].grid, np.stack([s.values for s in sections]))

    @classmethod
    def constant(cls, grid, coefficients):
        c = np.asarray(coefficients, dtype=float)  # (n, r)
        c = c.reshape((grid.n,) + (1,) * grid.n + (c.shape[1],))
        return cls(grid, np.broadcast_to(c, (grid.n,) + grid.shape + (c.shape[-1],)))


@dataclass(frozen=True)
class TwoForm:
    grid: GridSpec
    components: np.ndarray
    pairs: tuple = field(init=False)

    def __post_init__(self):
        c = _frozen(self.components)
        n = self.grid.n
        pairs = tuple(combinations(range(n), 2))
        if c.ndim != n + 2 or c.shape[0] != len(pairs) or c.shape[1:-1] != self.grid.shape:
            raise ShapeError(f"two-form shape {c.shape} does not fit grid {self.grid.shape}")
        object.__setattr__(self, "components", c)
        object.__setattr__(self, "pairs", pairs)

    @property
    def r(self) -> int:
        return self.components.shape[-1]


def same_grid(*fields):
    grid = fields[0].grid
    for f in fields[1:]:
        if f.grid != grid:
            raise GridError("fields live on different grids")
    return grid


def default_names(n: int) -> list:
    return [f"x{i + 1}" for i in range(n)]


def joint_names(n: int, m: int) -> list:
    return default_names(n) + [f"y{j + 1}" for j in range(m)]


def _bindings(grid, names, params):
    names = default_names(grid.n) if names is None else list(names)
    if len(names) != grid.n:
        raise GridError(f"{len(names)} variable names for a {grid.n}-dimensional grid")
    env = dict(zip(names, grid.mesh))
    env.update(params or {})
    return env


def _sample(e, grid, env):
    e = ex.as_expr(e)
    unknown = ex.free_vars(e) - set(env)
    if unknown:
        raise ExprVarError(unknown)
    return np.broadcast_to(ex.evaluate(e, env), grid.shape)


def sample_scalar(e, grid: GridSpec, names=None, params=None) -> ScalarField:
    """Evaluate an expression at every node of ``grid``.

    ``names`` overrides the variable bound to each axis (default x1..xn);
    ``params`` binds extra scalars such as the scan parameter ``s``.
    """
    return ScalarField(grid, _sample(e, grid, _bindings(grid, names, params)))


def sample_section(entries, grid: GridSpec, names=None, params=None) -> SectionField:
    env = _bindings(grid, names, params)
    return SectionField(grid, np.stack([_sample(e, grid, env) for e in entries], axis=-1))


def sample_oneform(components, grid: GridSpec, names=None, params=None) -> OneForm:
    """``components`` is a length-n list of length-r entry lists."""
    if len(components) != grid.n:
        raise ShapeError(f"need {grid.n} one-form components, got {len(components)}")
    env = _bindings(grid, names, params)
    return OneForm(
        grid,
        np.stack([np.stack([_sample(e, grid, env) for e in comp], axis=-1) for comp in components]),
    )


def check_metric_values(values, tau_sym=None, tau_pd=None):
    """Validate and symmetrize a stack of node matrices; return the symmetric stack."""
    values = np.asarray(values, dtype=float)
    spatial = values.shape[:-2]
    scale = 1.0 + np.max(np.abs(values), axis=(-2, -1))
    asym = np.max(np.abs(values - np.swapaxes(values, -1, -2)), axis=(-2, -1))
    tol_sym = 1e-10 * scale if tau_sym is None else tau_sym
    bad = asym > tol_sym
    if np.any(bad):
        node = np.unravel_index(int(np.argmax(bad)), spatial) if spatial else ()
        raise SymmetryError("metric is not symmetric", node, float(asym[node] if spatial else asym))
    sym = 0.5 * (values + np.swapaxes(values, -1, -2))
    lam = np.linalg.eigvalsh(sym)[..., 0]
    tol_pd = 1e-12 * scale if tau_pd is None else tau_pd
    bad = lam <= tol_pd
    if np.any(bad):
        node = np.unravel_index(int(np.argmax(bad)), spatial) if spatial else ()
        raise NotPositiveDefinite("metric is not positive definite", node, float(lam[node] if spatial else lam))
    return sym


def sample_metric(entries, grid: GridSpec, tau_sym=None, tau_pd=None, names=None, params=None) -> MatrixField:
    """Sample an r x r array of expressions into a validated metric field."""
    r = len(entries)
    if r == 0 or any(len(row) != r for row in entries):
        raise ShapeError("metric entries must form a square array")
    env = _bindings(grid, names, params)
    values = np.empty(grid.shape + (r, r))
    for a in range(r):
        for b in range(r):
            values[..., a, b] = _sample(entries[a][b], grid, env)
    return MatrixField(grid, check_metric_values(values, tau_sym, tau_pd))


def validate_metric(g: MatrixField, tau_sym=None, tau_pd=None) -> MatrixField:
    return MatrixField(g.grid, check_metric_values(g.values, tau_sym, tau_pd))
