"""Uniform tensor grids, nodal fields, stencils and the discrete residual."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from . import _kernels as K
from ._io import write_csv
from .errors import DomainError, EmptyBallError, GridIndexError, ParameterError
from .params import ProblemParams

GRAD_FLOOR = K.GRAD_FLOOR
BALL_SLACK = 1e-12

__all__ = [
    "GRAD_FLOOR",
    "Grid",
    "ScalarField",
    "StencilEval",
    "ball_mask",
    "prolong",
    "read_field_csv",
    "residual",
    "residual_field",
    "stencil",
    "sup_over_ball",
    "write_field_csv",
]


@dataclass(frozen=True)
class Grid:
    """Box ``extent`` (one ``(a, b)`` pair per axis) with ``n`` nodes per axis."""

    dim: int
    extent: tuple
    n: int

    def __post_init__(self):
        if self.dim not in (1, 2):
            raise ParameterError(f"dim must be 1 or 2, got {self.dim}")
        if self.n < 3:
            raise ParameterError(f"need at least 3 nodes per axis, got {self.n}")
        ext = tuple((float(a), float(b)) for a, b in self.extent)
        if len(ext) != self.dim:
            raise ParameterError(f"extent has {len(ext)} axes for dim {self.dim}")
        lengths = [b - a for a, b in ext]
        if min(lengths) <= 0:
            raise ParameterError("extent intervals must have b > a")
        if max(lengths) - min(lengths) > 1e-12 * max(lengths):
            raise ParameterError("all axes must have the same length (isotropic spacing)")
        object.__setattr__(self, "extent", ext)

    @classmethod
    def box(cls, dim: int, a: float, b: float, n: int) -> "Grid":
        return cls(dim, ((a, b),) * dim, n)

    @property
    def h(self) -> float:
        a, b = self.extent[0]
        return (b - a) / (self.n - 1)

    @property
    def shape(self) -> tuple:
        return (self.n,) * self.dim

    def axis(self, k: int) -> np.ndarray:
        a = self.extent[k][0]
        return a + self.h * np.arange(self.n)

    def axes(self) -> list:
        return [self.axis(k) for k in range(self.dim)]

    def mesh(self) -> list:
        return np.meshgrid(*self.axes(), indexing="ij")

    @cached_property
    def points(self) -> np.ndarray:
        """Node coordinates as an array of shape (n**dim, dim), row-major."""
        return np.stack([m.ravel() for m in self.mesh()], axis=1)

    def coords(self, node) -> np.ndarray:
        node = _as_node(node, self.dim)
        return np.array([self.extent[k][0] + self.h * node[k] for k in range(self.dim)])

    def nearest_node(self, point) -> tuple:
        p = np.atleast_1d(np.asarray(point, dtype=float))
        idx = []
        for k in range(self.dim):
            i = int(round((p[k] - self.extent[k][0]) / self.h))
            idx.append(min(max(i, 0), self.n - 1))
        return tuple(idx)

    def is_interior(self, node) -> bool:
        node = _as_node(node, self.dim)
        return all(0 < i < self.n - 1 for i in node)

    def interior_mask(self) -> np.ndarray:
        m = np.zeros(self.shape, dtype=bool)
        m[(slice(1, -1),) * self.dim] = True
        return m

    def boundary_mask(self) -> np.ndarray:
        return ~self.interior_mask()

    def distance_to_edge(self, point) -> float:
        p = np.atleast_1d(np.asarray(point, dtype=float))
        return min(min(p[k] - a, b - p[k]) for k, (a, b) in enumerate(self.extent))


def _as_node(node, dim):
    if isinstance(node, (int, np.integer)):
        node = (int(node),)
    node = tuple(int(i) for i in node)
    if len(node) != dim:
        raise GridIndexError(f"node {node} does not have {dim} indices")
    return node


@dataclass(frozen=True)
class ScalarField:
    """Nodal values on a grid; immutable once built."""

    grid: Grid
    values: np.ndarray = field(repr=False)
    lower_bound: float | None = None

    def __post_init__(self):
        vals = np.array(self.values, dtype=float)
        if vals.shape != self.grid.shape:
            raise ParameterError(f"values shape {vals.shape} != grid shape {self.grid.shape}")
        if not np.all(np.isfinite(vals)):
            raise ParameterError("field values must be finite")
        vals.flags.writeable = False
        object.__setattr__(self, "values", vals)
        lb = self.lower_bound
        if lb is None:
            lb = max(float(vals.min()), 0.0)
        if lb < 0:
            raise ParameterError("lower_bound must be >= 0")
        if lb > 0 and vals.min() < lb:
            raise ParameterError("lower_bound exceeds the field minimum")
        object.__setattr__(self, "lower_bound", float(lb))

    @classmethod
    def from_function(cls, grid: Grid, fn) -> "ScalarField":
        return cls(grid, np.broadcast_to(fn(*grid.mesh()), grid.shape))

    def __getitem__(self, node) -> float:
        return float(self.values[_as_node(node, self.grid.dim)])

    def sup_norm(self) -> float:
        return float(np.max(np.abs(self.values)))

    def interior_values(self) -> np.ndarray:
        return self.values[(slice(1, -1),) * self.grid.dim]


@dataclass(frozen=True)
class StencilEval:
    """Difference quotients at one node.

    ``grad_mag`` is the centered gradient norm. ``grad_rms`` is the
    root-mean-square of forward and backward differences, which is the
    gradient used inside the beta-power of the residual.
    """

    grad_mag: float
    laplacian: float
    grad_rms: float


def stencil(field: ScalarField, node) -> StencilEval:
    grid = field.grid
    node = _as_node(node, grid.dim)
    if not grid.is_interior(node):
        raise GridIndexError(f"node {node} is not strictly interior")
    u = field.values
    h = grid.h
    c = u[node]
    g2 = 0.0
    r2 = 0.0
    lap = 0.0
    for k in range(grid.dim):
        up = list(node)
        um = list(node)
        up[k] += 1
        um[k] -= 1
        p, m = u[tuple(up)], u[tuple(um)]
        fwd, bwd = (p - c) / h, (c - m) / h
        g2 += ((p - m) / (2 * h)) ** 2
        r2 += 0.5 * (fwd * fwd + bwd * bwd)
        lap += (fwd - bwd) / h
    return StencilEval(math.sqrt(g2), float(lap), math.sqrt(r2))


def _check_positive_if_unregularized(params: ProblemParams, values):
    if params.epsilon == 0 and params.alpha != 0 and np.min(values) <= 0:
        raise DomainError("epsilon = 0 needs a field bounded below by a positive constant")


def residual(field: ScalarField, params: ProblemParams, node) -> float:
    """``zeta(u) * max(grad_rms, GRAD_FLOOR)**beta * laplacian - f`` at one node."""
    st = stencil(field, node)
    node = _as_node(node, field.grid.dim)
    u = field.values[node]
    _check_positive_if_unregularized(params, u)
    z = float(params.zeta(u))
    f = float(params.forcing.evaluate(field.grid, field.values)[node])
    return z * max(st.grad_rms, GRAD_FLOOR) ** params.beta * st.laplacian - f


def forcing_array(grid: Grid, params: ProblemParams) -> tuple[np.ndarray, float]:
    """Nodal forcing for the kernels plus the hea level (0 if not hea)."""
    if params.forcing.depends_on_solution:
        return np.zeros(grid.shape), params.forcing.eps_a
    return np.ascontiguousarray(params.forcing.evaluate(grid), dtype=float), 0.0


def residual_field(field: ScalarField, params: ProblemParams) -> np.ndarray:
    """Residual at every interior node (boundary entries are 0)."""
    _check_positive_if_unregularized(params, field.values)
    f, hea = forcing_array(field.grid, params)
    u = np.ascontiguousarray(field.values)
    kern = K.residual1d if field.grid.dim == 1 else K.residual2d
    return kern(u, f, float(params.alpha), float(params.beta), float(params.epsilon),
                field.grid.h, hea)


def ball_mask(grid: Grid, center, r: float) -> np.ndarray:
    """Closed Euclidean ball membership, with rounding slack at node radii."""
    c = np.atleast_1d(np.asarray(center, dtype=float))
    d2 = sum((m - c[k]) ** 2 for k, m in enumerate(grid.mesh()))
    return np.sqrt(d2) <= r + grid.h * BALL_SLACK


def sup_over_ball(field: ScalarField, center, r: float) -> float:
    mask = ball_mask(field.grid, center, r)
    if not mask.any():
        raise EmptyBallError(f"no node within {r} of {tuple(np.atleast_1d(center))}")
    return float(field.values[mask].max())


def prolong(field: ScalarField) -> ScalarField:
    """Multilinear interpolation onto the grid with spacing h/2 (n -> 2n - 1)."""
    grid = field.grid
    fine = Grid(grid.dim, grid.extent, 2 * grid.n - 1)
    out = field.values
    for axis in range(grid.dim):
        shape = list(out.shape)
        shape[axis] = 2 * shape[axis] - 1
        nxt = np.empty(shape)
        even = [slice(None)] * grid.dim
        odd = [slice(None)] * grid.dim
        even[axis], odd[axis] = slice(0, None, 2), slice(1, None, 2)
        lo = [slice(None)] * grid.dim
        hi = [slice(None)] * grid.dim
        lo[axis], hi[axis] = slice(None, -1), slice(1, None)
        nxt[tuple(even)] = out
        nxt[tuple(odd)] = 0.5 * (out[tuple(lo)] + out[tuple(hi)])
        out = nxt
    return ScalarField(fine, out)


def write_field_csv(field: ScalarField, path):
    grid = field.grid
    header = ["x", "u"] if grid.dim == 1 else ["x", "y", "u"]
    pts = grid.points
    vals = field.values.ravel()
    return write_csv(path, header, (tuple(p) + (v,) for p, v in zip(pts, vals)))


def read_field_csv(path) -> ScalarField:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    dim = len(header) - 1
    data = np.array(body, dtype=float)
    n = round(len(data) ** (1.0 / dim))
    if n**dim != len(data):
        raise ParameterError(f"{path}: {len(data)} rows is not a full {dim}D tensor grid")
    extent = tuple((data[:, k].min(), data[:, k].max()) for k in range(dim))
    grid = Grid(dim, extent, n)
    return ScalarField(grid, data[:, -1].reshape(grid.shape))
