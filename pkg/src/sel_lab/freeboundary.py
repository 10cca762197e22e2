"""Positivity sets, free-boundary nodes and distances to the zero set."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.spatial import cKDTree

from ._io import write_csv
from .errors import EmptyZeroSetError
from .grid import ScalarField

__all__ = [
    "DistanceBoundReport",
    "PositivitySet",
    "distance_bound_check",
    "distance_to_zero_set",
    "extract_positivity_set",
    "free_boundary_centers",
    "on_free_boundary",
    "write_positivity_csv",
]


def _neighbour_any(mask: np.ndarray) -> np.ndarray:
    """True where at least one axis neighbour of a node is set in ``mask``."""
    out = np.zeros_like(mask)
    for axis in range(mask.ndim):
        fwd = [slice(None)] * mask.ndim
        bwd = [slice(None)] * mask.ndim
        fwd[axis], bwd[axis] = slice(1, None), slice(None, -1)
        out[tuple(bwd)] |= mask[tuple(fwd)]
        out[tuple(fwd)] |= mask[tuple(bwd)]
    return out


@dataclass(frozen=True)
class PositivitySet:
    """Classification of interior nodes against ``threshold``.

    ``positive`` marks interior nodes with ``u > threshold``; ``boundary``
    marks the positive nodes with a stencil neighbour at or below the
    threshold; ``zero`` marks the remaining interior nodes.
    """

    grid: object
    threshold: float
    positive: np.ndarray = field(repr=False)
    boundary: np.ndarray = field(repr=False)
    zero: np.ndarray = field(repr=False)

    @staticmethod
    def _nodes(mask):
        return [tuple(int(i) for i in idx) for idx in np.argwhere(mask)]

    @property
    def positive_nodes(self) -> list:
        return self._nodes(self.positive)

    @property
    def boundary_nodes(self) -> list:
        return self._nodes(self.boundary)

    @property
    def zero_nodes(self) -> list:
        return self._nodes(self.zero)

    def classes(self) -> np.ndarray:
        """'pos', 'fb' or 'zero' per interior node; '' on the grid boundary."""
        out = np.full(self.grid.shape, "", dtype=object)
        out[self.positive] = "pos"
        out[self.boundary] = "fb"
        out[self.zero] = "zero"
        return out

    @cached_property
    def _zero_tree(self):
        if not self.zero.any():
            return None
        return cKDTree(self.grid.points[self.zero.ravel()])


def extract_positivity_set(field: ScalarField, threshold: float = 0.0) -> PositivitySet:
    if threshold < 0:
        raise ValueError("threshold must be >= 0")
    interior = field.grid.interior_mask()
    above = field.values > threshold
    positive = above & interior
    boundary = positive & _neighbour_any(~above)
    zero = interior & ~above
    for m in (positive, boundary, zero):
        m.flags.writeable = False
    return PositivitySet(field.grid, float(threshold), positive, boundary, zero)


def on_free_boundary(pset: PositivitySet, node) -> bool:
    """True for a boundary node, or a zero node with a positive neighbour.

    Both sides of the discrete interface count, so that an isolated zero
    such as the vertex of a cone is a valid center.
    """
    node = tuple(int(i) for i in np.atleast_1d(node))
    if pset.boundary[node]:
        return True
    if not pset.zero[node]:
        return False
    single = np.zeros_like(pset.positive)
    single[node] = True
    return bool((_neighbour_any(single) & pset.positive).any())


def free_boundary_centers(pset: PositivitySet, min_separation: float) -> list:
    """Boundary nodes, greedily thinned in lexicographic order to a minimum separation."""
    pts = pset.grid.points
    chosen, coords = [], []
    for node in pset.boundary_nodes:
        x = pts[np.ravel_multi_index(node, pset.grid.shape)]
        if all(np.linalg.norm(x - y) >= min_separation - 1e-12 for y in coords):
            chosen.append(node)
            coords.append(x)
    return chosen


def distance_to_zero_set(pset: PositivitySet, point) -> float:
    tree = pset._zero_tree
    if tree is None:
        raise EmptyZeroSetError("the positivity set has no zero nodes")
    d, _ = tree.query(np.atleast_1d(np.asarray(point, dtype=float)))
    return float(d)


@dataclass(frozen=True)
class DistanceBoundReport:
    worst_ratio: float
    node: tuple | None
    C: float

    @property
    def passed(self) -> bool:
        return self.worst_ratio <= self.C

    def to_dict(self) -> dict:
        return {"worst_ratio": self.worst_ratio, "node": self.node, "C": self.C,
                "passed": self.passed}


def distance_bound_check(field: ScalarField, pset: PositivitySet, gamma: float,
                         C: float) -> DistanceBoundReport:
    """Worst ``u(X) / dist(X, zero set)**gamma`` over positive interior nodes.

    ``gamma`` may also be given as ProblemParams.
    """
    gamma = getattr(gamma, "gamma", gamma)
    tree = pset._zero_tree
    if tree is None:
        raise EmptyZeroSetError("the positivity set has no zero nodes")
    mask = pset.positive
    if not mask.any():
        return DistanceBoundReport(0.0, None, C)
    pts = field.grid.points[mask.ravel()]
    dist, _ = tree.query(pts)
    ratios = field.values[mask] / dist**gamma
    k = int(np.argmax(ratios))
    node = tuple(int(i) for i in np.argwhere(mask)[k])
    return DistanceBoundReport(float(ratios[k]), node, float(C))


def write_positivity_csv(pset: PositivitySet, path):
    grid = pset.grid
    header = ["x", "class"] if grid.dim == 1 else ["x", "y", "class"]
    cls = pset.classes().ravel()
    keep = grid.interior_mask().ravel()
    rows = (tuple(p) + (c,) for p, c, k in zip(grid.points, cls, keep) if k)
    return write_csv(path, header, rows)
