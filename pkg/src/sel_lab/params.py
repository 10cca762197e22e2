"""Equation parameters, the cutoff family and small scalar helpers.

The regularized equation solved throughout the package is

    zeta(u) * |Du|**beta * Lap u = f          where u > 0,

with ``zeta(s) = s**alpha`` above the level ``epsilon`` and frozen at
``epsilon**alpha`` below it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, ParameterError

__all__ = [
    "ForcingSpec",
    "ProblemParams",
    "bump",
    "cutoff_bound_check",
    "gamma",
    "hea_forcing",
    "holder_exponent_from_M",
    "zeta_cutoff",
]


def _check_exponents(alpha, beta):
    if not (math.isfinite(alpha) and math.isfinite(beta)):
        raise ParameterError(f"exponents must be finite, got alpha={alpha}, beta={beta}")
    if beta < 0:
        raise ParameterError(f"beta must be >= 0, got {beta}")
    if alpha <= -(1.0 + beta):
        raise ParameterError(f"alpha must exceed -(1+beta) = {-(1.0 + beta)}, got {alpha}")


def gamma(alpha: float, beta: float) -> float:
    """Sharp growth exponent ``(2 + beta) / (1 + beta + alpha)``.

    >>> gamma(1, 1)
    1.0
    >>> gamma(3, 1)
    0.6
    """
    _check_exponents(alpha, beta)
    return (2.0 + beta) / (1.0 + beta + alpha)


def holder_exponent_from_M(M: float) -> float:
    """Hoelder exponent ``1/(M+1)`` of the modulus built from ``Omega(d) = d**-M``."""
    if M < 0:
        raise ParameterError(f"M must be >= 0, got {M}")
    return 1.0 / (M + 1.0)


def zeta_cutoff(s: float, phi: float, eps: float) -> float:
    """Cutoff power: ``s**phi`` for ``s >= eps`` and ``eps**phi`` below."""
    if eps <= 0:
        raise DomainError(f"eps must be > 0, got {eps}")
    if s < 0:
        raise DomainError(f"s must be >= 0, got {s}")
    return s**phi if s >= eps else eps**phi


def cutoff_bound_check(phi: float, eps: float, samples) -> bool:
    """True iff ``t**phi / zeta_cutoff(t, phi, eps) <= 1`` at every sample.

    Only meaningful for ``phi > 0``; ``0**phi / positive`` counts as 0.
    """
    if phi <= 0:
        raise DomainError(f"phi must be > 0, got {phi}")
    for t in samples:
        z = zeta_cutoff(t, phi, eps)
        if t**phi / z > 1.0:
            return False
    return True


def bump(s):
    """Fixed activation bump ``16 s^2 (1-s)^2`` on [0, 1], zero outside.

    Accepts scalars or arrays.
    """
    s = np.asarray(s, dtype=float)
    out = np.where((s >= 0) & (s <= 1), 16.0 * s**2 * (1.0 - s) ** 2, 0.0)
    return out if out.ndim else float(out)


def hea_forcing(u, eps_a: float):
    """High energy activation forcing ``bump(u/eps_a)/eps_a``."""
    if eps_a <= 0:
        raise DomainError(f"eps_a must be > 0, got {eps_a}")
    arr = np.asarray(u, dtype=float)
    if np.any(arr < 0):
        raise DomainError("hea_forcing needs u >= 0")
    return bump(arr / eps_a) / eps_a


@dataclass(frozen=True)
class ForcingSpec:
    """Right-hand side description.

    ``kind`` is ``"constant"`` (uses ``value``), ``"table"`` (nodal values on
    ``table_grid``, looked up at the nearest node) or ``"hea"`` (depends on the
    solution through :func:`hea_forcing` with ``eps_a``).
    """

    kind: str
    value: float = 0.0
    eps_a: float = 0.0
    table_grid: object = field(default=None, compare=False, repr=False)
    table_values: np.ndarray | None = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        if self.kind == "constant":
            if not math.isfinite(self.value):
                raise ParameterError("constant forcing must be finite")
        elif self.kind == "hea":
            if not self.eps_a > 0:
                raise ParameterError(f"hea forcing needs eps_a > 0, got {self.eps_a}")
        elif self.kind == "table":
            if self.table_grid is None or self.table_values is None:
                raise ParameterError("table forcing needs a grid and nodal values")
            vals = np.array(self.table_values, dtype=float)
            if vals.shape != self.table_grid.shape:
                raise ParameterError(
                    f"table shape {vals.shape} does not match grid shape {self.table_grid.shape}"
                )
            if not np.all(np.isfinite(vals)):
                raise ParameterError("table forcing must be finite")
            vals.flags.writeable = False
            object.__setattr__(self, "table_values", vals)
        else:
            raise ParameterError(f"unknown forcing kind {self.kind!r}")

    @classmethod
    def constant(cls, c: float) -> "ForcingSpec":
        return cls("constant", value=float(c))

    @classmethod
    def hea(cls, eps_a: float) -> "ForcingSpec":
        return cls("hea", eps_a=float(eps_a))

    @classmethod
    def table(cls, grid, values) -> "ForcingSpec":
        return cls("table", table_grid=grid, table_values=np.asarray(values, dtype=float))

    @property
    def depends_on_solution(self) -> bool:
        return self.kind == "hea"

    def sup_norm(self) -> float:
        if self.kind == "constant":
            return abs(self.value)
        if self.kind == "table":
            return float(np.max(np.abs(self.table_values)))
        return 1.0 / self.eps_a  # max of the bump is 1

    def sampled_range(self):
        """(min, max) of the values this forcing can produce, or None for hea."""
        if self.kind == "constant":
            return self.value, self.value
        if self.kind == "table":
            return float(self.table_values.min()), float(self.table_values.max())
        return None

    def evaluate(self, grid, u=None) -> np.ndarray:
        """Nodal forcing on ``grid``; ``u`` is required for the hea kind."""
        if self.kind == "constant":
            return np.full(grid.shape, self.value)
        if self.kind == "hea":
            if u is None:
                raise ParameterError("hea forcing needs the current solution values")
            return hea_forcing(np.maximum(np.asarray(u, dtype=float), 0.0), self.eps_a)
        src = self.table_grid
        idx = []
        for axis, coords in enumerate(grid.axes()):
            a = src.extent[axis][0]
            k = np.rint((coords - a) / src.h).astype(int)
            idx.append(np.clip(k, 0, src.n - 1))
        mesh = np.meshgrid(*idx, indexing="ij")
        return np.array(self.table_values[tuple(mesh)])

    def describe(self) -> dict:
        if self.kind == "constant":
            return {"kind": "constant", "value": self.value}
        if self.kind == "hea":
            return {"kind": "hea", "eps_a": self.eps_a}
        return {"kind": "table", "sup": self.sup_norm()}


@dataclass(frozen=True)
class ProblemParams:
    """Exponents, regularization level, forcing bounds and forcing."""

    alpha: float
    beta: float
    epsilon: float
    c0: float
    forcing: ForcingSpec

    def __post_init__(self):
        _check_exponents(self.alpha, self.beta)
        if not (self.epsilon >= 0 and math.isfinite(self.epsilon)):
            raise ParameterError(f"epsilon must be >= 0, got {self.epsilon}")
        if not 0 < self.c0 <= 1:
            raise ParameterError(f"c0 must lie in (0, 1], got {self.c0}")
        rng = self.forcing.sampled_range()
        if rng is not None:
            lo, hi = rng
            # relative slack absorbs the rounding of rescaled tables
            slack = 1e-12
            if lo < self.c0 * (1 - slack) or hi > (1 + slack) / self.c0:
                raise ParameterError(
                    f"forcing values [{lo}, {hi}] leave [c0, 1/c0] = [{self.c0}, {1 / self.c0}]"
                )

    @property
    def gamma(self) -> float:
        return gamma(self.alpha, self.beta)

    def with_epsilon(self, eps: float) -> "ProblemParams":
        return ProblemParams(self.alpha, self.beta, eps, self.c0, self.forcing)

    def zeta(self, s):
        """Vectorized cutoff ``zeta_{alpha, epsilon}``; with epsilon 0, needs s > 0."""
        s = np.asarray(s, dtype=float)
        if self.epsilon > 0:
            return np.where(s >= self.epsilon, np.maximum(s, self.epsilon) ** self.alpha,
                            self.epsilon**self.alpha)
        if np.any(s <= 0) and self.alpha != 0:
            raise DomainError("epsilon = 0 needs a field bounded below by a positive constant")
        return s**self.alpha
