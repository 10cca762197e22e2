"""Dirichlet solves of the regularized equation and limiting procedures.

The iteration is a damped, projected, symmetric nonlinear Gauss-Seidel
method. At each interior node the nodal equation is solved for the value
below the neighbour mean, the result is blended with the old value and then
clamped to the floor. Nodes held at the floor are contact nodes: there the
equation is only required as an inequality (the residual may be negative),
which is the discrete form of the ``chi{u > 0}`` factor.
"""

from __future__ import annotations

import logging
import math
import time
import warnings
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import _kernels as K
from .errors import (
    ConvergenceError,
    DivergenceWarning,
    MonotonicityWarning,
    ParameterError,
    ZoomError,
)
from .grid import Grid, ScalarField, forcing_array, prolong
from .params import ForcingSpec, ProblemParams

log = logging.getLogger(__name__)

__all__ = [
    "LimitingSolution",
    "SolveReport",
    "SolverOptions",
    "complementarity_residual",
    "continuation_in_boundary",
    "default_eps_schedule",
    "inf_level_family",
    "limit_in_epsilon",
    "nested_continuation",
    "normalize_rhs",
    "rescale",
    "solve_dirichlet",
]


@dataclass(frozen=True)
class SolverOptions:
    """Iteration controls.

    ``tol`` defaults to ``1e-8 * ||f||_inf`` when left as None.
    ``check_every`` is the number of symmetric sweeps between residual checks.
    ``overrelax`` in [1, 2) multiplies the damped step (successive
    over-relaxation); the nodal update moves by ``relax * overrelax`` of the
    way to the nodal solution before clamping.
    """

    tol: float | None = None
    max_iters: int = 200_000
    relax: float = 1.0
    floor: float = 0.0
    check_every: int = 25
    overrelax: float = 1.8

    def __post_init__(self):
        if self.tol is not None and not self.tol > 0:
            raise ParameterError(f"tol must be > 0, got {self.tol}")
        if not 0 < self.relax <= 1:
            raise ParameterError(f"relax must lie in (0, 1], got {self.relax}")
        if not 1 <= self.overrelax < 2:
            raise ParameterError(f"overrelax must lie in [1, 2), got {self.overrelax}")
        if self.floor < 0:
            raise ParameterError(f"floor must be >= 0, got {self.floor}")
        if self.max_iters < 1 or self.check_every < 1:
            raise ParameterError("max_iters and check_every must be positive")

    def resolved_tol(self, params: ProblemParams) -> float:
        if self.tol is not None:
            return self.tol
        return 1e-8 * max(params.forcing.sup_norm(), 1e-300)


@dataclass
class SolveReport:
    iterations: int
    final_residual: float
    residual_history: list
    max_principle_ok: bool
    inf_attained: float
    wall_time_s: float
    converged: bool = True
    contact_nodes: int = 0
    diagnostics: dict = field(default_factory=dict)

    def to_dict(self, timing: bool = False) -> dict:
        return {
            "iterations": self.iterations,
            "final_residual": self.final_residual,
            "max_principle_ok": self.max_principle_ok,
            "inf_attained": self.inf_attained,
            "wall_time_s": self.wall_time_s if timing else None,
            "converged": self.converged,
            "contact_nodes": self.contact_nodes,
            "diagnostics": self.diagnostics,
        }


@dataclass
class LimitingSolution:
    """Final field of a limiting procedure with its Cauchy diagnostics.

    ``history`` holds ``(parameter, gap)`` where ``gap`` is the sup-norm
    difference to the previous iterate; ``cauchy_gap`` is the last gap, or
    nan when only one solve was made.
    """

    field: ScalarField
    history: list
    cauchy_gap: float
    reports: list = field(default_factory=list)


def complementarity_residual(res: np.ndarray, u: np.ndarray, floor: float, interior) -> tuple:
    """Max |residual| off the floor and max positive residual on it."""
    r = res[interior]
    on_floor = u[interior] <= floor
    free = np.abs(r[~on_floor])
    contact = np.maximum(r[on_floor], 0.0)
    worst = max(free.max(initial=0.0), contact.max(initial=0.0))
    return float(worst), int(on_floor.sum())


def _boundary_values(grid: Grid, boundary) -> np.ndarray:
    if callable(boundary):
        vals = np.broadcast_to(np.asarray(boundary(*grid.mesh()), dtype=float), grid.shape)
    else:
        vals = np.full(grid.shape, float(boundary))
    return np.array(vals)


def _laplacian_matrix(m: int, dim: int, h: float):
    d1 = sp.diags([1.0, -2.0, 1.0], [-1, 0, 1], shape=(m, m))
    if dim == 1:
        return (d1 / h**2).tocsc()
    eye = sp.identity(m)
    return ((sp.kron(d1, eye) + sp.kron(eye, d1)) / h**2).tocsc()


def _poisson(grid: Grid, u_bd: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """Solve Lap v = rhs in the interior with v = u_bd on the boundary."""
    h, m, dim = grid.h, grid.n - 2, grid.dim
    inner = (slice(1, -1),) * dim
    b = np.array(rhs[inner], dtype=float)
    if dim == 1:
        b[0] -= u_bd[0] / h**2
        b[-1] -= u_bd[-1] / h**2
    else:
        b[0, :] -= u_bd[0, 1:-1] / h**2
        b[-1, :] -= u_bd[-1, 1:-1] / h**2
        b[:, 0] -= u_bd[1:-1, 0] / h**2
        b[:, -1] -= u_bd[1:-1, -1] / h**2
    v = u_bd.copy()
    v[inner] = spla.spsolve(_laplacian_matrix(m, dim, h), b.ravel()).reshape(b.shape)
    return v


def _cold_start(grid, params, u_bd, floor):
    """Harmonic extension minus a scaled Poisson correction.

    The correction solves ``Lap P = f / zeta(max boundary)`` with zero data;
    it is scaled down if needed so the start stays above half the boundary
    minimum, which keeps the iteration off the floor at the outset.
    """
    interior = grid.interior_mask()
    bd = u_bd[~interior]
    harmonic = _poisson(grid, np.where(interior, 0.0, u_bd), np.zeros(grid.shape))
    if params.forcing.depends_on_solution:
        f = params.forcing.evaluate(grid, np.maximum(harmonic, 0.0))
    else:
        f = params.forcing.evaluate(grid)
    bmax = float(bd.max())
    eps = params.epsilon
    z = (bmax if bmax >= eps else eps) ** params.alpha if (bmax > 0 or eps > 0) else 1.0
    depth = -_poisson(grid, np.zeros(grid.shape), f / z)  # >= 0 for f >= 0
    scale = 1.0
    bmin = float(bd.min())
    peak = float(depth.max())
    if bmin > 0 and peak > 0.5 * bmin:
        scale = 0.5 * bmin / peak
    return np.maximum(harmonic - scale * depth, floor)


def solve_dirichlet(grid: Grid, params: ProblemParams, boundary, opts: SolverOptions | None = None,
                    initial=None):
    """Solve the regularized Dirichlet problem on ``grid``.

    ``boundary`` is a constant or a callable of the coordinate arrays; only
    its boundary-node values are used. ``initial`` optionally supplies a
    warm start (array or ScalarField); its boundary values are overwritten.
    Returns ``(field, report)``; raises ConvergenceError on failure.
    """
    opts = opts or SolverOptions()
    tol = opts.resolved_tol(params)
    interior = grid.interior_mask()
    u_bd = _boundary_values(grid, boundary)
    bd = u_bd[~interior]
    if np.any(bd < 0) or not np.all(np.isfinite(bd)):
        raise ParameterError("boundary values must be finite and >= 0")
    if params.epsilon == 0 and params.alpha != 0 and max(bd.min(), opts.floor) <= 0:
        raise ParameterError("epsilon = 0 needs positive boundary data and floor")
    if initial is None:
        u = _cold_start(grid, params, u_bd, opts.floor)
    else:
        init = initial.values if isinstance(initial, ScalarField) else initial
        u = np.maximum(np.array(init, dtype=float), opts.floor)
    u[~interior] = u_bd[~interior]
    u = np.ascontiguousarray(u)

    f, hea = forcing_array(grid, params)
    a, b, eps, h = float(params.alpha), float(params.beta), float(params.epsilon), grid.h
    step = opts.relax * opts.overrelax
    sweep = K.sweep1d if grid.dim == 1 else K.sweep2d
    resid = K.residual1d if grid.dim == 1 else K.residual2d

    t0 = time.perf_counter()
    history = []
    it = 0
    res, contact = math.inf, 0
    converged = False
    while it < opts.max_iters:
        steps = min(opts.check_every, opts.max_iters - it)
        for _ in range(steps):
            sweep(u, f, a, b, eps, h, step, opts.floor, True, hea)
            sweep(u, f, a, b, eps, h, step, opts.floor, False, hea)
        it += steps
        if not np.all(np.isfinite(u)):
            break
        res, contact = complementarity_residual(resid(u, f, a, b, eps, h, hea), u,
                                                opts.floor, interior)
        history.append(res)
        if res <= tol:
            converged = True
            break
    wall = time.perf_counter() - t0

    finite = bool(np.all(np.isfinite(u)))
    inner = u[interior]
    report = SolveReport(
        iterations=it,
        final_residual=float(res),
        residual_history=history,
        max_principle_ok=bool(finite and inner.max() <= bd.max() + 1e-12 * max(1.0, abs(bd.max()))),
        inf_attained=float(inner.min()) if finite else math.nan,
        wall_time_s=wall,
        converged=converged,
        contact_nodes=contact,
        diagnostics={"tol": tol},
    )
    log.debug("solve: %d iterations, residual %.3e, %.2fs", it, res, wall)
    if not finite:
        raise ConvergenceError("iteration produced non-finite values", None, report)
    fld = ScalarField(grid, u)
    if not converged:
        raise ConvergenceError(
            f"no convergence after {it} iterations (residual {res:.3e} > tol {tol:.3e})",
            fld, report)
    return fld, report


def continuation_in_boundary(grid: Grid, params: ProblemParams, levels, opts: SolverOptions | None = None,
                             initial=None, starts=None):
    """Chain of solves with constant boundary data stepping down ``levels``.

    Each solve starts from the previous field clamped to the new level, or
    from ``starts[i]`` (clamped likewise) when per-level starts are given.
    For alpha >= 0 the chain should be pointwise non-increasing; the largest
    increase is stored as ``diagnostics["chain_violation"]`` and a
    MonotonicityWarning is issued if it exceeds tol.
    """
    levels = [float(x) for x in levels]
    if not levels:
        raise ParameterError("need at least one boundary level")
    if any(x < 0 for x in levels) or any(b >= a for a, b in zip(levels, levels[1:])):
        raise ParameterError("levels must be strictly decreasing and >= 0")
    opts = opts or SolverOptions()
    tol = opts.resolved_tol(params)
    if starts is not None and len(starts) != len(levels):
        raise ParameterError("starts needs one field per level")
    out = []
    prev = initial
    for i, level in enumerate(levels):
        if starts is not None:
            prev = starts[i]
        start = None if prev is None else np.minimum(
            prev.values if isinstance(prev, ScalarField) else prev, level)
        fld, rep = solve_dirichlet(grid, params, level, opts, initial=start)
        rep.diagnostics["boundary_level"] = level
        if out:
            viol = float(np.max(fld.values - out[-1][0].values))
            rep.diagnostics["chain_violation"] = viol
            if params.alpha >= 0 and viol > tol:
                warnings.warn(f"continuation not monotone at level {level}: increase {viol:.3e}",
                              MonotonicityWarning, stacklevel=2)
        out.append((fld, rep))
        prev = fld
    return out


def nested_continuation(grid: Grid, params: ProblemParams, levels,
                        opts: SolverOptions | None = None, depth: int = 1):
    """``continuation_in_boundary`` on ``grid``, seeded from coarser grids.

    The chain is first run on the grid with ``(n + 1) / 2`` nodes per axis
    (recursively, ``depth`` times); each fine level then starts from the
    prolonged coarse solution at the same level. The coarse chain fixes
    which branch is followed, so the result matches a plain continuation
    on ``grid`` whenever both select the same branch.
    """
    if depth < 0:
        raise ParameterError("depth must be >= 0")
    if depth == 0 or grid.n % 2 == 0 or grid.n < 9:
        return continuation_in_boundary(grid, params, levels, opts)
    coarse = Grid(grid.dim, grid.extent, (grid.n + 1) // 2)
    chain = nested_continuation(coarse, params, levels, opts, depth - 1)
    starts = [prolong(f).values for f, _ in chain]
    return continuation_in_boundary(grid, params, levels, opts, starts=starts)


def inf_level_family(grid: Grid, params: ProblemParams, targets, bracket,
                     opts: SolverOptions | None = None, log_tol: float = 0.05,
                     max_solves: int = 40):
    """Constant boundary levels whose solutions have prescribed infima.

    For each target ``t`` (processed in decreasing order) a level ``M`` in
    ``bracket = (M_low, M_high)`` is located by regula falsi with the
    Illinois modification on ``inf u_M - t``, until
    ``|log10(inf u_M / t)| <= log_tol``. Every solve is warm-started from the
    closest solution at a higher level, clamped to the new level. Returns a
    list of ``(level, field, report)`` in the order of ``targets``.
    """
    opts = opts or SolverOptions()
    lo, hi = (float(x) for x in bracket)
    if not 0 <= lo < hi:
        raise ParameterError("bracket must satisfy 0 <= M_low < M_high")
    targets = [float(t) for t in targets]
    if any(t <= 0 for t in targets):
        raise ParameterError("target infima must be > 0")
    solved = {}

    def solve_at(level):
        above = [m for m in solved if m > level]
        start = None
        if above:
            start = np.minimum(solved[min(above)][0].values, level)
        fld, rep = solve_dirichlet(grid, params, level, opts, initial=start)
        rep.diagnostics["boundary_level"] = level
        solved[level] = (fld, rep)
        return rep.inf_attained

    f_hi = solve_at(hi)
    f_lo = solve_at(lo)
    results = {}
    for t in sorted(set(targets), reverse=True):
        if not f_lo < t < f_hi:
            raise ParameterError(f"target infimum {t} not bracketed: inf ranges over [{f_lo}, {f_hi}]")
        # tightest current bracket from everything solved so far
        a = max(m for m, (_, r) in solved.items() if r.inf_attained < t)
        b = min(m for m, (_, r) in solved.items() if r.inf_attained > t)
        fa, fb = solved[a][1].inf_attained - t, solved[b][1].inf_attained - t
        side = 0
        for _ in range(max_solves):
            m = b - fb * (b - a) / (fb - fa)
            if not a < m < b:
                m = 0.5 * (a + b)
            val = solve_at(m)
            if val > 0 and abs(math.log10(val / t)) <= log_tol:
                results[t] = m
                break
            fm = val - t
            if fm > 0:
                b, fb = m, fm
                if side == 1:
                    fa *= 0.5
                side = 1
            else:
                a, fa = m, fm
                if side == -1:
                    fb *= 0.5
                side = -1
        else:
            raise ConvergenceError(f"no level found for infimum {t}", None, None)
    return [(results[t], *solved[results[t]]) for t in targets]


def default_eps_schedule(boundary_min: float, steps: int = 6) -> list:
    """Geometric schedule ``eps0 * 2**-k``, k = 0..steps, with eps0 = boundary_min / 4."""
    if boundary_min <= 0:
        raise ParameterError("default schedule needs a positive boundary minimum")
    eps0 = boundary_min / 4.0
    return [eps0 * 0.5**k for k in range(steps + 1)]


def limit_in_epsilon(grid: Grid, params: ProblemParams, eps_schedule, boundary,
                     opts: SolverOptions | None = None) -> LimitingSolution:
    """Solve along a decreasing epsilon schedule, warm-starting each solve."""
    opts = opts or SolverOptions()
    if eps_schedule is None:
        bd = _boundary_values(grid, boundary)[grid.boundary_mask()]
        eps_schedule = default_eps_schedule(float(bd.min()))
    sched = [float(e) for e in eps_schedule]
    if not sched or any(e <= 0 for e in sched) or any(b >= a for a, b in zip(sched, sched[1:])):
        raise ParameterError("eps_schedule must be strictly decreasing and positive")
    tol = opts.resolved_tol(params)
    history, reports = [], []
    prev = None
    for eps in sched:
        fld, rep = solve_dirichlet(grid, params.with_epsilon(eps), boundary, opts, initial=prev)
        reports.append(rep)
        if prev is not None:
            history.append((eps, float(np.max(np.abs(fld.values - prev.values)))))
        prev = fld
        gaps = [g for _, g in history]
        if len(gaps) >= 3 and gaps[-1] >= gaps[-3]:
            warnings.warn("epsilon gaps stopped decreasing over the last three steps",
                          DivergenceWarning, stacklevel=2)
        if gaps and gaps[-1] <= 10 * tol:
            break
    cauchy = history[-1][1] if history else math.nan
    return LimitingSolution(prev, history, cauchy, reports)


def _zoom_indices(grid: Grid, center, radius: float):
    """Symmetric node window of half-width ``radius`` around the node nearest ``center``."""
    node = grid.nearest_node(center)
    k = int(math.floor(radius / grid.h + 1e-9))
    for i in node:
        if i - k < 0 or i + k > grid.n - 1:
            raise ZoomError(f"zoom window of radius {radius} around {tuple(grid.coords(node))} "
                            "leaves the grid")
    if k < 1:
        raise ZoomError(f"zoom radius {radius} is below the grid spacing {grid.h}")
    return node, k, tuple(slice(i - k, i + k + 1) for i in node)


def _zoomed_grid(grid: Grid, k: int, rho: float) -> Grid:
    half = k * grid.h / rho
    return Grid(grid.dim, ((-half, half),) * grid.dim, 2 * k + 1)


def normalize_rhs(field: ScalarField, params: ProblemParams, eta_star: float, center=None):
    """Zoom ``v(X) = u(Z + rho X)`` with ``rho = eta**(1/gamma) ||f||**(-1/(2+beta))``.

    The window is the largest symmetric node box inside ``Z + rho [-1, 1]^d``
    (Z snapped to the nearest node, default the box center). The returned
    params carry the table ``rho**(2+beta) f(Z + rho X)``.
    """
    if params.forcing.depends_on_solution:
        raise ParameterError("normalization needs a forcing independent of the solution")
    fsup = params.forcing.sup_norm()
    if not fsup > 0:
        raise ParameterError("normalization needs ||f||_inf > 0")
    if not eta_star > 0:
        raise ParameterError("eta_star must be > 0")
    grid = field.grid
    if center is None:
        center = [0.5 * (a + b) for a, b in grid.extent]
    rho = eta_star ** (1.0 / params.gamma) * fsup ** (-1.0 / (2.0 + params.beta))
    _, k, window = _zoom_indices(grid, center, rho)
    new_grid = _zoomed_grid(grid, k, rho)
    values = field.values[window]
    g = rho ** (2.0 + params.beta) * params.forcing.evaluate(grid)[window]
    c0 = min(params.c0, float(g.min()), 1.0 / float(g.max()))
    new_params = ProblemParams(params.alpha, params.beta, params.epsilon, c0,
                               ForcingSpec.table(new_grid, g))
    return ScalarField(new_grid, values), new_params


def rescale(field: ScalarField, params: ProblemParams, rho: float, center=None, halfwidth=None):
    """Scaling covariance map ``v(X) = rho**-gamma u(Z + rho X)``.

    The window of half-width ``rho * halfwidth`` around Z is mapped onto the
    box of half-width ``halfwidth`` (default: the distance from Z to the grid
    edge, so a centered window maps back onto the original box). ``v`` solves
    the same equation there with forcing ``f(Z + rho X)`` and
    ``epsilon' = rho**-gamma epsilon``.
    """
    if not 0 < rho:
        raise ParameterError("rho must be > 0")
    grid = field.grid
    if center is None:
        center = [0.5 * (a + b) for a, b in grid.extent]
    if halfwidth is None:
        halfwidth = grid.distance_to_edge(grid.coords(grid.nearest_node(center)))
    _, k, window = _zoom_indices(grid, center, rho * halfwidth)
    new_grid = _zoomed_grid(grid, k, rho)
    g = params.gamma
    if params.forcing.kind == "constant":
        forcing = params.forcing
    elif params.forcing.kind == "table":
        forcing = ForcingSpec.table(new_grid, params.forcing.evaluate(grid)[window])
    else:
        raise ParameterError("rescale needs a forcing independent of the solution")
    new_params = replace(params, epsilon=params.epsilon * rho ** (-g), forcing=forcing)
    return ScalarField(new_grid, rho ** (-g) * field.values[window]), new_params
