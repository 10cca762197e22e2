"""Regularity measurements on nodal fields.

Growth exponents and dyadic tables at free-boundary points, non-degeneracy
ratios, empirical and constructed moduli of continuity, the variable-doubling
probe, the flatness implication with its eta sweep, Harnack quotients and
Hoelder seminorms.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels as K
from ._io import write_csv
from .errors import (
    EmptyBallError,
    EmptySubdomainError,
    NonMonotoneInputError,
    NonPositiveValueError,
    NotNormalizedError,
    NotOnFreeBoundaryError,
    TooFewRadiiError,
    UnderResolvedError,
    ZoomError,
)
from .freeboundary import PositivitySet, on_free_boundary
from .grid import ScalarField, ball_mask, sup_over_ball
from .params import ProblemParams
from .solver import normalize_rhs

__all__ = [
    "DoublingProbeResult",
    "DyadicTable",
    "EtaSweepResult",
    "ExponentFit",
    "ModulusCurve",
    "ModulusFunction",
    "RatioReport",
    "doubling_ladder_search",
    "doubling_probe",
    "dyadic_growth_table",
    "eta_sweep",
    "flatness_check",
    "growth_exponent",
    "harnack_quotient",
    "holder_seminorm",
    "modulus_estimate",
    "modulus_from_omega",
    "nondegeneracy_check",
    "omega",
]

RADIUS_SLACK = 1e-9


def _center_point(field: ScalarField, center):
    """Coordinates of ``center``, given as a node index tuple or a point."""
    arr = np.atleast_1d(np.asarray(center))
    if np.issubdtype(arr.dtype, np.integer):
        return field.grid.coords(tuple(arr)), tuple(int(i) for i in arr)
    pt = arr.astype(float)
    return pt, field.grid.nearest_node(pt)


def _usable_radii(field, radii):
    h = field.grid.h
    radii = sorted((float(r) for r in radii), reverse=True)
    keep = [r for r in radii if r >= 2 * h * (1 - RADIUS_SLACK)]
    return keep, [r for r in radii if r not in keep]


@dataclass(frozen=True)
class ExponentFit:
    center: tuple
    radii: list
    sup_values: list
    slope: float
    intercept: float
    max_abs_residual: float
    target_gamma: float | None
    excluded_radii: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "center": list(self.center),
            "radii": self.radii,
            "sup_values": self.sup_values,
            "slope": self.slope,
            "intercept": self.intercept,
            "target_gamma": self.target_gamma,
            "max_abs_residual": self.max_abs_residual,
        }


def _loglog_fit(radii, sups):
    x, y = np.log(radii), np.log(sups)
    slope, intercept = np.polyfit(x, y, 1)
    resid = float(np.max(np.abs(y - (slope * x + intercept))))
    return float(slope), float(intercept), resid


def growth_exponent(field: ScalarField, pset: PositivitySet, center, radii,
                    target_gamma: float | None = None) -> ExponentFit:
    """Least-squares slope of ``log sup_{B_r(Z)} u`` against ``log r``.

    Radii below two grid spacings and radii with a non-positive sup are
    dropped; at least three must remain.
    """
    pt, node = _center_point(field, center)
    if not on_free_boundary(pset, node):
        raise NotOnFreeBoundaryError(f"node {node} is not on the discrete free boundary")
    keep, excluded = _usable_radii(field, radii)
    rs, sups = [], []
    for r in keep:
        s = sup_over_ball(field, pt, r)
        if s > 0:
            rs.append(r)
            sups.append(s)
        else:
            excluded.append(r)
    if len(rs) < 3:
        raise TooFewRadiiError(f"only {len(rs)} usable radii (need 3, r >= 2h and sup > 0)")
    slope, intercept, resid = _loglog_fit(rs, sups)
    return ExponentFit(tuple(float(c) for c in pt), rs, sups, slope, intercept, resid,
                       target_gamma, sorted(excluded, reverse=True))


@dataclass(frozen=True)
class DyadicTable:
    """Rows ``(k, sup over B_{base^-k}, sup / base^(-k gamma))``."""

    rows: list
    gamma: float
    base: float

    @property
    def ratios(self) -> np.ndarray:
        return np.array([r[2] for r in self.rows])

    @property
    def bound(self) -> float:
        return float(self.ratios.max())

    @property
    def spread(self) -> float:
        lo = self.ratios.min()
        return float(self.ratios.max() / lo) if lo > 0 else math.inf

    def passes(self, C: float | None = None) -> bool:
        """True iff one constant bounds every ratio (``C`` if given)."""
        r = self.ratios
        ok = bool(np.all(np.isfinite(r)))
        return ok if C is None else ok and bool(r.max() <= C)

    def to_rows(self) -> list:
        return [list(r) for r in self.rows]

    def write_csv(self, path):
        return write_csv(path, ["k", "sup", "ratio"], self.rows)


def dyadic_growth_table(field: ScalarField, center, k_max: int, gamma: float,
                        base: float = 4.0) -> DyadicTable:
    if k_max < 1:
        raise ValueError("k_max must be >= 1")
    h = field.grid.h
    if base ** (-k_max) < 2 * h * (1 - RADIUS_SLACK):
        raise UnderResolvedError(
            f"radius {base ** -k_max:.4g} is below two grid spacings ({2 * h:.4g})")
    pt, _ = _center_point(field, center)
    rows = []
    for k in range(1, k_max + 1):
        s = sup_over_ball(field, pt, base ** (-k))
        rows.append((k, s, s / base ** (-k * gamma)))
    return DyadicTable(rows, float(gamma), float(base))


@dataclass(frozen=True)
class RatioReport:
    radii: list
    ratios: list
    min_ratio: float
    c: float

    @property
    def passed(self) -> bool:
        return self.min_ratio >= self.c and self.min_ratio > 0

    def to_dict(self) -> dict:
        return {"radii": self.radii, "ratios": self.ratios, "min_ratio": self.min_ratio,
                "c": self.c, "passed": self.passed}


def nondegeneracy_check(field: ScalarField, center, radii, gamma: float,
                        c: float = 0.0) -> RatioReport:
    """Min over radii of ``sup_{B_r} u / r**gamma``; passes iff it is >= c and > 0."""
    pt, _ = _center_point(field, center)
    keep, _ = _usable_radii(field, radii)
    if len(keep) < 3:
        raise TooFewRadiiError(f"only {len(keep)} radii with r >= 2h (need 3)")
    ratios = [sup_over_ball(field, pt, r) / r**gamma for r in keep]
    return RatioReport(keep, ratios, float(min(ratios)), float(c))


@dataclass(frozen=True)
class ModulusCurve:
    t_bins: np.ndarray
    modulus: np.ndarray
    field_inf: float

    def rows(self):
        return list(zip(self.t_bins.tolist(), self.modulus.tolist()))

    def write_csv(self, path):
        return write_csv(path, ["t", "modulus"], self.rows())


def _subdomain_mask(field: ScalarField, margin: float) -> np.ndarray:
    grid = field.grid
    mask = np.ones(grid.shape, dtype=bool)
    for k, m in enumerate(grid.mesh()):
        a, b = grid.extent[k]
        mask &= (m >= a + margin - 1e-12) & (m <= b - margin + 1e-12)
    return mask


def _pair_seed(shape) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([len(shape), *shape]))


def modulus_estimate(field: ScalarField, t_bins, margin: float,
                     n_pairs: int = 100_000) -> ModulusCurve:
    """Binned ``max |u(X) - u(Y)|`` over node pairs with ``|X - Y| <= t``.

    Pairs are restricted to the box shrunk by ``margin``. In 1D every pair is
    used. In 2D ``n_pairs`` pairs are drawn, split evenly over the bins: bin
    ``t`` draws a node and a lattice offset of length at most ``t``. The
    generator is seeded from the grid shape, so equal grids see equal pairs.
    """
    t = np.asarray(t_bins, dtype=float)
    if t.ndim != 1 or len(t) < 3:
        raise ValueError("need at least 3 bins")
    if np.any(np.diff(t) <= 0) or t[0] <= 0:
        raise ValueError("t_bins must be positive and strictly increasing")
    if not margin > 0:
        raise ValueError("margin must be > 0")
    grid, h = field.grid, field.grid.h
    sub = _subdomain_mask(field, margin)
    if not sub.any():
        raise EmptySubdomainError(f"no nodes at distance >= {margin} from the boundary")
    idx = np.argwhere(sub)
    lo, hi = idx.min(axis=0), idx.max(axis=0)
    vals = field.values
    best = np.zeros(len(t))
    slack = 1 + 1e-12
    if grid.dim == 1:
        u = vals[lo[0]:hi[0] + 1]
        for k in range(1, len(u)):
            diff = float(np.max(np.abs(u[k:] - u[:-k])))
            best[t * slack >= k * h] = np.maximum(best[t * slack >= k * h], diff)
    else:
        rng = _pair_seed(grid.shape)
        per_bin = max(1, n_pairs // len(t))
        for b, tb in enumerate(t):
            R = int(math.floor(tb / h * slack))
            if R < 1:
                continue
            oi, oj = np.mgrid[-R:R + 1, -R:R + 1]
            ok = (oi**2 + oj**2 <= (tb / h) ** 2 * slack) & ((oi != 0) | (oj != 0))
            offs = np.stack([oi[ok], oj[ok]], axis=1)
            base = idx[rng.integers(0, len(idx), per_bin)]
            other = base + offs[rng.integers(0, len(offs), per_bin)]
            inside = np.all((other >= lo) & (other <= hi), axis=1)
            if inside.any():
                bsel, osel = base[inside], other[inside]
                d = np.abs(vals[bsel[:, 0], bsel[:, 1]] - vals[osel[:, 0], osel[:, 1]])
                best[b] = d.max()
        best = np.maximum.accumulate(best)
    inner = field.interior_values()
    return ModulusCurve(t, best, float(inner.min() if inner.size else vals.min()))


@dataclass(frozen=True)
class ModulusFunction:
    """Tabulated ``varpi(t) = Xi^{-1}(1/t)`` with ``Xi(d) = Omega(d)/d``.

    Sample points are exact; values between them are interpolated linearly
    in log-log coordinates, which is exact for power laws. ``varpi(t)`` is 0
    for ``t <= 0`` and nan outside the sampled range.
    """

    t: np.ndarray
    values: np.ndarray

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        out = np.full(t.shape, np.nan)
        out[t <= 0] = 0.0
        inside = (t >= self.t[0] * (1 - 1e-12)) & (t <= self.t[-1] * (1 + 1e-12))
        tt = np.clip(t[inside], self.t[0], self.t[-1])
        out[inside] = np.exp(np.interp(np.log(tt), np.log(self.t), np.log(self.values)))
        return out if out.ndim else float(out)


def modulus_from_omega(deltas, omegas) -> ModulusFunction:
    """Invert ``Xi(d) = Omega(d)/d`` from samples of a non-increasing Omega."""
    d = np.asarray(deltas, dtype=float)
    w = np.asarray(omegas, dtype=float)
    if d.shape != w.shape or d.ndim != 1 or len(d) < 2:
        raise ValueError("need matching 1D sample arrays with at least two points")
    if np.any(d <= 0) or np.any(w <= 0):
        raise ValueError("samples must be positive")
    order = np.argsort(d)
    d, w = d[order], w[order]
    if np.any(np.diff(d) == 0):
        raise NonMonotoneInputError("repeated delta samples")
    if np.any(np.diff(w) > 0):
        raise NonMonotoneInputError("Omega must be non-increasing in delta")
    t = d / w  # = 1 / Xi(d), strictly increasing
    return ModulusFunction(t, d)


def omega(z, d: float):
    """Concave doubling modulus: ``z - z**1.5 / (10 sqrt d)`` up to ``d``, ``0.9 d`` beyond."""
    z = np.asarray(z, dtype=float)
    out = np.where(z >= d, 0.9 * d, z - np.minimum(z, d) ** 1.5 / (10 * math.sqrt(d)))
    return out if out.ndim else float(out)


@dataclass(frozen=True)
class DoublingProbeResult:
    L: float
    kappa: float
    delta: float
    zoom: float
    d: float
    sup_value: float
    argmax: tuple

    @property
    def passed(self) -> bool:
        return self.sup_value <= self.delta

    def to_dict(self) -> dict:
        return {"L": self.L, "kappa": self.kappa, "delta": self.delta, "zoom": self.zoom,
                "d": self.d, "sup_value": self.sup_value,
                "argmax": [list(p) for p in self.argmax], "passed": self.passed}


def _probe_points(field, d, zoom, center):
    grid = field.grid
    if center is None:
        center = [0.5 * (a + b) for a, b in grid.extent]
    c = np.atleast_1d(np.asarray(center, dtype=float))
    mask = ball_mask(grid, c, zoom * d)
    if not mask.any():
        raise ZoomError("zoomed grid empty")
    pts = (grid.points[mask.ravel()] - c) / zoom
    return np.ascontiguousarray(field.values[mask]), np.ascontiguousarray(pts)


def doubling_probe(field: ScalarField, d: float, L: float, kappa="auto", delta: float = 0.0,
                   zoom: float = 1.0, center=None) -> DoublingProbeResult:
    """Max over node pairs of ``v(zX) - v(zY) - L omega(|X-Y|) - kappa(|X|^2 + |Y|^2)``.

    ``X`` and ``Y`` range over ``(x - center) / zoom`` for nodes ``x`` within
    ``zoom * d`` of ``center`` (the box center by default), i.e. over the
    ball of radius ``d`` in zoomed coordinates. ``kappa="auto"`` means
    ``8 ||v||_inf / d**2``.
    """
    if not d > 0:
        raise ValueError("d must be > 0")
    if not 0 < zoom <= 1:
        raise ValueError("zoom must lie in (0, 1]")
    if kappa == "auto":
        kappa = 8.0 * field.sup_norm() / d**2
    elif kappa < 0:
        raise ValueError("kappa must be >= 0")
    vals, pts = _probe_points(field, d, zoom, center)
    best, i, j = K.doubling_scan(vals, pts, float(L), float(kappa), float(d))
    argmax = (tuple(float(x) for x in pts[i]), tuple(float(x) for x in pts[j]))
    return DoublingProbeResult(float(L), float(kappa), float(delta), float(zoom), float(d),
                               float(best), argmax)


LADDER_L = tuple(2.0**j for j in range(17))
LADDER_ZOOM = tuple(2.0**-j for j in range(9))


def doubling_ladder_search(fields, d: float, delta: float, kappa="auto", center=None,
                           ladder_L=LADDER_L, ladder_zoom=LADDER_ZOOM) -> dict:
    """Find ladder pairs ``(L, zoom)`` with probe sup <= delta.

    For every zoom the smallest passing L is located per field by bisection
    on the ladder (the sup is non-increasing in L). Returns per-field passing
    pairs and the common pair with the smallest ``L`` (ties: largest zoom).
    """
    Ls = sorted(ladder_L)
    per_field = []
    for fld in fields:
        minimal = {}
        for z in ladder_zoom:
            def ok(k):
                return doubling_probe(fld, d, Ls[k], kappa, delta, z, center).passed
            lo, hi = 0, len(Ls) - 1
            if not ok(hi):
                minimal[z] = None
                continue
            while lo < hi:
                mid = (lo + hi) // 2
                if ok(mid):
                    hi = mid
                else:
                    lo = mid + 1
            minimal[z] = Ls[lo]
        per_field.append(minimal)
    common = None
    for z in ladder_zoom:
        need = [m[z] for m in per_field]
        if all(x is not None for x in need):
            cand = (max(need), z)
            if common is None or cand[0] < common[0] or (cand[0] == common[0] and z > common[1]):
                common = cand
    return {"per_field": per_field, "common": common}


def flatness_check(field_normalized: ScalarField, params: ProblemParams, theta: float,
                   eta: float) -> bool:
    """Truth of ``inf_{B_1/2} v <= eta  =>  sup_{B_1/4} v <= theta``.

    Balls are centered at the origin of the normalized coordinates.
    """
    tiny = 1e-12
    if field_normalized.sup_norm() > 1 + tiny:
        raise NotNormalizedError(f"sup |v| = {field_normalized.sup_norm():.4g} exceeds 1")
    bound = eta ** (1 + params.alpha + params.beta)
    if params.forcing.sup_norm() > bound * (1 + 1e-9):
        raise NotNormalizedError(
            f"forcing sup {params.forcing.sup_norm():.4g} exceeds eta^(1+alpha+beta) = {bound:.4g}")
    origin = np.zeros(field_normalized.grid.dim)
    mask = ball_mask(field_normalized.grid, origin, 0.5)
    if not mask.any():
        raise EmptyBallError("no node in the half ball")
    if field_normalized.values[mask].min() > eta:
        return True
    return sup_over_ball(field_normalized, origin, 0.25) <= theta


@dataclass
class EtaSweepResult:
    eta_star: float | None
    theta: float
    records: list

    def to_dict(self) -> dict:
        return {"eta_star": self.eta_star, "theta": self.theta, "records": self.records}


def eta_sweep(field: ScalarField, params: ProblemParams, centers, theta: float | None = None,
              eta0: float = 0.25, factor: float = 0.5) -> EtaSweepResult:
    """Descend ``eta`` geometrically until the flatness implication holds at all centers.

    At each level every center is normalized with :func:`normalize_rhs`; a
    level counts only if every window fits in the grid, every normalized
    field satisfies ``|v| <= 1`` and every implication holds. The sweep stops
    without success once the quarter ball shrinks below two grid spacings.
    """
    if theta is None:
        theta = 4.0 ** (-params.gamma)
    h = field.grid.h
    fsup = params.forcing.sup_norm()
    records = []
    eta = eta0
    while True:
        rho = eta ** (1.0 / params.gamma) * fsup ** (-1.0 / (2.0 + params.beta))
        if rho / 4.0 < 2 * h * (1 - RADIUS_SLACK):
            return EtaSweepResult(None, theta, records)
        rec = {"eta": eta, "rho": rho, "centers": []}
        ok_all = True
        for c in centers:
            pt = field.grid.coords(c) if np.issubdtype(np.asarray(c).dtype, np.integer) else c
            entry = {"center": [float(x) for x in np.atleast_1d(pt)]}
            try:
                v, p = normalize_rhs(field, params, eta, center=pt)
                entry["sup_quarter"] = sup_over_ball(v, np.zeros(v.grid.dim), 0.25)
                entry["holds"] = flatness_check(v, p, theta, eta)
            except (ZoomError, NotNormalizedError) as exc:
                entry["holds"] = False
                entry["reason"] = type(exc).__name__
            ok_all &= entry["holds"]
            rec["centers"].append(entry)
        records.append(rec)
        if ok_all:
            return EtaSweepResult(eta, theta, records)
        eta *= factor


def harnack_quotient(field: ScalarField, center, radius: float) -> float:
    pt, _ = _center_point(field, center)
    mask = ball_mask(field.grid, pt, radius)
    if not mask.any():
        raise EmptyBallError("no node in the ball")
    vals = field.values[mask]
    if vals.min() <= 0:
        raise NonPositiveValueError("field must be strictly positive on the ball")
    return float(vals.max() / vals.min())


def holder_seminorm(field: ScalarField, center, radius: float, exponent: float) -> float:
    if radius < 4 * field.grid.h * (1 - RADIUS_SLACK):
        raise UnderResolvedError(f"radius {radius} is below four grid spacings")
    pt, _ = _center_point(field, center)
    mask = ball_mask(field.grid, pt, radius)
    vals = np.ascontiguousarray(field.values[mask])
    pts = np.ascontiguousarray(field.grid.points[mask.ravel()])
    return float(K.holder_scan(vals, pts, float(exponent)))
