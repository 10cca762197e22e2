"""Execution of run manifests: solve stage, analysis stage and artifacts.

A run writes into its output directory:

* ``manifest.resolved``: every key with its resolved value,
* ``field_XXX.csv`` and ``report_XXX.json``: one snapshot and solve report
  per solve kept by the mode (the last one is the analysed field),
* per-check artifacts (``dyadic_*.csv``, ``modulus_*.csv``, ...),
* ``summary.json``: embedded manifest, solve reports and check results.

Nothing time- or path-dependent is written, so two runs of the same
manifest produce identical bytes.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.stats import spearmanr

from . import analysis as an
from . import freeboundary as fb
from ._io import atomic_write_text, write_json
from .errors import (
    AnalysisError,
    ConvergenceError,
    EmptyBallError,
    EmptyZeroSetError,
    ManifestError,
    ZoomError,
)
from .grid import ScalarField, read_field_csv, residual_field, write_field_csv
from .manifest import RunManifest, parse_manifest, radial_forcing
from .solver import (
    complementarity_residual,
    nested_continuation,
    inf_level_family,
    limit_in_epsilon,
    solve_dirichlet,
)

EXIT_OK = 0
EXIT_MANIFEST = 2
EXIT_CONVERGENCE = 3
EXIT_ANALYSIS = 4

VERTEX_EPS = 1e-300

ANALYSIS_ERRORS = (AnalysisError, ZoomError, EmptyZeroSetError, EmptyBallError)


@dataclass
class Solved:
    """Fields kept by the solve stage; ``fields[-1]`` is analysed unless the
    mode is a family, in which case every member is."""

    fields: list
    reports: list = field(default_factory=list)
    labels: list = field(default_factory=list)
    extra: dict = field(default_factory=dict)


def boundary_function(m: RunManifest):
    v = m.values
    kind = v["solve.boundary"]
    if kind == "constant":
        return v["solve.boundary_value"]
    if kind == "radial":
        g = m.params().gamma
        c = v["solve.oracle_c"]
        return lambda *xs: c * np.sqrt(sum(x * x for x in xs)) ** g
    c0, c1, c2 = v["solve.boundary_coeffs"]
    return lambda *xs: c0 + c1 * sum(xs) + c2 * sum(x * x for x in xs)


def _sample(grid, fn) -> np.ndarray:
    if callable(fn):
        return np.broadcast_to(np.asarray(fn(*grid.mesh()), dtype=float), grid.shape).copy()
    return np.full(grid.shape, float(fn))


# solve stage


def solve_stage(m: RunManifest) -> Solved:
    v = m.values
    grid, params, opts = m.grid(), m.params(), m.options()
    mode = v["solve.mode"]
    bd = boundary_function(m)
    if mode == "oracle":
        return Solved([ScalarField(grid, _sample(grid, bd))], [None], ["oracle"])
    if mode == "single":
        fld, rep = solve_dirichlet(grid, params, bd, opts)
        return Solved([fld], [rep], ["solve"])
    if mode == "limit":
        sched = v["solve.eps_schedule"] or None
        lim = limit_in_epsilon(grid, params, sched, bd, opts)
        extra = {"eps_history": [list(p) for p in lim.history], "cauchy_gap": lim.cauchy_gap}
        return Solved([lim.field], [lim.reports[-1]], ["limit"], extra)
    if mode == "continuation":
        chain = nested_continuation(grid, params, v["solve.levels"], opts, v["solve.nested"])
        first = next((r.diagnostics["boundary_level"] for _, r in chain if r.contact_nodes), None)
        extra = {"free_boundary_level": first}
        return Solved([f for f, _ in chain], [r for _, r in chain],
                      [f"level={r.diagnostics['boundary_level']!r}" for _, r in chain], extra)
    fam = inf_level_family(grid, params, v["solve.targets"], v["solve.bracket"], opts)
    return Solved([f for _, f, _ in fam], [r for _, _, r in fam],
                  [f"target={t!r}" for t in v["solve.targets"]],
                  {"levels": [lv for lv, _, _ in fam]})


# analysis stage


def _centers(m, fld, pset):
    v = m.values
    cs = fb.free_boundary_centers(pset, v["analysis.center_spacing"])
    cap = v["analysis.max_centers"]
    if len(cs) > cap:
        step = math.ceil(len(cs) / cap)
        cs = cs[::step]
    return cs


def _origin_center(fld):
    grid = fld.grid
    return grid.nearest_node([0.5 * (a + b) for a, b in grid.extent])


def analysis_centers(m: RunManifest, fld: ScalarField):
    """Origin for oracle fields, thinned free-boundary nodes otherwise."""
    thr = m["analysis.threshold"]
    pset = fb.extract_positivity_set(fld, m["equation.epsilon"] if thr is None else thr)
    if m["solve.mode"] == "oracle":
        return pset, [_origin_center(fld)]
    return pset, _centers(m, fld, pset)


def _check_residual(m, fld, rep, outdir):
    params = m.params()
    grid = fld.grid
    if m["solve.mode"] == "oracle" and params.epsilon == 0:
        # the sampled profile vanishes at its vertex only, a node excluded below
        params = params.with_epsilon(VERTEX_EPS)
    res = residual_field(fld, params)
    interior = grid.interior_mask()
    if m["solve.mode"] == "oracle":
        # the vertex of the radial profile is singular; skip nodes within 2h of it
        center = grid.coords(_origin_center(fld))
        dist = np.sqrt(sum((x - c) ** 2 for x, c in zip(grid.mesh(), center)))
        keep = interior & (dist > 2 * grid.h * (1 + 1e-9))
        return {"max_residual": float(np.abs(res[keep]).max()), "passed": None}
    worst, contact = complementarity_residual(res, fld.values, m["solve.floor"], interior)
    tol = rep.diagnostics["tol"]
    return {"max_residual": worst, "contact_nodes": contact, "tol": tol, "passed": worst <= tol}


def _check_data_match(m, fld):
    grid = fld.grid
    exact = _sample(grid, boundary_function(m))
    if m["solve.mode"] == "oracle":
        fld, _ = solve_dirichlet(grid, m.params(), boundary_function(m), m.options())
    scale = max(float(np.abs(exact).max()), 1e-300)
    err = float(np.abs(fld.values - exact).max())
    rel = err / scale
    return {"abs_error": err, "rel_error": rel, "rel_tol": m["analysis.match_rel_tol"],
            "passed": rel <= m["analysis.match_rel_tol"]}


def _check_exponent(m, fld, pset, centers):
    g = m.params().gamma
    fits = [an.growth_exponent(fld, pset, c, m["analysis.radii"], g) for c in centers]
    if not fits:
        raise AnalysisError("no free-boundary centers to fit")
    slopes = np.array([f.slope for f in fits])
    med = float(np.median(slopes))
    tol = m["analysis.slope_tol"]
    return {"gamma": g, "median_slope": med, "min_slope": float(slopes.min()),
            "max_slope": float(slopes.max()), "slope_tol": tol,
            "fits": [f.to_dict() for f in fits], "passed": abs(med - g) <= tol}


def _check_dyadic(m, fld, centers, outdir, tag):
    g = m.params().gamma
    tables = [an.dyadic_growth_table(fld, c, m["analysis.k_max"], g) for c in centers]
    spreads = [t.spread for t in tables]
    bound = max(t.bound for t in tables)
    for i, t in enumerate(tables):
        t.write_csv(outdir / f"dyadic_{tag}_{i:03d}.csv")
    worst = max(spreads)
    return {"gamma": g, "C": bound, "max_spread": worst, "spreads": spreads,
            "spread_max": m["analysis.spread_max"], "passed": worst <= m["analysis.spread_max"]}


def _check_distance(m, fld, pset):
    rep = fb.distance_bound_check(fld, pset, m.params(), m["analysis.distance_C"])
    return rep.to_dict()


def _check_nondegeneracy(m, fld, centers):
    g = m.params().gamma
    out = []
    for c in centers:
        rep = an.nondegeneracy_check(fld, c, m["analysis.radii"], g)
        out.append(rep.to_dict())
    return {"centers": out, "min_ratio": min(r["min_ratio"] for r in out), "passed": None}


def _check_eta(m, fld, centers):
    sweep = an.eta_sweep(fld, m.params(), centers, m["analysis.theta"], m["analysis.eta0"])
    out = sweep.to_dict()
    out["passed"] = sweep.eta_star is not None
    return out


def _check_chain(m, solved):
    viol = [r.diagnostics.get("chain_violation") for r in solved.reports[1:]]
    tol = solved.reports[0].diagnostics["tol"]
    worst = max(viol) if viol else 0.0
    return {"max_increase": worst, "tol": tol,
            "free_boundary_level": solved.extra.get("free_boundary_level"),
            "passed": worst <= tol}


def _default_t_bins(grid, margin):
    width = grid.extent[0][1] - grid.extent[0][0] - 2 * margin
    return np.geomspace(grid.h, width / 2, 12)


def _check_modulus(m, fields, outdir):
    grid = fields[0].grid
    margin = m["analysis.margin"]
    t_bins = m["analysis.t_bins"] or _default_t_bins(grid, margin)
    curves = [an.modulus_estimate(f, t_bins, margin) for f in fields]
    for i, c in enumerate(curves):
        c.write_csv(outdir / f"modulus_{i:03d}.csv")
    stack = np.array([c.modulus for c in curves])
    band = float((stack.max(axis=0) - stack.min(axis=0)).max())
    allowed = m["analysis.band_factor"] * math.sqrt(grid.h)
    infs = [c.field_inf for c in curves]
    # sup over t of each curve's distance from the pointwise family mean
    deviations = np.abs(stack - stack.mean(axis=0)).max(axis=1).tolist()
    sups = [float(c.modulus.max()) for c in curves]
    rho, rho_sup = math.nan, math.nan
    if len(curves) > 2:
        rho = float(spearmanr(infs, deviations)[0])
        rho_sup = float(spearmanr(infs, sups)[0])
    spear_ok = not (abs(rho) > m["analysis.spearman_max"])
    return {"band": band, "band_allowed": allowed, "band_ok": band <= allowed,
            "inf_levels": infs, "sup_deviations": deviations, "spearman": rho,
            "curve_sups": sups, "spearman_curve_sup": rho_sup,
            "spearman_max": m["analysis.spearman_max"], "spearman_ok": spear_ok,
            "passed": band <= allowed and spear_ok}


def _check_doubling(m, fields):
    grid = fields[0].grid
    d = m["analysis.doubling_d"] or 0.5 * (grid.extent[0][1] - grid.extent[0][0])
    out = {"d": d, "deltas": {}}
    ok = True
    for delta in m["analysis.deltas"]:
        res = an.doubling_ladder_search(fields, d, delta)
        every = all(any(v is not None for v in pf.values()) for pf in res["per_field"])
        entry = {
            "per_field": [{fmt_key(z): L for z, L in pf.items()} for pf in res["per_field"]],
            "common": list(res["common"]) if res["common"] else None,
            "each_field_ok": every,
        }
        entry["passed"] = every and res["common"] is not None
        ok &= entry["passed"]
        out["deltas"][fmt_key(delta)] = entry
    out["passed"] = ok
    return out


def fmt_key(x) -> str:
    # shortest round-trip form, so 0.1 stays "0.1"
    return repr(float(x))


def _check_harnack(m, fields):
    r = m["analysis.harnack_radius"]
    out = []
    for f in fields:
        c = _origin_center(f)
        try:
            out.append(an.harnack_quotient(f, c, r))
        except AnalysisError:
            out.append(math.inf)
    return {"radius": r, "quotients": out, "passed": None}


def analysis_stage(m: RunManifest, solved: Solved, outdir: Path) -> dict:
    checks = {}
    names = m["analysis.checks"]
    family = m["solve.mode"] == "family"
    targets = list(enumerate(solved.fields)) if family else [(0, solved.fields[-1])]
    multi = family and len(targets) > 1
    per_field = ("residual", "data_match", "exponent", "dyadic", "distance", "nondegeneracy",
                 "eta")
    for name in names:
        if name in per_field:
            results = []
            for i, fld in targets:
                rep = solved.reports[i if family else -1]
                results.append(_field_check(name, m, fld, rep, outdir, f"{i:03d}"))
            if multi:
                vals = [r.get("passed") for r in results]
                passed = None if any(v is None for v in vals) else all(vals)
                checks[name] = {"members": results, "passed": passed}
            else:
                checks[name] = results[0]
        elif name == "chain":
            checks[name] = _check_chain(m, solved)
        elif name == "modulus":
            checks[name] = _check_modulus(m, solved.fields, outdir)
        elif name == "doubling":
            checks[name] = _check_doubling(m, solved.fields)
        elif name == "harnack":
            checks[name] = _check_harnack(m, solved.fields)
    return checks


def _field_check(name, m, fld, rep, outdir, tag):
    if name == "residual":
        return _check_residual(m, fld, rep, outdir)
    if name == "data_match":
        return _check_data_match(m, fld)
    pset, centers = analysis_centers(m, fld)
    if name == "exponent":
        return _check_exponent(m, fld, pset, centers)
    if name == "dyadic":
        return _check_dyadic(m, fld, centers, outdir, tag)
    if name == "distance":
        return _check_distance(m, fld, pset)
    if name == "nondegeneracy":
        return _check_nondegeneracy(m, fld, centers)
    return _check_eta(m, fld, centers)


# artifacts


def _write_fields(solved: Solved, outdir: Path, snapshots: bool):
    keep = range(len(solved.fields)) if snapshots else [len(solved.fields) - 1]
    for i in keep:
        write_field_csv(solved.fields[i], outdir / f"field_{i:03d}.csv")
        rep = solved.reports[i]
        if rep is not None:
            write_json(outdir / f"report_{i:03d}.json", rep.to_dict())
    # everything the summary needs besides the fields, for `report`
    write_json(outdir / "solve.json", {
        "labels": solved.labels, "extra": solved.extra,
        "solves": [r.to_dict() if r is not None else None for r in solved.reports]})


def _summary(m, solved, checks, status, error=None):
    verdicts = [c.get("passed") for c in checks.values()]
    return {
        "manifest": m.to_dict(),
        "name": m["name"],
        "exit_status": status,
        "error": error,
        "labels": solved.labels if solved else [],
        "solves": [r.to_dict() if r is not None else None for r in solved.reports] if solved else [],
        "extra": solved.extra if solved else {},
        "checks": checks,
        "all_passed": all(v is not False for v in verdicts) if verdicts else None,
    }


def run_manifest(m: RunManifest, outdir=None) -> tuple[int, dict]:
    """Execute ``m``; returns (exit status, summary). Artifacts go to ``outdir``
    (default: ``output.dir`` of the manifest)."""
    outdir = Path(outdir if outdir is not None else m["output.dir"])
    outdir.mkdir(parents=True, exist_ok=True)
    atomic_write_text(outdir / "manifest.resolved", m.to_text(include_location=False))
    solved = None
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        try:
            solved = solve_stage(m)
        except ConvergenceError as exc:
            summary = _summary(m, solved, {}, EXIT_CONVERGENCE, str(exc))
            write_json(outdir / "summary.json", summary)
            return EXIT_CONVERGENCE, summary
        _write_fields(solved, outdir, m["output.snapshots"])
        try:
            checks = analysis_stage(m, solved, outdir)
        except ANALYSIS_ERRORS as exc:
            summary = _summary(m, solved, {}, EXIT_ANALYSIS, f"{type(exc).__name__}: {exc}")
            write_json(outdir / "summary.json", summary)
            return EXIT_ANALYSIS, summary
    summary = _summary(m, solved, checks, EXIT_OK)
    write_json(outdir / "summary.json", summary)
    return EXIT_OK, summary


class _StoredReport:
    """Read-only stand-in for a SolveReport loaded from ``report_XXX.json``."""

    def __init__(self, d):
        self._d = d
        self.diagnostics = d.get("diagnostics", {})
        self.contact_nodes = d.get("contact_nodes", 0)

    def to_dict(self, timing=False):
        return self._d


def report_dir(outdir) -> tuple[int, dict]:
    """Re-run the analysis stage on stored snapshots and rewrite the summary."""
    outdir = Path(outdir)
    path = outdir / "manifest.resolved"
    if not path.is_file():
        raise ManifestError(f"{path} not found")
    m = parse_manifest(path.read_text(), str(path))
    files = sorted(outdir.glob("field_*.csv"))
    if not files or not (outdir / "solve.json").is_file():
        raise ManifestError(f"no stored solve artifacts in {outdir}")
    stored = json.loads((outdir / "solve.json").read_text())
    fields = [read_field_csv(f) for f in files]
    reports = [_StoredReport(d) if d is not None else None for d in stored["solves"]]
    solved = Solved(fields, reports, stored["labels"], stored["extra"])
    try:
        checks = analysis_stage(m, solved, outdir)
    except ANALYSIS_ERRORS as exc:
        summary = _summary(m, solved, {}, EXIT_ANALYSIS, f"{type(exc).__name__}: {exc}")
        write_json(outdir / "summary.json", summary)
        return EXIT_ANALYSIS, summary
    summary = _summary(m, solved, checks, EXIT_OK)
    write_json(outdir / "summary.json", summary)
    return EXIT_OK, summary


def oracle_residual_study(alpha: float, beta: float, n: int, dim: int = 2,
                          exclusion: float = 0.25) -> dict:
    """Max residual of the sampled radial profile at ``n`` and ``2n - 1`` nodes.

    Two exclusions around the vertex are reported: nodes within two grid
    spacings (a grid-relative neighbourhood) and nodes within the fixed
    distance ``exclusion``.
    """
    from .grid import Grid
    from .params import ForcingSpec, ProblemParams

    f = radial_forcing(alpha, beta, 1.0, dim)
    params = ProblemParams(alpha, beta, VERTEX_EPS, min(f, 1 / f, 1.0), ForcingSpec.constant(f))
    g = params.gamma
    rows = []
    for nn in (n, 2 * n - 1):
        grid = Grid.box(dim, -1.0, 1.0, nn)
        r = np.sqrt(sum(x * x for x in grid.mesh()))
        res = residual_field(ScalarField(grid, r**g), params)
        interior = grid.interior_mask()
        near = interior & (r > 2 * grid.h * (1 + 1e-9))
        far = interior & (r >= exclusion)
        rows.append({"n": nn, "h": grid.h, "max_residual_2h": float(np.abs(res[near]).max()),
                     "max_residual_fixed": float(np.abs(res[far]).max())})
    return {
        "alpha": alpha, "beta": beta, "gamma": g, "exclusion": exclusion, "rows": rows,
        "ratio_2h": rows[0]["max_residual_2h"] / rows[1]["max_residual_2h"],
        "ratio_fixed": rows[0]["max_residual_fixed"] / rows[1]["max_residual_fixed"],
    }
