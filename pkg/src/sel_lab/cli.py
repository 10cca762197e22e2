"""Command-line entry point.

    sel-lab run <manifest-or-preset> [--out DIR]
    sel-lab sweep <manifest-or-preset> --axis KEY --values V1,V2,... [--out DIR]
    sel-lab report <dir>
    sel-lab oracle-check <alpha> <beta> <n>
    sel-lab presets

Exit codes: 0 success (summary written), 2 manifest error, 3 solver
non-convergence, 4 analysis precondition failure.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from ._io import dumps_json, write_json
from .errors import ManifestError
from .manifest import SCHEMA, preset_names, resolve
from .runner import EXIT_MANIFEST, oracle_residual_study, report_dir, run_manifest

log = logging.getLogger("sel_lab")

NUMERIC_KINDS = ("float", "int", "optfloat")


def thread_cap() -> int:
    raw = os.environ.get("SEL_LAB_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def _print_summary(status, summary):
    checks = summary.get("checks", {})
    for name, res in checks.items():
        verdict = {True: "pass", False: "FAIL", None: "info"}[res.get("passed")]
        print(f"  {name:<14} {verdict}")
    if summary.get("error"):
        print(f"  error: {summary['error']}", file=sys.stderr)
    print(f"exit status {status}")


def cmd_run(args) -> int:
    m = resolve(args.manifest)
    status, summary = run_manifest(m, args.out)
    _print_summary(status, summary)
    return status


def _sweep_one(job):
    text, key, value, out = job
    from .manifest import parse_manifest
    try:
        m = parse_manifest(text).with_value(key, value)
    except ManifestError as exc:
        return value, EXIT_MANIFEST, {"error": str(exc)}
    status, summary = run_manifest(m, out)
    return value, status, summary


def cmd_sweep(args) -> int:
    base = resolve(args.manifest)
    if args.axis not in SCHEMA or SCHEMA[args.axis][0] not in NUMERIC_KINDS:
        raise ManifestError(f"sweep axis '{args.axis}' is not a numeric manifest key")
    values = [v.strip() for v in args.values.split(",") if v.strip()]
    if not values:
        raise ManifestError("sweep needs at least one value")
    root = Path(args.out or base["output.dir"])
    text = base.to_text()
    jobs = [(text, args.axis, v, root / f"{args.axis}={v}") for v in values]
    workers = min(thread_cap(), len(jobs))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_sweep_one, jobs))
    else:
        results = [_sweep_one(j) for j in jobs]
    merged = {"axis": args.axis, "runs": {}}
    for value, status, summary in results:
        merged["runs"][value] = {"exit_status": status, "error": summary.get("error"),
                                 "checks": summary.get("checks", {}),
                                 "gamma": _gamma_of(summary),
                                 "slope": _slope_of(summary),
                                 "free_boundary": _free_boundary_of(summary)}
    write_json(root / "sweep_summary.json", merged)
    for value, status, _ in results:
        print(f"{args.axis}={value}: exit status {status}")
    return max(status for _, status, _ in results)


def _gamma_of(summary):
    man = summary.get("manifest")
    if not man:
        return None
    a, b = man["equation.alpha"], man["equation.beta"]
    return (2 + b) / (1 + b + a)


def _slope_of(summary):
    exp = summary.get("checks", {}).get("exponent")
    return exp.get("median_slope") if exp else None


def _free_boundary_of(summary):
    # a node at or below the cutoff level marks a dead core
    man, solves = summary.get("manifest"), summary.get("solves") or []
    infs = [s["inf_attained"] for s in solves if s]
    if not man or not infs:
        return None
    return min(infs) <= man["equation.epsilon"]


def cmd_report(args) -> int:
    status, summary = report_dir(args.dir)
    _print_summary(status, summary)
    return status


def cmd_oracle_check(args) -> int:
    study = oracle_residual_study(args.alpha, args.beta, args.n)
    sys.stdout.write(dumps_json(study))
    return 0


def cmd_presets(args) -> int:
    for name in preset_names():
        print(name)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="sel-lab", description=__doc__.split("\n\n")[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run a manifest file or shipped preset")
    r.add_argument("manifest")
    r.add_argument("--out", help="artifact directory (default: output.dir)")
    r.set_defaults(func=cmd_run)

    s = sub.add_parser("sweep", help="run a manifest once per value of one key")
    s.add_argument("manifest")
    s.add_argument("--axis", required=True)
    s.add_argument("--values", required=True, help="comma-separated values")
    s.add_argument("--out")
    s.set_defaults(func=cmd_sweep)

    rp = sub.add_parser("report", help="regenerate summary.json from stored artifacts")
    rp.add_argument("dir")
    rp.set_defaults(func=cmd_report)

    o = sub.add_parser("oracle-check", help="residual decay of the radial profile")
    o.add_argument("alpha", type=float)
    o.add_argument("beta", type=float)
    o.add_argument("n", type=int)
    o.set_defaults(func=cmd_oracle_check)

    ps = sub.add_parser("presets", help="list shipped presets")
    ps.set_defaults(func=cmd_presets)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ManifestError as exc:
        print(f"manifest error: {exc}", file=sys.stderr)
        return EXIT_MANIFEST


if __name__ == "__main__":
    sys.exit(main())
