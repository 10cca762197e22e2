"""Run manifests: flat ``section.key = value`` text with typed, validated keys.

Blank lines and ``#`` comments are ignored. Lists are comma separated.
Every key has a schema entry; unknown, duplicated or malformed keys are
rejected with the line number where they occur.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from ._io import fmt
from .errors import ManifestError, ParameterError
from .grid import Grid
from .params import ForcingSpec, ProblemParams
from .solver import SolverOptions

REQUIRED = object()

MODES = ("single", "oracle", "continuation", "limit", "family")
BOUNDARIES = ("constant", "radial", "quadratic")
FORCINGS = ("constant", "hea", "radial")
CHECKS = ("residual", "data_match", "exponent", "dyadic", "distance", "nondegeneracy",
          "eta", "chain", "modulus", "doubling", "harnack")

# key -> (kind, default); kinds: float, int, str, bool, floats, strs, optfloat
SCHEMA = {
    "name": ("str", "unnamed"),
    "equation.alpha": ("float", REQUIRED),
    "equation.beta": ("float", REQUIRED),
    "equation.epsilon": ("float", 1e-3),
    "equation.c0": ("float", 1.0),
    "equation.forcing": ("str", "constant"),
    "equation.forcing_value": ("float", 1.0),
    "equation.hea_eps": ("float", 0.1),
    "grid.dim": ("int", 2),
    "grid.a": ("float", -1.0),
    "grid.b": ("float", 1.0),
    "grid.n": ("int", REQUIRED),
    "solve.mode": ("str", "single"),
    "solve.boundary": ("str", "constant"),
    "solve.boundary_value": ("float", 1.0),
    "solve.boundary_coeffs": ("floats", [0.0, 0.0, 0.0]),
    "solve.oracle_c": ("float", 1.0),
    "solve.levels": ("floats", []),
    "solve.nested": ("int", 0),
    "solve.eps_schedule": ("floats", []),
    "solve.targets": ("floats", []),
    "solve.bracket": ("floats", []),
    "solve.tol": ("optfloat", None),
    "solve.max_iters": ("int", 200_000),
    "solve.relax": ("float", 1.0),
    "solve.overrelax": ("float", 1.8),
    "solve.floor": ("float", 0.0),
    "analysis.checks": ("strs", []),
    "analysis.threshold": ("optfloat", None),
    "analysis.radii": ("floats", [0.25, 0.0625, 0.015625, 0.00390625]),
    "analysis.k_max": ("int", 4),
    "analysis.center_spacing": ("float", 0.03125),
    "analysis.max_centers": ("int", 12),
    "analysis.match_rel_tol": ("float", 0.05),
    "analysis.slope_tol": ("float", 0.10),
    "analysis.spread_max": ("float", 1.5),
    "analysis.distance_C": ("float", 4.0),
    "analysis.theta": ("optfloat", None),
    "analysis.eta0": ("float", 0.25),
    "analysis.t_bins": ("floats", []),
    "analysis.margin": ("float", 0.25),
    "analysis.band_factor": ("float", 3.0),
    "analysis.spearman_max": ("float", 0.5),
    "analysis.deltas": ("floats", [0.1, 0.01]),
    "analysis.doubling_d": ("optfloat", None),
    "analysis.harnack_radius": ("float", 0.25),
    "output.dir": ("str", "sel_lab_out"),
    "output.snapshots": ("bool", True),
}

# keys left out of the embedded copy in summaries: they locate, not define, a run
LOCATION_KEYS = ("output.dir",)


def _convert(kind, raw: str, key: str, line):
    raw = raw.strip()
    try:
        if kind == "float":
            return float(raw)
        if kind == "optfloat":
            return None if raw.lower() in ("", "none", "auto") else float(raw)
        if kind == "int":
            return int(raw)
        if kind == "bool":
            low = raw.lower()
            if low not in ("true", "false"):
                raise ValueError(raw)
            return low == "true"
        if kind == "floats":
            return [float(x) for x in raw.split(",") if x.strip()]
        if kind == "strs":
            return [x.strip() for x in raw.split(",") if x.strip()]
        return raw
    except ValueError:
        raise ManifestError(f"bad {kind} value {raw!r} for '{key}'", line) from None


def _render(kind, value) -> str:
    if value is None:
        return "none"
    if kind in ("float", "optfloat"):
        return fmt(value)
    if kind == "bool":
        return "true" if value else "false"
    if kind == "floats":
        return ", ".join(fmt(v) for v in value)
    if kind == "strs":
        return ", ".join(value)
    return str(value)


@dataclass
class RunManifest:
    """Resolved key/value map plus the source line of each explicit key."""

    values: dict
    lines: dict = field(default_factory=dict)
    source: str = "<string>"

    def __getitem__(self, key):
        return self.values[key]

    def line_of(self, key):
        return self.lines.get(key)

    def with_value(self, key: str, value) -> "RunManifest":
        if key not in SCHEMA:
            raise ManifestError(f"unknown key '{key}'")
        vals = dict(self.values)
        vals[key] = _convert(SCHEMA[key][0], value, key, None) if isinstance(value, str) else value
        out = RunManifest(vals, dict(self.lines), self.source)
        validate(out)
        return out

    def to_text(self, include_location: bool = True) -> str:
        keys = [k for k in SCHEMA if include_location or k not in LOCATION_KEYS]
        return "".join(f"{k} = {_render(SCHEMA[k][0], self.values[k])}\n" for k in keys)

    def to_dict(self, include_location: bool = False) -> dict:
        return {k: self.values[k] for k in SCHEMA if include_location or k not in LOCATION_KEYS}

    # typed views

    @property
    def gamma_target(self) -> float:
        return self.params().gamma

    def grid(self) -> Grid:
        v = self.values
        return Grid.box(v["grid.dim"], v["grid.a"], v["grid.b"], v["grid.n"])

    def forcing(self) -> ForcingSpec:
        v = self.values
        kind = v["equation.forcing"]
        if kind == "hea":
            return ForcingSpec.hea(v["equation.hea_eps"])
        if kind == "radial":
            return ForcingSpec.constant(radial_forcing(v["equation.alpha"], v["equation.beta"],
                                                      v["solve.oracle_c"], v["grid.dim"]))
        return ForcingSpec.constant(v["equation.forcing_value"])

    def params(self) -> ProblemParams:
        v = self.values
        return ProblemParams(v["equation.alpha"], v["equation.beta"], v["equation.epsilon"],
                             v["equation.c0"], self.forcing())

    def options(self) -> SolverOptions:
        v = self.values
        return SolverOptions(tol=v["solve.tol"], max_iters=v["solve.max_iters"],
                             relax=v["solve.relax"], overrelax=v["solve.overrelax"],
                             floor=v["solve.floor"])


def radial_forcing(alpha: float, beta: float, c: float, dim: int) -> float:
    """Constant forcing making ``c r**gamma`` an exact solution."""
    g = (2.0 + beta) / (1.0 + beta + alpha)
    return c ** (1 + alpha + beta) * g ** (1 + beta) * (g + dim - 2)


def parse_manifest(text: str, source: str = "<string>") -> RunManifest:
    values, lines = {}, {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ManifestError(f"expected 'key = value', got {raw.strip()!r}", lineno)
        key, val = (s.strip() for s in line.split("=", 1))
        if key not in SCHEMA:
            raise ManifestError(f"unknown key '{key}'", lineno)
        if key in values:
            raise ManifestError(f"duplicate key '{key}' (first set on line {lines[key]})", lineno)
        values[key] = _convert(SCHEMA[key][0], val, key, lineno)
        lines[key] = lineno
    for key, (_, default) in SCHEMA.items():
        if key not in values:
            if default is REQUIRED:
                raise ManifestError(f"missing required key '{key}'")
            values[key] = list(default) if isinstance(default, list) else default
    m = RunManifest(values, lines, source)
    validate(m)
    return m


def _anchor(m: RunManifest, *keys, message: str = ""):
    # prefer the key whose short name leads the error message
    named = [k for k in keys if message.startswith(k.split(".")[1])]
    for k in named + list(keys):
        if m.line_of(k) is not None:
            return m.line_of(k)
    return None


def validate(m: RunManifest) -> None:
    v = m.values
    choices = (("solve.mode", MODES), ("solve.boundary", BOUNDARIES),
               ("equation.forcing", FORCINGS))
    for key, allowed in choices:
        if v[key] not in allowed:
            raise ManifestError(f"'{key}' must be one of {', '.join(allowed)}; got {v[key]!r}",
                                m.line_of(key))
    for name in v["analysis.checks"]:
        if name not in CHECKS:
            raise ManifestError(f"unknown check {name!r}", m.line_of("analysis.checks"))
    try:
        m.params()
    except (ParameterError, ValueError) as exc:
        raise ManifestError(str(exc), _anchor(m, "equation.alpha", "equation.beta",
                                              "equation.epsilon", "equation.c0",
                                              message=str(exc))) from None
    try:
        m.grid()
    except (ParameterError, ValueError) as exc:
        raise ManifestError(str(exc), _anchor(m, "grid.n", "grid.dim", "grid.a", message=str(exc))) from None
    try:
        m.options()
    except (ParameterError, ValueError) as exc:
        raise ManifestError(str(exc), _anchor(m, "solve.tol", "solve.relax",
                                              "solve.overrelax", "solve.floor",
                                              message=str(exc))) from None
    if v["solve.nested"] < 0:
        raise ManifestError("solve.nested must be >= 0", m.line_of("solve.nested"))
    mode = v["solve.mode"]
    if mode == "continuation" and not v["solve.levels"]:
        raise ManifestError("continuation mode needs solve.levels", m.line_of("solve.mode"))
    if mode == "family" and (not v["solve.targets"] or len(v["solve.bracket"]) != 2):
        raise ManifestError("family mode needs solve.targets and a two-value solve.bracket",
                            m.line_of("solve.mode"))
    if mode == "oracle" and v["solve.boundary"] != "radial":
        raise ManifestError("oracle mode needs solve.boundary = radial", m.line_of("solve.mode"))
    if v["solve.boundary"] == "quadratic" and len(v["solve.boundary_coeffs"]) != 3:
        raise ManifestError("solve.boundary_coeffs needs three values",
                            m.line_of("solve.boundary_coeffs"))


def load_manifest(path) -> RunManifest:
    path = Path(path)
    return parse_manifest(path.read_text(), str(path))


def preset_names() -> list:
    root = resources.files("sel_lab") / "presets"
    return sorted(p.name[: -len(".manifest")] for p in root.iterdir()
                  if p.name.endswith(".manifest"))


def preset_text(name: str) -> str:
    res = resources.files("sel_lab") / "presets" / f"{name}.manifest"
    if not res.is_file():
        raise ManifestError(f"no preset named {name!r} (known: {', '.join(preset_names())})")
    return res.read_text()


def resolve(target: str) -> RunManifest:
    """A manifest path, or the name of a shipped preset."""
    path = Path(target)
    if path.is_file():
        return load_manifest(path)
    return parse_manifest(preset_text(target), f"preset:{target}")
