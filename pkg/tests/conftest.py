import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from sel_lab import ForcingSpec, Grid, ProblemParams, ScalarField, gamma
from sel_lab.manifest import radial_forcing

settings.register_profile("default", max_examples=60, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.register_profile("ci", max_examples=200, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

PAIRS = [(1.0, 1.0), (2.0, 0.0), (0.5, 1.0), (0.0, 2.0)]


def radial_params(alpha, beta, c=1.0, dim=2, eps=0.0):
    f = radial_forcing(alpha, beta, c, dim)
    return ProblemParams(alpha, beta, eps, min(f, 1.0 / f, 1.0), ForcingSpec.constant(f))


def radial_field(grid, alpha, beta, c=1.0):
    g = gamma(alpha, beta)
    r = np.sqrt(sum(x * x for x in grid.mesh()))
    return ScalarField(grid, c * r**g)


@pytest.fixture
def unit_1d():
    return Grid.box(1, 0.0, 1.0, 5)


# one verdict line per acceptance criterion, printed after the run
ACCEPTANCE_LINES: dict = {}


def record_criterion(key: str, passed: bool, detail: str) -> None:
    prev = ACCEPTANCE_LINES.get(key)
    ok = passed and (prev is None or prev[0])
    text = detail if prev is None else f"{prev[1]}; {detail}"
    ACCEPTANCE_LINES[key] = (ok, text)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE_LINES, key=lambda k: int(k[1:])):
        ok, text = ACCEPTANCE_LINES[key]
        terminalreporter.write_line(f"{key} {'PASS' if ok else 'FAIL'}: {text}")
