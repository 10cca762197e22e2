import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import radial_field
from sel_lab import Grid, ScalarField
from sel_lab.errors import EmptyZeroSetError
from sel_lab.freeboundary import (
    distance_bound_check,
    distance_to_zero_set,
    extract_positivity_set,
    free_boundary_centers,
    on_free_boundary,
    write_positivity_csv,
)


def ramp():
    g = Grid.box(1, 0, 1, 17)
    return ScalarField.from_function(g, lambda x: np.maximum(x - 0.5, 0.0))


def test_all_positive():
    g = Grid.box(2, 0, 1, 9)
    pset = extract_positivity_set(ScalarField(g, np.ones(g.shape)), 0.0)
    assert pset.positive.sum() == 49
    assert pset.boundary_nodes == [] and pset.zero_nodes == []


def test_ramp_classes():
    u = ramp()
    pset = extract_positivity_set(u, 0.0)
    x = u.grid.axis(0)
    pos = [i for (i,) in pset.positive_nodes]
    assert all(x[i] > 0.5 for i in pos)
    assert pset.boundary_nodes == [(9,)]  # first node past 0.5
    assert (8,) in pset.zero_nodes


def test_ramp_distance():
    pset = extract_positivity_set(ramp(), 0.0)
    assert distance_to_zero_set(pset, [0.75]) == pytest.approx(0.25, abs=1 / 16)
    assert distance_to_zero_set(pset, [0.25]) == 0.0


def test_single_zero_distance():
    g = Grid.box(1, -1, 1, 9)
    u = ScalarField.from_function(g, np.abs)
    pset = extract_positivity_set(u, 0.0)
    assert pset.zero_nodes == [(4,)]
    assert distance_to_zero_set(pset, [0.25]) == pytest.approx(0.25)
    # the isolated vertex counts as a free-boundary center
    assert on_free_boundary(pset, (4,))
    assert not on_free_boundary(pset, (7,))


def test_empty_zero_set():
    g = Grid.box(1, 0, 1, 9)
    pset = extract_positivity_set(ScalarField(g, np.ones(9)), 0.0)
    with pytest.raises(EmptyZeroSetError):
        distance_to_zero_set(pset, [0.5])
    with pytest.raises(EmptyZeroSetError):
        distance_bound_check(ScalarField(g, np.ones(9)), pset, 1.0, 1.0)


def test_negative_threshold_rejected():
    with pytest.raises(ValueError):
        extract_positivity_set(ramp(), -1.0)


@pytest.mark.parametrize("alpha, beta, c", [(1, 1, 2.0), (2, 0, 0.5), (0, 2, 1.0)])
def test_distance_bound_on_radial_profile(alpha, beta, c):
    g = Grid.box(2, -1, 1, 33)
    u = radial_field(g, alpha, beta, c)
    pset = extract_positivity_set(u, 0.0)
    gam = (2 + beta) / (1 + beta + alpha)
    rep = distance_bound_check(u, pset, gam, 10.0)
    # the zero set is the origin node, so u / dist**gamma is c at every node
    assert rep.worst_ratio == pytest.approx(c, rel=1e-12)
    assert rep.passed


def test_distance_bound_vacuous():
    g = Grid.box(2, 0, 1, 9)
    u = ScalarField(g, np.where(g.boundary_mask(), 1.0, 0.0))
    pset = extract_positivity_set(u, 0.0)
    rep = distance_bound_check(u, pset, 1.0, 1.0)
    assert rep.passed and rep.node is None


@given(st.floats(0.05, 0.5))
def test_centers_are_separated(sep):
    g = Grid.box(2, -1, 1, 41)
    u = ScalarField.from_function(g, lambda x, y: np.maximum(np.hypot(x, y) - 0.5, 0.0))
    pset = extract_positivity_set(u, 0.0)
    cs = free_boundary_centers(pset, sep)
    pts = np.array([g.coords(c) for c in cs])
    assert len(cs) >= 1
    d = np.linalg.norm(pts[:, None] - pts[None], axis=-1) + np.eye(len(cs)) * 1e9
    assert d.min() >= sep - 1e-9
    assert all(pset.boundary[c] for c in cs)


@given(st.floats(0.0, 0.5))
def test_positive_nodes_shrink_as_threshold_grows(t):
    g = Grid.box(2, -1, 1, 21)
    u = ScalarField.from_function(g, lambda x, y: x * x + y * y)
    low, high = extract_positivity_set(u, t / 2), extract_positivity_set(u, t)
    assert np.all(low.positive[high.positive])
    assert np.array_equal(high.positive | high.zero, g.interior_mask())


def test_positivity_csv(tmp_path):
    pset = extract_positivity_set(ramp(), 0.0)
    path = write_positivity_csv(pset, tmp_path / "p.csv")
    lines = path.read_text().splitlines()
    assert lines[0] == "x,class" and len(lines) == 16
    assert "fb" in lines[9]
