import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import radial_params
from sel_lab import ForcingSpec, Grid, ProblemParams, ScalarField, SolverOptions, solve_dirichlet
from sel_lab.errors import ConvergenceError, ParameterError, ZoomError
from sel_lab.freeboundary import extract_positivity_set
from sel_lab.grid import residual_field
from sel_lab.solver import (
    complementarity_residual,
    continuation_in_boundary,
    default_eps_schedule,
    inf_level_family,
    limit_in_epsilon,
    nested_continuation,
    normalize_rhs,
    rescale,
)


def test_options_validation():
    for kw in (dict(tol=0.0), dict(relax=0.0), dict(relax=1.5), dict(overrelax=2.0),
               dict(overrelax=0.5), dict(floor=-1.0), dict(max_iters=0)):
        with pytest.raises(ParameterError):
            SolverOptions(**kw)
    p = ProblemParams(0, 0, 0.1, 0.5, ForcingSpec.constant(2.0))
    assert SolverOptions().resolved_tol(p) == pytest.approx(2e-8)
    assert SolverOptions(tol=1e-3).resolved_tol(p) == 1e-3


def test_poisson_1d_matches_quadratic():
    grid = Grid.box(1, 0.0, 1.0, 65)
    p = ProblemParams(0, 0, 0.005, 0.5, ForcingSpec.constant(2.0))
    u, rep = solve_dirichlet(grid, p, lambda x: x**2 + 0.01)
    x = grid.axis(0)
    # the three-point stencil is exact on quadratics, so only the iteration error remains
    assert np.abs(u.values - (x**2 + 0.01)).max() < rep.diagnostics["tol"]
    assert rep.converged and rep.final_residual <= rep.diagnostics["tol"]


def test_boundary_values_exact_and_residual_reported():
    grid = Grid.box(2, -1, 1, 33)
    p = ProblemParams(0.5, 1, 0.01, 1.0, ForcingSpec.constant(1.0))
    bd = lambda x, y: 1 + 0.25 * x + 0.5 * y * y  # noqa: E731
    u, rep = solve_dirichlet(grid, p, bd)
    exact_bd = bd(*grid.mesh())
    edge = grid.boundary_mask()
    assert np.array_equal(u.values[edge], exact_bd[edge])
    res = residual_field(u, p)
    worst, _ = complementarity_residual(res, u.values, 0.0, grid.interior_mask())
    assert worst == pytest.approx(rep.final_residual, rel=1e-12)
    assert np.abs(res[grid.interior_mask()]).max() <= rep.diagnostics["tol"]


@settings(max_examples=12)
@given(st.sampled_from([(0.0, 0.0), (1.0, 1.0), (0.5, 2.0), (2.0, 0.0), (-0.5, 1.0)]),
       st.floats(0.3, 1.0), st.floats(0.5, 2.0))
def test_discrete_maximum_principle(pair, c0, level):
    alpha, beta = pair
    grid = Grid.box(2, 0, 1, 17)
    p = ProblemParams(alpha, beta, 0.05, c0, ForcingSpec.constant(c0))
    u, rep = solve_dirichlet(grid, p, level)
    assert u.values.max() <= level + 1e-12
    assert rep.max_principle_ok
    assert u.values.min() >= 0.0


def test_floor_is_respected():
    grid = Grid.box(2, 0, 1, 17)
    p = ProblemParams(0, 0, 0.01, 1.0, ForcingSpec.constant(1.0))
    u, rep = solve_dirichlet(grid, p, 0.05, SolverOptions(floor=0.02))
    assert u.values.min() >= 0.02
    assert rep.contact_nodes > 0


def test_nonconvergence_attaches_field_and_report():
    # for alpha = beta = 0 the Poisson cold start is already exact; use a nonlinear case
    grid = Grid.box(2, 0, 1, 33)
    p = ProblemParams(1, 1, 0.01, 1.0, ForcingSpec.constant(1.0))
    with pytest.raises(ConvergenceError) as info:
        solve_dirichlet(grid, p, 1.0, SolverOptions(max_iters=2, check_every=1))
    assert info.value.report.iterations == 2
    assert info.value.field is not None and not info.value.report.converged


def test_rejects_negative_boundary_and_unregularized_zero_data():
    grid = Grid.box(1, 0, 1, 9)
    p = ProblemParams(1, 0, 0.0, 1.0, ForcingSpec.constant(1.0))
    with pytest.raises(ParameterError):
        solve_dirichlet(grid, p, -1.0)
    with pytest.raises(ParameterError):
        solve_dirichlet(grid, p, 0.0)


def test_hea_forcing_solve_converges():
    grid = Grid.box(2, -1, 1, 33)
    p = ProblemParams(0, 1, 0.01, 1.0, ForcingSpec.hea(0.5))
    u, rep = solve_dirichlet(grid, p, 0.3)
    assert rep.converged
    assert residual_field(u, p)[grid.interior_mask()].__abs__().max() <= rep.diagnostics["tol"]


def test_warm_start_reaches_same_solution():
    grid = Grid.box(2, -1, 1, 33)
    p = ProblemParams(0.5, 1, 0.01, 1.0, ForcingSpec.constant(1.0))
    u, _ = solve_dirichlet(grid, p, 1.0)
    v, rep = solve_dirichlet(grid, p, 1.0, initial=np.full(grid.shape, 0.7))
    assert np.abs(u.values - v.values).max() < 1e-6


class TestContinuation:
    def test_levels_are_ordered(self):
        grid = Grid.box(2, -1, 1, 33)
        p = ProblemParams(1, 1, 0.01, 1.0, ForcingSpec.constant(1.0))
        chain = continuation_in_boundary(grid, p, [1.0, 0.5])
        hi, lo = chain[0][0], chain[1][0]
        tol = chain[0][1].diagnostics["tol"]
        assert np.all(lo.values <= hi.values + tol)

    def test_single_level_equals_solve(self):
        grid = Grid.box(2, -1, 1, 17)
        p = ProblemParams(0, 1, 0.01, 1.0, ForcingSpec.constant(1.0))
        (u, _), = continuation_in_boundary(grid, p, [0.8])
        v, _ = solve_dirichlet(grid, p, 0.8)
        assert np.array_equal(u.values, v.values)

    def test_free_boundary_appears(self):
        grid = Grid.box(2, -1, 1, 33)
        eps = 1e-3
        p = ProblemParams(0, 0, eps, 1.0, ForcingSpec.constant(1.0))
        chain = continuation_in_boundary(grid, p, [1.0, 0.5, 0.2, 0.1])
        u, rep = chain[-1]
        assert rep.inf_attained < eps
        pset = extract_positivity_set(u, eps)
        assert pset.zero.any() and pset.boundary.any()
        assert (u.values > eps).sum() < u.values.size

    @pytest.mark.parametrize("levels", [[], [0.5, 1.0], [1.0, 1.0], [1.0, -0.1]])
    def test_rejects_bad_levels(self, levels):
        grid = Grid.box(1, 0, 1, 9)
        p = ProblemParams(0, 0, 0.01, 1.0, ForcingSpec.constant(1.0))
        with pytest.raises(ParameterError):
            continuation_in_boundary(grid, p, levels)


    def test_nested_matches_plain_chain_for_unique_problem(self):
        # alpha = 0 is proper, so both starts must reach the same discrete solution
        grid = Grid.box(2, -1, 1, 33)
        p = ProblemParams(0, 1, 0.01, 1.0, ForcingSpec.constant(1.0))
        plain = continuation_in_boundary(grid, p, [1.0, 0.5])
        nested = nested_continuation(grid, p, [1.0, 0.5], depth=2)
        for (u, _), (v, rep) in zip(plain, nested):
            assert np.abs(u.values - v.values).max() <= 1e-6
            assert rep.converged and v.grid.n == 33

    def test_starts_must_match_levels(self):
        grid = Grid.box(1, 0, 1, 9)
        p = ProblemParams(0, 0, 0.01, 1.0, ForcingSpec.constant(1.0))
        with pytest.raises(ParameterError):
            continuation_in_boundary(grid, p, [1.0, 0.5], starts=[np.ones(9)])


class TestLimitInEpsilon:
    def test_default_schedule(self):
        s = default_eps_schedule(0.8)
        assert s[0] == pytest.approx(0.2) and len(s) == 7
        assert all(b == pytest.approx(a / 2) for a, b in zip(s, s[1:]))

    def test_inactive_cutoff_gives_zero_gaps(self):
        grid = Grid.box(2, 0, 1, 17)
        p = ProblemParams(0, 0, 0.1, 1.0, ForcingSpec.constant(1.0))
        lim = limit_in_epsilon(grid, p, [0.1, 0.05, 0.025], lambda x, y: 2 + x * y)
        assert all(g == 0.0 for _, g in lim.history)
        assert lim.cauchy_gap == lim.history[-1][1]

    def test_single_entry_schedule(self):
        grid = Grid.box(1, 0, 1, 17)
        p = ProblemParams(1, 0, 0.1, 1.0, ForcingSpec.constant(1.0))
        lim = limit_in_epsilon(grid, p, [0.1], 1.0)
        assert lim.history == [] and math.isnan(lim.cauchy_gap)
        v, _ = solve_dirichlet(grid, p, 1.0)
        assert np.array_equal(lim.field.values, v.values)

    def test_radial_data_gaps_shrink(self):
        grid = Grid.box(2, -1, 1, 33)
        p = radial_params(0.5, 1.0, eps=0.1)
        g = p.gamma
        sched = [0.1 * 0.5**k for k in range(7)]
        lim = limit_in_epsilon(grid, p, sched, lambda x, y: np.hypot(x, y) ** g)
        gaps = [gap for _, gap in lim.history]
        assert len(gaps) == len(lim.history) and gaps
        assert lim.cauchy_gap <= gaps[0] / 4

    def test_rejects_bad_schedule(self):
        grid = Grid.box(1, 0, 1, 9)
        p = ProblemParams(0, 0, 0.01, 1.0, ForcingSpec.constant(1.0))
        with pytest.raises(ParameterError):
            limit_in_epsilon(grid, p, [0.1, 0.2], 1.0)


class TestRescaling:
    def test_normalize_rhs_examples(self):
        grid = Grid.box(2, -1, 1, 65)
        u = ScalarField(grid, np.ones(grid.shape))
        p = ProblemParams(1, 1, 0.0, 1.0, ForcingSpec.constant(1.0))
        v, q = normalize_rhs(u, p, 0.25)
        # rho = 0.25 so the window spans 0.25 in original units, [-1, 1] after zoom
        assert v.grid.extent[0] == pytest.approx((-1.0, 1.0))
        assert q.forcing.sup_norm() == pytest.approx(0.25**3, rel=1e-12)
        eta = 0.5
        f = eta**3
        p2 = ProblemParams(1, 1, 0.0, f, ForcingSpec.constant(f))
        _, q2 = normalize_rhs(ScalarField(grid, np.ones(grid.shape)), p2, eta)
        assert q2.forcing.sup_norm() == pytest.approx(f, rel=1e-12)

    def test_normalize_rhs_window_must_fit(self):
        grid = Grid.box(2, -1, 1, 33)
        p = ProblemParams(1, 1, 0.0, 1.0, ForcingSpec.constant(1.0))
        with pytest.raises(ZoomError):
            normalize_rhs(ScalarField(grid, np.ones(grid.shape)), p, 0.25, center=[0.9, 0.0])

    @pytest.mark.parametrize("rho", [0.5, 0.25])
    def test_rescaled_solution_solves_rescaled_problem(self, rho):
        grid = Grid.box(2, -1, 1, 65)
        p = ProblemParams(0.5, 1.0, 0.01, 1.0, ForcingSpec.constant(1.0))
        u, rep = solve_dirichlet(grid, p, lambda x, y: 1 + 0.25 * x + 0.5 * y * y)
        v, pv = rescale(u, p, rho)
        assert pv.epsilon == pytest.approx(0.01 * rho ** (-p.gamma))
        assert v.grid.extent[0] == pytest.approx((-1.0, 1.0))
        w, _ = solve_dirichlet(v.grid, pv, lambda x, y: v.values)
        assert np.abs(w.values - v.values).max() <= 10 * rep.diagnostics["tol"]


def test_inf_level_family_hits_targets():
    grid = Grid.box(2, -1, 1, 33)
    p = ProblemParams(1, 1, 0.5, 1.0, ForcingSpec.constant(1.0))
    fam = inf_level_family(grid, p, [0.1, 0.01], (0.8, 1.0))
    for (level, u, rep), t in zip(fam, [0.1, 0.01]):
        assert abs(math.log10(rep.inf_attained / t)) <= 0.05
        assert rep.diagnostics["boundary_level"] == level
    assert fam[0][0] > fam[1][0]


def test_inf_level_family_needs_bracket():
    grid = Grid.box(2, -1, 1, 17)
    p = ProblemParams(1, 1, 0.5, 1.0, ForcingSpec.constant(1.0))
    with pytest.raises(ParameterError):
        inf_level_family(grid, p, [5.0], (0.8, 1.0))
