import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import PAIRS, radial_field, radial_params
from sel_lab import ForcingSpec, Grid, ProblemParams, ScalarField, gamma
from sel_lab.analysis import (
    doubling_ladder_search,
    doubling_probe,
    dyadic_growth_table,
    eta_sweep,
    flatness_check,
    growth_exponent,
    harnack_quotient,
    holder_seminorm,
    modulus_estimate,
    modulus_from_omega,
    nondegeneracy_check,
    omega,
)
from sel_lab.errors import (
    EmptySubdomainError,
    NonMonotoneInputError,
    NonPositiveValueError,
    NotNormalizedError,
    NotOnFreeBoundaryError,
    TooFewRadiiError,
    UnderResolvedError,
)
from sel_lab.freeboundary import extract_positivity_set

DYADIC = [0.25, 0.125, 0.0625, 0.03125]


@pytest.fixture(scope="module")
def fine_grid():
    return Grid.box(2, -1, 1, 129)


class TestGrowthExponent:
    @pytest.mark.parametrize("alpha, beta", PAIRS)
    def test_radial_profile(self, fine_grid, alpha, beta):
        u = radial_field(fine_grid, alpha, beta)
        fit = growth_exponent(u, extract_positivity_set(u), (64, 64), DYADIC, gamma(alpha, beta))
        assert fit.slope == pytest.approx(gamma(alpha, beta), abs=0.02)
        assert fit.max_abs_residual < 1e-9

    @given(st.floats(0.1, 10.0), st.floats(0.0, 3.0))
    @settings(max_examples=20)
    def test_cone_slope_is_one(self, C, beta):
        g = Grid.box(2, -1, 1, 65)
        u = ScalarField.from_function(g, lambda x, y: C * np.hypot(x, y))
        fit = growth_exponent(u, extract_positivity_set(u), (32, 32), DYADIC, gamma(1, beta))
        assert fit.slope == pytest.approx(1.0, abs=0.02)

    def test_center_must_be_on_free_boundary(self, fine_grid):
        u = ScalarField(fine_grid, np.ones(fine_grid.shape))
        with pytest.raises(NotOnFreeBoundaryError):
            growth_exponent(u, extract_positivity_set(u), (64, 64), DYADIC)

    def test_needs_three_resolved_radii(self):
        g = Grid.box(2, -1, 1, 17)  # h = 1/8
        u = radial_field(g, 1, 1)
        with pytest.raises(TooFewRadiiError):
            growth_exponent(u, extract_positivity_set(u), (8, 8), DYADIC)

    def test_point_center(self, fine_grid):
        u = radial_field(fine_grid, 0.5, 1.0)
        fit = growth_exponent(u, extract_positivity_set(u), [0.0, 0.0], DYADIC)
        assert fit.center == (0.0, 0.0)


class TestDyadic:
    @pytest.mark.parametrize("c", [0.5, 2.0])
    def test_radial_ratios_constant(self, c):
        g = Grid.box(2, -0.25, 0.25, 129)  # h = 1/256 so 4^-3 = 4h is resolved
        u = radial_field(g, 2.0, 0.0, c)
        tab = dyadic_growth_table(u, (64, 64), 3, 2 / 3)
        assert np.allclose(tab.ratios, c, rtol=1e-12)
        assert tab.spread == pytest.approx(1.0) and tab.passes(c * (1 + 1e-9))

    def test_single_row(self, fine_grid):
        tab = dyadic_growth_table(radial_field(fine_grid, 1, 1), (64, 64), 1, 1.0)
        assert len(tab.rows) == 1 and tab.passes()

    def test_under_resolved(self, fine_grid):
        with pytest.raises(UnderResolvedError):
            dyadic_growth_table(radial_field(fine_grid, 1, 1), (64, 64), 4, 1.0)

    def test_csv(self, fine_grid, tmp_path):
        tab = dyadic_growth_table(radial_field(fine_grid, 1, 1), (64, 64), 2, 1.0)
        text = tab.write_csv(tmp_path / "d.csv").read_text().splitlines()
        assert text[0] == "k,sup,ratio" and len(text) == 3


class TestNondegeneracy:
    def test_radial(self, fine_grid):
        u = radial_field(fine_grid, 0.5, 1.0, 1.5)
        rep = nondegeneracy_check(u, (64, 64), DYADIC, gamma(0.5, 1.0))
        assert rep.min_ratio == pytest.approx(1.5, rel=1e-12) and rep.passed

    def test_zero_field_fails(self, fine_grid):
        rep = nondegeneracy_check(ScalarField(fine_grid, np.zeros(fine_grid.shape)), (64, 64),
                                  DYADIC, 1.0)
        assert rep.min_ratio == 0 and not rep.passed


class TestModulus:
    def test_linear_1d_exact(self):
        g = Grid.box(1, 0, 1, 65)
        u = ScalarField.from_function(g, lambda x: x)
        bins = np.array([1, 2, 4, 8, 16]) * g.h
        curve = modulus_estimate(u, bins, margin=g.h)
        assert np.allclose(curve.modulus, bins, rtol=1e-12)

    def test_constant(self):
        g = Grid.box(2, 0, 1, 33)
        curve = modulus_estimate(ScalarField(g, np.full(g.shape, 4.0)), [0.1, 0.2, 0.3], 0.1)
        assert np.all(curve.modulus == 0)

    def test_plane_2d(self):
        # for a plane the modulus at t is |grad| times the longest lattice offset <= t
        g = Grid.box(2, -1, 1, 65)
        u = ScalarField.from_function(g, lambda x, y: 0.5 * x)
        curve = modulus_estimate(u, [0.125, 0.25, 0.5], margin=0.25)
        assert np.allclose(curve.modulus, [0.0625, 0.125, 0.25], rtol=1e-12)

    def test_deterministic(self, fine_grid):
        u = radial_field(fine_grid, 1, 1)
        a = modulus_estimate(u, [0.05, 0.1, 0.2], 0.25)
        b = modulus_estimate(u, [0.05, 0.1, 0.2], 0.25)
        assert np.array_equal(a.modulus, b.modulus)
        assert np.all(np.diff(a.modulus) >= 0)

    def test_bad_inputs(self):
        g = Grid.box(2, 0, 1, 9)
        u = ScalarField(g, np.zeros(g.shape))
        with pytest.raises(ValueError):
            modulus_estimate(u, [0.2, 0.1, 0.3], 0.1)
        with pytest.raises(EmptySubdomainError):
            modulus_estimate(u, [0.1, 0.2, 0.3], 0.6)


class TestModulusFromOmega:
    d = np.geomspace(1e-3, 1.0, 13)

    @pytest.mark.parametrize("M", [1, 2, 0.5])
    def test_power_law(self, M):
        varpi = modulus_from_omega(self.d, self.d ** (-M))
        t = np.geomspace(varpi.t[0], varpi.t[-1], 50)
        assert np.allclose(varpi(t), t ** (1 / (M + 1)), rtol=1e-12)

    def test_constant_omega_is_lipschitz(self):
        K = 3.0
        varpi = modulus_from_omega(self.d, np.full_like(self.d, K))
        t = np.geomspace(varpi.t[0], varpi.t[-1], 20)
        assert np.allclose(varpi(t), K * t, rtol=1e-12)

    def test_conventions(self):
        varpi = modulus_from_omega(self.d, self.d**-1.0)
        assert varpi(0.0) == 0.0
        assert math.isnan(varpi(10 * varpi.t[-1]))

    def test_rejects_increasing(self):
        with pytest.raises(NonMonotoneInputError):
            modulus_from_omega([0.1, 0.2], [1.0, 2.0])

    @given(st.floats(0.1, 5.0), st.floats(0.01, 0.99))
    def test_power_law_property(self, M, s):
        varpi = modulus_from_omega(self.d, self.d ** (-M))
        t = varpi.t[0] ** (1 - s) * varpi.t[-1] ** s
        assert varpi(t) == pytest.approx(t ** (1 / (M + 1)), rel=1e-10)


class TestDoubling:
    def test_omega_shape(self):
        z = np.linspace(0, 1, 101)
        w = omega(z, 1.0)
        assert np.all(w >= 0.9 * z - 1e-15) and omega(2.0, 1.0) == pytest.approx(0.9)

    def test_constant_field(self):
        g = Grid.box(2, -1, 1, 17)
        res = doubling_probe(ScalarField(g, np.full(g.shape, 2.0)), 1.0, 1.0, kappa=0.0)
        assert res.sup_value <= 0.0 and res.passed

    def test_linear_field(self):
        # diameter 1 = d keeps every pair inside the range where omega >= 0.9 zeta
        g = Grid.box(1, 0, 1, 65)
        u = ScalarField.from_function(g, lambda x: x)
        for L in (2.0, 4.0):
            assert doubling_probe(u, 1.0, L, kappa=0.0).sup_value <= 0.0

    @settings(max_examples=15)
    @given(st.floats(0.5, 8.0))
    def test_monotone_in_L(self, L):
        g = Grid.box(2, -1, 1, 17)
        u = radial_field(g, 1, 1)
        assert doubling_probe(u, 1.0, 2 * L).sup_value <= doubling_probe(u, 1.0, L).sup_value

    def test_ladder_finds_common_pair(self):
        g = Grid.box(2, -1, 1, 17)
        fields = [radial_field(g, 1, 1, c) for c in (0.5, 1.0)]
        res = doubling_ladder_search(fields, 1.0, 0.01)
        assert res["common"] is not None
        L, z = res["common"]
        for f in fields:
            assert doubling_probe(f, 1.0, L, zoom=z, delta=0.01).passed


class TestFlatness:
    def test_vacuous(self):
        g = Grid.box(2, -1, 1, 33)
        v = ScalarField(g, np.full(g.shape, 0.9))
        p = ProblemParams(1, 1, 0.0, 0.001, ForcingSpec.constant(0.001))
        assert flatness_check(v, p, 0.01, 0.5)

    def test_radial_zoom(self):
        g = Grid.box(2, -1, 1, 65)
        c = 2 ** -0.5  # keeps |v| <= 1 on the square
        v = radial_field(g, 1, 1, c)
        p = radial_params(1, 1, c)
        assert flatness_check(v, p, 4.0**-1, 1.0)

    def test_not_normalized(self):
        g = Grid.box(2, -1, 1, 33)
        p = ProblemParams(1, 1, 0.0, 0.5, ForcingSpec.constant(1.0))
        with pytest.raises(NotNormalizedError):
            flatness_check(ScalarField(g, np.full(g.shape, 2.0)), p, 0.25, 0.5)
        with pytest.raises(NotNormalizedError):
            flatness_check(ScalarField(g, np.full(g.shape, 0.5)), p, 0.25, 0.5)

    def test_eta_sweep_on_radial_profile(self):
        g = Grid.box(2, -1, 1, 129)
        u = radial_field(g, 1, 1)
        p = radial_params(1, 1)
        res = eta_sweep(u, p, [(64, 64)])
        assert res.eta_star is not None and res.theta == pytest.approx(0.25)
        assert all(e["holds"] for e in res.records[-1]["centers"])


class TestHarnackHolder:
    def test_harnack(self):
        g = Grid.box(1, -1, 1, 33)
        assert harnack_quotient(ScalarField(g, np.full(33, 2.0)), [0.0], 0.25) == 1.0
        u = ScalarField.from_function(g, lambda x: 1 + x)
        assert harnack_quotient(u, [0.0], 0.25) == pytest.approx(5 / 3)
        with pytest.raises(NonPositiveValueError):
            harnack_quotient(ScalarField.from_function(g, lambda x: x), [0.0], 0.25)

    def test_holder(self):
        g = Grid.box(1, 0, 1, 33)
        assert holder_seminorm(ScalarField.from_function(g, lambda x: x), [0.5], 0.25, 1.0) \
            == pytest.approx(1.0)
        assert holder_seminorm(ScalarField(g, np.ones(33)), [0.5], 0.25, 0.5) == 0.0
        with pytest.raises(UnderResolvedError):
            holder_seminorm(ScalarField(g, np.ones(33)), [0.5], 0.05, 0.5)

    @settings(max_examples=15)
    @given(st.floats(0.1, 0.9))
    def test_sqrt_holder_bounded(self, e):
        g = Grid.box(1, 0, 1, 65)
        u = ScalarField.from_function(g, np.sqrt)
        assert holder_seminorm(u, [0.5], 0.5, 0.5) <= 1.0 + 1e-12
