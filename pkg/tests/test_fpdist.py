import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import trapezoid

from povdyn.exceptions import DomainError, NormalizationError, SchemeError, StepSizeError
from povdyn.fpdist import (PAPER_STEADY_STATE, FokkerPlanckOperator, GridFunction,
                           SteadyCDF, SteadyStateParams, default_grid, eigen_exponents, eigenmode,
                           evolve_pdf, local_log_slope, log_grid, mean_income, mode_sum,
                           normalisation_constant, sample_steady, steady_cdf, steady_grid_function,
                           steady_mode_weight, steady_pdf, steady_quantile, tail_slope,
                           truncation_mass)

P = PAPER_STEADY_STATE
# 30-digit mpmath quadrature of the closed form
NORMALISER = 143575.42531442097
MEAN = 79.31287535886184
CDF_GOLDEN = {31.0: 0.020959589559192564, 50.0: 0.38749107600574636,
              100.0: 0.8051071973631004, 1000.0: 0.9991663130147882}
MEDIAN = 57.94948273785196


def engel_cd(y, t=0.0):
    return P.V0 * P.K0 / (P.K0 + y)


def test_normalisation_constant():
    assert normalisation_constant(P) == pytest.approx(NORMALISER, rel=1e-9)


def test_pdf_integrates_to_one():
    u = np.linspace(0, 1 / P.y0, 400_001)[1:]
    mass = trapezoid(np.append(0.0, steady_pdf(1 / u, P) / u ** 2), np.append(0.0, u))
    assert mass == pytest.approx(1.0, abs=1e-8)


def test_mean_income():
    assert mean_income(P) == pytest.approx(MEAN, rel=1e-9)


@pytest.mark.parametrize("y,expected", sorted(CDF_GOLDEN.items()))
def test_cdf_golden(y, expected):
    assert steady_cdf(y, P) == pytest.approx(expected, rel=1e-9)


def test_cdf_vector_and_order_independent():
    ys = np.array([100.0, 31.0, 1000.0, 50.0])
    np.testing.assert_allclose(steady_cdf(ys, P), [CDF_GOLDEN[y] for y in ys], rtol=1e-9)


def test_median_by_bisection():
    # independent bisection on the cdf
    lo, hi = 30.0, 200.0
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        lo, hi = (mid, hi) if steady_cdf(mid, P) < 0.5 else (lo, mid)
    assert steady_quantile(0.5, P) == pytest.approx(0.5 * (lo + hi), rel=1e-8)
    assert steady_quantile(0.5, P) == pytest.approx(MEDIAN, rel=1e-8)


def test_below_support_rejected():
    with pytest.raises(DomainError):
        steady_pdf(29.0, P)
    with pytest.raises(DomainError):
        steady_cdf([31.0, 10.0], P)


def test_params_validated():
    with pytest.raises(DomainError):
        SteadyStateParams(0.0, 64.84, 73.19, 95.0, 30.0)


@given(st.floats(0.5, 4.0), st.floats(5.0, 300.0), st.floats(1.0, 300.0), st.floats(1.0, 500.0),
       st.floats(1.0, 60.0))
@settings(max_examples=25, deadline=None)
def test_normalisation_random(alpha, C0, V0, K0, y0):
    p = SteadyStateParams(alpha, C0, V0, K0, y0)
    mass = float(mpmath.quad(lambda y: steady_pdf(float(y), p), [y0, 2 * y0, 20 * y0, mpmath.inf]))
    assert mass == pytest.approx(1.0, abs=1e-8)


@given(st.lists(st.floats(30.0, 1e5), min_size=2, max_size=8))
@settings(max_examples=40, deadline=None)
def test_cdf_monotone(ys):
    ys = np.sort(np.array(ys))
    c = steady_cdf(ys, P)
    assert np.all(np.diff(c) >= 0)
    assert np.all((c >= 0) & (c <= 1))


def test_steady_state_is_zero_flux():
    # drift*f + y^2 f' vanishes for the closed form
    y = np.geomspace(31, 1e4, 50)
    h = 1e-5 * y
    fp = (steady_pdf(y + h, P) - steady_pdf(y - h, P)) / (2 * h)
    flux = ((P.alpha + 2) * y - P.C0 - engel_cd(y)) * steady_pdf(y, P) + y ** 2 * fp
    scale = (P.alpha + 2) * y * steady_pdf(y, P)
    assert np.max(np.abs(flux / scale)) < 1e-8


def test_local_slope_limit():
    assert local_log_slope(1e9, P) == pytest.approx(-(P.alpha + 2), abs=1e-6)


def test_tail_slope_log_spaced_fit():
    # exact closed form: residual (C0+V0-V0)/y term biases the fit above -3.6
    assert tail_slope(P) == pytest.approx(-3.58894, abs=1e-4)


@pytest.mark.parametrize("alpha", [1.0, 1.6, 2.5])
def test_tail_fit_offset_independent_of_alpha(alpha):
    # the 1/y correction to the power law shifts the windowed fit by the same amount
    p = SteadyStateParams(alpha, 64.84, 73.19, 95.0, 30.0)
    assert tail_slope(p) + alpha + 2 == pytest.approx(0.0110634, abs=1e-6)
    assert abs(local_log_slope(1e5, p) + alpha + 2) < 1e-3


def test_truncation_mass_small():
    assert truncation_mass(P, 1e3 * P.K0) == pytest.approx(6.30683e-09, rel=1e-4)


def test_steady_cdf_table_matches_direct():
    F = SteadyCDF(P)
    ys = np.array([30.0, 31.0, 50.0, 100.0, 1000.0, 1e9])
    np.testing.assert_allclose(F(ys), [0.0] + [CDF_GOLDEN[y] for y in ys[1:5]] + [1.0],
                               atol=1e-6)


def test_sample_steady_mean():
    y = sample_steady(P, 200_000, np.random.default_rng(0))
    med = np.median(y)
    assert med == pytest.approx(MEDIAN, rel=0.01)


class TestGridFunction:
    def test_rejects_bad_grid(self):
        with pytest.raises(DomainError):
            GridFunction([1.0, 1.0, 2.0], [0.0, 0.0, 0.0])
        with pytest.raises(DomainError):
            GridFunction([1.0, 2.0], [0.0, np.nan])

    def test_immutable(self):
        g = GridFunction([1.0, 2.0], [3.0, 4.0])
        with pytest.raises(ValueError):
            g.values[0] = 1.0

    def test_csv_roundtrip(self, tmp_path):
        g = GridFunction(np.geomspace(30, 300, 17), np.linspace(0, 1, 17) ** 2, 3.5)
        path = tmp_path / "f.csv"
        g.to_csv(path, {"note": "x"})
        back = GridFunction.from_csv(path)
        np.testing.assert_array_equal(back.grid, g.grid)
        np.testing.assert_array_equal(back.values, g.values)
        assert back.t == 3.5 and back.meta["note"] == "x"

    def test_default_grid(self):
        g = default_grid(P)
        assert g.size == 2048 and g[0] == 30.0 and g[-1] == pytest.approx(95_000.0)

    def test_steady_grid_function_normalised(self):
        assert steady_grid_function(P).mass() == pytest.approx(1.0, abs=1e-12)


class TestSolver:
    grid = log_grid(30.0, 3e4, 1024)

    def test_steady_state_preserved(self):
        f0 = steady_grid_function(P, self.grid)
        f1 = evolve_pdf(f0, P.alpha, P.C0, engel_cd, 0.0, 2.0, 0.05)
        assert np.max(np.abs(f1.values - f0.values)) / np.max(f0.values) < 1e-9

    def test_grid_cd_preserves_nearly(self):
        f0 = steady_grid_function(P, self.grid)
        f1 = evolve_pdf(f0, P.alpha, P.C0, engel_cd(self.grid), 0.0, 2.0, 0.05)
        assert np.max(np.abs(f1.values - f0.values)) / np.max(f0.values) < 1e-5

    def test_relaxes_to_steady_state(self):
        # start from a lognormal-ish bump; the scheme converges to its own fixed point
        g = self.grid
        v = np.exp(-np.log(g / 80.0) ** 2 / 0.1)
        f0 = GridFunction(g, v).normalized()
        f1 = evolve_pdf(f0, P.alpha, P.C0, engel_cd, 0.0, 40.0, 0.1)
        target = steady_grid_function(P, g)
        assert np.max(np.abs(f1.values - target.values)) / np.max(target.values) < 1e-3

    def test_mass_conserved_and_positive_self_consistent(self):
        f0 = steady_grid_function(P, self.grid)
        seen = []
        f1 = evolve_pdf(f0, P.alpha, "self-consistent", engel_cd, 0.0, 1.0, 0.05,
                        callback=lambda t, f: seen.append(t))
        assert f1.mass() == pytest.approx(1.0, abs=1e-10)
        assert np.all(f1.values >= 0)
        assert seen[-1] == pytest.approx(1.0)

    def test_explicit_matches_implicit(self):
        op = FokkerPlanckOperator(self.grid, P.alpha)
        dt = 0.9 * op.explicit_bound(P.C0, engel_cd)
        f0 = GridFunction(self.grid, np.exp(-np.log(self.grid / 70) ** 2)).normalized()
        n = 200
        fe = evolve_pdf(f0, P.alpha, P.C0, engel_cd, 0.0, n * dt, dt, method="explicit")
        fi = evolve_pdf(f0, P.alpha, P.C0, engel_cd, 0.0, n * dt, dt / 4)
        assert np.max(np.abs(fe.values - fi.values)) / np.max(fi.values) < 1e-3

    def test_explicit_stability_guard(self):
        f0 = steady_grid_function(P, self.grid)
        with pytest.raises(StepSizeError):
            evolve_pdf(f0, P.alpha, P.C0, engel_cd, 0.0, 1.0, 0.01, method="explicit")

    def test_bad_step(self):
        f0 = steady_grid_function(P, self.grid)
        with pytest.raises(StepSizeError):
            evolve_pdf(f0, P.alpha, P.C0, engel_cd, 0.0, 1.0, 0.0)

    def test_unnormalised_rejected(self):
        g = GridFunction(self.grid, 2 * steady_grid_function(P, self.grid).values)
        with pytest.raises(NormalizationError) as info:
            evolve_pdf(g, P.alpha, P.C0, engel_cd, 0.0, 1.0, 0.1)
        assert info.value.mass == pytest.approx(2.0)

    def test_mass_guard(self):
        f0 = steady_grid_function(P, self.grid)
        with pytest.raises(SchemeError):
            evolve_pdf(f0, P.alpha, P.C0, engel_cd, 0.0, 0.1, 0.05, mass_tol_step=-1.0)

    def test_cd_integral_forms_agree(self):
        op = FokkerPlanckOperator(self.grid, P.alpha)
        a = op.cd_over_y2_integrals(engel_cd)
        b = op.cd_over_y2_integrals(engel_cd(self.grid))
        np.testing.assert_allclose(a, b, rtol=1e-3)


class TestEigenmodes:
    def test_steady_mode_exponents(self):
        omega, g1m, g1p, g2m, g2p = eigen_exponents(0, 1.6)
        assert omega == 0.0
        assert g1m == pytest.approx(1.0)
        assert g1p == pytest.approx(3.6)
        assert g2m == pytest.approx(-1.6)
        assert g2p == pytest.approx(3.6)

    def test_exponent_relations(self):
        for n in range(1, 6):
            omega, g1m, g1p, g2m, g2p = eigen_exponents(n, 1.6)
            assert omega == pytest.approx(2 * math.pi * n)
            root = math.sqrt(2.6 ** 2 + 4 * omega)
            assert g1m + g1p == pytest.approx(4.6)
            assert g2m + g2p == pytest.approx(2.0)
            assert g1p - g1m == pytest.approx(root)
            assert g2p - g2m == pytest.approx(2 * root)

    def test_profile_matches_mpmath(self):
        mode, gf = eigenmode(1, 1.6, 64.84, np.geomspace(30, 300, 7), B1=1.0, B2=0.5)
        z = 64.84 / gf.grid
        ref = [float(zz ** mode.gamma1_minus * mpmath.hyp1f1(mode.gamma1_minus, mode.gamma2_minus, -zz)
                     + 0.5 * zz ** mode.gamma1_plus * mpmath.hyp1f1(mode.gamma1_plus, mode.gamma2_plus, -zz))
               for zz in z]
        np.testing.assert_allclose(gf.values, ref, rtol=1e-9)

    def test_profile_argument_limit(self):
        mode = eigenmode(1, 1.6)
        with pytest.raises(DomainError):
            mode.profile([0.5], 64.84)

    def test_mode_sum_decays(self):
        modes = [eigenmode(n, 1.6) for n in (1, 2)]
        y = np.array([40.0, 80.0])
        a = mode_sum(modes, y, 64.84, 0.0)
        b = mode_sum(modes, y, 64.84, 1.0)
        assert np.all(np.abs(b) < np.abs(a))

    def test_steady_projection(self):
        f = steady_grid_function(P, log_grid(30.0, 3e4, 512))
        w = steady_mode_weight(f, P)
        assert w == pytest.approx(1.0, rel=1e-4)
