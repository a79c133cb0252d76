from importlib.resources import files

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import trapezoid

from povdyn.cddyn import engel_form
from povdyn.dataio import read_external_series
from povdyn.engel import TrendModel
from povdyn.exceptions import DomainError, NormalizationError, RangeError
from povdyn.fpdist import (PAPER_STEADY_STATE, GridFunction, log_grid, sample_steady,
                           steady_grid_function, steady_pdf)
from povdyn.indices import (IndexRow, IndexSeries, PovertyLine, YearMap, compare_series,
                            detect_plateau, fgt, fgt_all, index_series, poverty_index)

P = PAPER_STEADY_STATE
# 30-digit mpmath quadrature of int CD f dy with CD at (V0, K0)
P_CD_STEADY = 43.310849761755998817
FGT_STEADY_60 = (0.52507480948909441, 0.14438823924447870, 0.050075287015630901)


def cd_engel(y):
    return engel_form(y, P.V0, P.K0)


class TestPovertyIndex:
    def test_constant_cd(self):
        assert poverty_index(3.5, P) == pytest.approx(3.5, rel=1e-10)
        assert poverty_index(0.0, P) == 0.0

    def test_steady_golden(self):
        assert poverty_index(cd_engel, P) == pytest.approx(P_CD_STEADY, rel=1e-10)

    def test_steady_against_trapezoid_oracle(self):
        u = np.linspace(0.0, 1 / P.y0, 1_000_001)[1:]
        y = 1 / u
        g = np.append(0.0, cd_engel(y) * steady_pdf(y, P) / u ** 2)
        oracle = trapezoid(g, np.append(0.0, u))
        assert poverty_index(cd_engel, P) == pytest.approx(oracle, rel=1e-6)

    def test_reproducible(self):
        assert poverty_index(cd_engel, P) == poverty_index(cd_engel, P)

    def test_grid_density(self):
        f = steady_grid_function(P, log_grid(30.0, 3e4, 4096))
        assert poverty_index(cd_engel, f) == pytest.approx(P_CD_STEADY, rel=1e-5)
        assert poverty_index(cd_engel(f.grid), f) == poverty_index(cd_engel, f)

    def test_callable_density(self):
        assert (poverty_index(cd_engel, lambda y: steady_pdf(y, P), y0=30.0)
                == pytest.approx(P_CD_STEADY, rel=1e-10))
        with pytest.raises(DomainError):
            poverty_index(cd_engel, lambda y: steady_pdf(y, P))

    def test_unnormalised(self):
        f = steady_grid_function(P)
        g = f.with_values(1.1 * f.values)
        with pytest.raises(NormalizationError) as info:
            poverty_index(cd_engel, g)
        assert info.value.mass == pytest.approx(1.1, rel=1e-9)

    def test_negative_cd_rejected(self):
        with pytest.raises(DomainError):
            poverty_index(lambda y: -np.ones_like(y), P)

    def test_first_order_dominance(self):
        # shifting every income up by s lowers the index strictly
        g = np.geomspace(30.0, 1e5, 20001)
        values = []
        for s in (0.0, 2.0, 10.0, 40.0):
            v = np.where(g - s >= 30.0, steady_pdf(np.maximum(g - s, 30.0), P), 0.0)
            values.append(poverty_index(cd_engel, GridFunction(g, v).normalized()))
        assert np.all(np.diff(values) < 0)


class TestFGT:
    def test_hand_values(self):
        out = fgt_all([10.0, 20.0, 40.0], PovertyLine(30.0))
        assert out["hci"] == pytest.approx(2 / 3)
        assert out["pg"] == pytest.approx(1 / 3)
        assert out["spg"] == pytest.approx(5 / 27)

    def test_all_above_line(self):
        assert all(v == 0.0 for v in fgt_all([50.0, 60.0], 30.0).values())

    def test_degenerate_near_zero(self):
        out = fgt_all(np.full(5, 1e-12), 30.0)
        for v in out.values():
            assert v == pytest.approx(1.0, abs=1e-12)

    def test_steady_golden(self):
        for k, ref in enumerate(FGT_STEADY_60):
            assert fgt(P, 60.0, k) == pytest.approx(ref, rel=1e-9)

    def test_below_support_warns(self):
        with pytest.warns(UserWarning, match="below the density support"):
            assert fgt(P, 20.0, 0) == 0.0

    def test_bad_order(self):
        with pytest.raises(DomainError):
            fgt([1.0], 30.0, 3)

    @given(st.lists(st.floats(0.0, 1e3), min_size=1, max_size=50), st.floats(1.0, 500.0))
    @settings(max_examples=100, deadline=None)
    def test_ordering_samples(self, ys, z):
        h, p, s = (fgt(np.array(ys), z, k) for k in (0, 1, 2))
        assert 0 <= s <= p <= h <= 1

    @given(st.floats(31.0, 2000.0))
    @settings(max_examples=20, deadline=None)
    def test_ordering_densities(self, z):
        f = steady_grid_function(P, log_grid(30.0, 3e4, 512))
        h, p, s = (fgt(f, z, k) for k in (0, 1, 2))
        assert 0 <= s <= p <= h <= 1 + 1e-12

    def test_sample_matches_density(self):
        n = 1_000_000
        y = sample_steady(P, n, np.random.default_rng(5))
        f = steady_grid_function(P, log_grid(30.0, 3e4, 8192))
        for k in (0, 1, 2):
            assert abs(fgt(y, 60.0, k) - fgt(f, 60.0, k)) <= 3 / np.sqrt(n)


class TestYearMap:
    def test_anchors(self):
        m = YearMap()
        assert m.year(6) == pytest.approx(1959.5)
        assert m.year(31.5) == pytest.approx(2005.0)
        assert m.round(m.year(17.25)) == pytest.approx(17.25)


class TestSeries:
    def test_frozen_trends_constant(self):
        s = index_series(P.V0, P.K0, np.arange(0, 6.0), alpha=P.alpha, y0=P.y0, C0=P.C0,
                         C_source="constant", grid=log_grid(30.0, 3e4, 1024), dt=0.1)
        p = s.p_cd
        assert np.max(np.abs(p - p[0])) <= 1e-6 * p[0]

    def test_refresh_mode_matches_steady(self):
        s = index_series(P.V0, P.K0, [0.0, 1.0], alpha=P.alpha, y0=P.y0, C0=P.C0,
                         C_source="constant", density="refresh",
                         grid=log_grid(30.0, 3e4, 4096))
        np.testing.assert_allclose(s.p_cd, P_CD_STEADY, rtol=1e-5)

    def test_flags_and_csv(self, tmp_path):
        V = TrendModel("shifted-exponential", -890.5, 963.69, -0.0025, valid_range=(6, 31.5))
        K = TrendModel("shifted-exponential", -579.66, 674.66, -0.0048, valid_range=(6, 31.5))
        s = index_series(V, K, [6.0, 24.0, 30.0, 33.0], alpha=1.6, y0=30.0, C0=64.84,
                         grid=log_grid(30.0, 3e4, 512), t_start=0.0, year_map=YearMap(),
                         data_end_year=1992.0, poverty_line=60.0, relative=True,
                         config_hash="abc")
        flags = [r.extrapolated for r in s.rows]
        # rounds past 1992 and beyond the trend range are forecasts
        assert flags == [False, False, True, True]
        path = tmp_path / "s.csv"
        s.to_csv(path)
        text = path.read_text().splitlines()
        assert text[0] == "# config_hash: abc"
        head = [l for l in text if not l.startswith("#")][0]
        assert head.split(",")[:3] == ["round", "year", "p_cd"]
        assert "extrapolated_flag" in head

    def test_invariants_enforced(self):
        with pytest.raises(DomainError):
            IndexSeries([IndexRow(0.0, None, -1.0, 1.0)])
        with pytest.raises(DomainError):
            IndexSeries([IndexRow(0.0, None, 1.0, 1.0, hci=1.5)])

    def test_ratio_and_range(self):
        rows = [IndexRow(r, 2000.0 + r, 10.0 - r, 1.0) for r in range(5)]
        s = IndexSeries(rows)
        assert s.ratio(2004, 2000) == pytest.approx(0.6)
        with pytest.raises(RangeError):
            s.value_at_year(1990)


class TestPlateau:
    def series(self, p):
        return IndexSeries([IndexRow(float(r), 1990.0 + r, float(v), 1.0) for r, v in enumerate(p)])

    def test_detects_flattening(self):
        r = np.arange(40.0)
        p = 1.0 + 10 * np.exp(-r / 2.0)
        rep = detect_plateau(self.series(p), threshold=1e-4)
        rate = np.abs(np.gradient(p, r)) / p
        first = int(np.argmax(rate < 1e-4))
        assert rep.detected and rep.round == first and rep.year == 1990.0 + first

    def test_sustained_ignores_transient(self):
        p = np.array([5.0, 4.0, 3.0, 3.0, 3.0, 2.0, 1.0, 1.0, 1.0, 1.0])
        assert detect_plateau(self.series(p), sustained=True).round == 7.0
        assert detect_plateau(self.series(p), sustained=False).round == 3.0

    def test_none(self):
        rep = detect_plateau(self.series(np.arange(10.0, 0.0, -1.0)))
        assert not rep.detected and rep.round is None


class TestCompare:
    def test_external_ratio_bundled(self):
        yrs, vals = read_external_series(files("povdyn") / "data" / "external_hci.csv")
        assert vals[-1] / vals[0] == pytest.approx(29.8 / 37.2)
        assert 29.8 / 37.2 == pytest.approx(0.801, abs=5e-4)

    def test_aligned_and_reversed(self):
        years = [2000, 2005, 2010]
        out = compare_series(years, [3.0, 2.0, 1.0], years, [30.0, 20.0, 10.0])
        assert out["aligned"] and out["rank_correlation"] == pytest.approx(1.0)
        out = compare_series(years, [1.0, 2.0, 3.0], years, [30.0, 20.0, 10.0])
        assert not out["aligned"] and out["rank_correlation"] == pytest.approx(-1.0)

    def test_no_overlap(self):
        with pytest.raises(RangeError):
            compare_series([2000, 2001], [1.0, 2.0], [1990, 2010], [1.0, 2.0])
