from importlib.resources import files

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from povdyn.dataio import (ClassRow, CPISeries, ExpenditureTable, GroupedCDF, GroupedIncomeDensity,
                           anchor_scale, cdf_to_pdf, class_masses, closure_sensitivity, deflate,
                           deflate_table, engel_points, file_digest, grouped_to_cdf, read_cpi,
                           read_expenditure_tables, write_expenditure_tables)
from povdyn.exceptions import DataError, DomainError
from povdyn.fpdist import GridFunction
from povdyn.numerics import quad_interval

DATA = files("povdyn") / "data"


def table(edges, shares, year=2000.0, open_top=False):
    rows = []
    for i, s in enumerate(shares):
        lo = edges[i]
        up = None if open_top and i == len(shares) - 1 else edges[i + 1]
        mean = 1.5 * lo if up is None else 0.5 * (lo + up)
        rows.append(ClassRow(lo, up, s, mean, 0.4 * mean))
    return ExpenditureTable(year, 1.0, tuple(rows))


@st.composite
def random_tables(draw):
    n = draw(st.integers(2, 8))
    widths = draw(st.lists(st.floats(0.5, 50.0), min_size=n, max_size=n))
    edges = np.concatenate([[draw(st.floats(1.0, 40.0))], np.cumsum(widths)])
    edges[1:] += edges[0]
    raw = np.array(draw(st.lists(st.floats(0.01, 1.0), min_size=n, max_size=n)))
    return table(list(edges), list(raw / raw.sum()), open_top=draw(st.booleans()))


class TestDeflate:
    def test_values(self):
        assert deflate(100.0, 2.0) == 50.0
        assert deflate(37.5, 1.0) == 37.5

    def test_bad_cpi(self):
        with pytest.raises(DomainError):
            deflate(1.0, 0.0)

    @given(st.floats(0, 1e6), st.floats(0, 1e6), st.sampled_from([1.0, 2.0, 4.0, 0.5, 0.25]))
    def test_linear_for_exact_divisors(self, a, b, c):
        # dividing by a power of two is exact, so additivity holds bit for bit
        assert deflate(a + b, c) == deflate(a, c) + deflate(b, c)

    def test_anchor(self):
        cpi = read_cpi(DATA / "synthetic_cpi.csv")
        tables = read_expenditure_tables(DATA / "synthetic_grouped.csv")
        first = next(iter(tables.values()))
        m = deflate_table(first, cpi).mean_income()
        k = anchor_scale(m)
        assert k == pytest.approx(64.84 / m)
        assert deflate_table(first, cpi, k).mean_income() == pytest.approx(64.84, rel=1e-12)

    def test_cpi_interpolation(self):
        cpi = CPISeries(np.array([2000.0, 2002.0]), np.array([1.0, 4.0]))
        assert cpi.at(2001.0) == pytest.approx(2.0)
        assert cpi.rebased(2002.0).at(2000.0) == pytest.approx(0.25)
        with pytest.raises(DataError):
            cpi.at(1999.0)
        with pytest.raises(DataError):
            CPISeries(np.array([2000.0]), np.array([-1.0]))


class TestTables:
    def test_invariants(self):
        with pytest.raises(DataError, match="overlap"):
            ExpenditureTable(2000, 1, (ClassRow(0, 10, 0.5, 5, 1), ClassRow(5, 20, 0.5, 12, 1)))
        with pytest.raises(DataError, match="only the top"):
            ExpenditureTable(2000, 1, (ClassRow(0, None, 0.5, 5, 1), ClassRow(10, 20, 0.5, 12, 1)))
        with pytest.raises(DataError, match="outside"):
            ExpenditureTable(2000, 1, (ClassRow(0, 10, 1.0, 15, 1),))
        with pytest.raises(DataError, match="empty"):
            ExpenditureTable(2000, 1, ())

    def test_roundtrip(self, tmp_path):
        tables = read_expenditure_tables(DATA / "synthetic_grouped.csv")
        path = tmp_path / "t.csv"
        write_expenditure_tables(path, tables.values(), {"note": "copy"})
        back = read_expenditure_tables(path)
        assert back == tables
        assert file_digest(path) == file_digest(path)

    def test_bundled_years(self):
        tables = read_expenditure_tables(DATA / "synthetic_grouped.csv")
        assert min(tables) == pytest.approx(1959.5)
        for t in tables.values():
            assert t.share_discrepancy() < 1e-6
            assert t.rows[-1].upper is None

    def test_missing_column(self, tmp_path):
        p = tmp_path / "bad.csv"
        p.write_text("year,round\n2000,1\n")
        with pytest.raises(DataError, match="missing columns"):
            read_expenditure_tables(p)

    def test_empty_file(self, tmp_path):
        p = tmp_path / "empty.csv"
        p.write_text("# nothing\n")
        with pytest.raises(DataError):
            read_expenditure_tables(p)

    def test_engel_points(self):
        t = table([10.0, 20.0, 30.0], [0.5, 0.5])
        y, c, s = engel_points(t, 2.0)
        np.testing.assert_allclose(y, [7.5, 12.5])
        np.testing.assert_allclose(c, [3.0, 5.0])


class TestGroupedCDF:
    def test_two_classes(self):
        F = grouped_to_cdf(table([0.0, 10.0, 20.0], [0.5, 0.5]))
        assert F(10.0) == pytest.approx(0.5)
        assert F(20.0) == pytest.approx(1.0)
        assert F(-5.0) == 0.0 and F(50.0) == 1.0

    def test_open_top_closure(self):
        F = grouped_to_cdf(table([10.0, 20.0, 30.0], [0.6, 0.4], open_top=True), closure_multiple=5)
        assert F.knots[-1] == pytest.approx(100.0)

    def test_share_warning(self):
        t = table([0.0, 10.0, 20.0], [0.5, 0.52])
        with pytest.warns(UserWarning, match="renormalised"):
            F = grouped_to_cdf(t)
        assert F(20.0) == 1.0

    @given(random_tables(), st.sampled_from(["pchip", "linear"]))
    @settings(max_examples=60, deadline=None)
    def test_monotone_in_unit_interval(self, t, method):
        F = grouped_to_cdf(t, method=method)
        y = np.linspace(F.knots[0] - 1, F.knots[-1] + 1, 2000)
        v = F(y)
        assert np.all(np.diff(v) >= -1e-15)
        assert v.min() >= 0 and v.max() <= 1
        assert np.all(F.derivative(y) >= 0)

    def test_derivative_reintegrates(self):
        tables = read_expenditure_tables(DATA / "synthetic_grouped.csv")
        F = grouped_to_cdf(next(iter(tables.values())))
        for a, b in zip(F.knots[:-1], F.knots[1:]):
            mass = quad_interval(F.derivative, a, b)
            assert mass == pytest.approx(F(b) - F(a), abs=1e-8)


class TestDensity:
    def test_uniform(self):
        F = grouped_to_cdf(table([0.0, 0.25, 0.5, 0.75, 1.0], [0.25] * 4))
        pdf = cdf_to_pdf(F)
        np.testing.assert_allclose(pdf.values, 1.0, atol=1e-6)

    def test_unit_mass(self):
        tables = read_expenditure_tables(DATA / "synthetic_grouped.csv")
        for t in tables.values():
            assert cdf_to_pdf(grouped_to_cdf(t)).mass() == pytest.approx(1.0, abs=1e-10)

    @given(random_tables())
    @settings(max_examples=40, deadline=None)
    def test_class_masses_preserved(self, t):
        F = grouped_to_cdf(t)
        pdf = cdf_to_pdf(F)
        masses = class_masses(pdf, F.knots)
        np.testing.assert_allclose(masses, np.diff(F.values), atol=1e-6)

    def test_non_monotone_rejected(self):
        with pytest.raises(DomainError):
            GroupedCDF([0.0, 1.0, 2.0], [0.0, 0.6, 0.4])

    def test_tail_slope_comparable_to_steady(self):
        # upper classes of the 2004-05 synthetic table; sampling noise limits the match
        t = read_expenditure_tables(DATA / "synthetic_2004_05.csv")[2004.5]
        F = grouped_to_cdf(t, closure_multiple=5)
        pdf = cdf_to_pdf(F)
        lo = t.rows[-4].lower
        hi = t.rows[-1].lower
        m = (pdf.grid >= lo) & (pdf.grid <= hi) & (pdf.values > 0)
        slope = np.polyfit(np.log(pdf.grid[m]), np.log(pdf.values[m]), 1)[0]
        assert slope == pytest.approx(-3.6, abs=1.0)

    def test_closure_sensitivity(self):
        t = read_expenditure_tables(DATA / "synthetic_2004_05.csv")[2004.5]
        out = closure_sensitivity(t, GridFunction.mean)
        assert out["multiples"] == [3.0, 10.0]
        assert out["delta"] > 0

    def test_estimator(self):
        t = table([0.0, 10.0, 20.0], [0.5, 0.5])
        est = GroupedIncomeDensity(points_per_class=50).fit(t)
        assert est.cdf(10.0) == pytest.approx(0.5)
        assert est.mean_ == pytest.approx(10.0, rel=1e-6)
        assert np.isfinite(est.score_samples([5.0, 15.0])).all()
        assert est.get_params()["closure_multiple"] == 5.0
        with pytest.raises(TypeError):
            GroupedIncomeDensity().fit(np.ones(3))
