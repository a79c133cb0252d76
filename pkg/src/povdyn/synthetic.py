"""Synthetic grouped survey tables with known generating parameters.

Class shares and class means come from the closed-form steady density for
each round; cereal expenditure is the Engel curve at the class mean
(optionally with multiplicative noise). Money columns are inflated by a
synthetic CPI so that deflation is exercised on ingestion.
"""
from __future__ import annotations

import numpy as np

from .dataio import ClassRow, CPISeries, ExpenditureTable
from .engel import EngelParams, TrendModel, consumption
from .fpdist import SteadyStateParams, steady_cdf, steady_pdf
from .numerics import Quadrature, quad_interval, quad_semi_infinite

PAPER_V_TREND = TrendModel("shifted-exponential", -890.5, 963.69, -0.0025)
PAPER_K_TREND = TrendModel("shifted-exponential", -579.66, 674.66, -0.0048)
PAPER_C_TREND = TrendModel("linear", -2218.7, 1.16, valid_range=(1973.0, 1992.0),
                           positivity_floor=None)
DEFAULT_EDGES = (30.0, 40.0, 50.0, 60.0, 75.0, 90.0, 110.0, 140.0, 180.0, 250.0)
_Q = Quadrature(abs_tol=1e-300, rel_tol=1e-12, max_subdivisions=400)


def synthetic_cpi(years, rate=0.07, base_year=1974.0) -> CPISeries:
    years = np.asarray(years, dtype=float)
    return CPISeries(years, np.exp(rate * (years - base_year)))


def grouped_table(year, rnd, steady: SteadyStateParams, engel: EngelParams, cpi=1.0,
                  edges=DEFAULT_EDGES, noise=0.0, rng=None) -> ExpenditureTable:
    """Grouped table in nominal units for one round (top class open)."""
    edges = np.asarray(edges, dtype=float)
    if edges[0] != steady.y0:
        raise ValueError("the first class must start at the density floor")
    cdf = np.append(steady_cdf(edges, steady), 1.0)
    rows = []
    for i, lo in enumerate(edges):
        hi = edges[i + 1] if i + 1 < edges.size else None
        share = cdf[i + 1] - cdf[i]
        moment = (quad_interval(lambda y: y * steady_pdf(y, steady), lo, hi, _Q)
                  if hi is not None
                  else quad_semi_infinite(lambda y: y * steady_pdf(y, steady), lo, _Q))
        mean = moment / share
        cereal = consumption(mean, engel)
        if noise:
            cereal *= 1.0 + noise * rng.standard_normal()
        rows.append(ClassRow(lo * cpi, None if hi is None else hi * cpi, float(share),
                             mean * cpi, float(cereal) * cpi))
    return ExpenditureTable(float(year), float(rnd), tuple(rows))


def paper_trend_tables(rounds, year_map, alpha=1.6, y0=30.0, cpi_rate=0.07):
    """Noiseless tables whose Engel fits lie exactly on the paper trends."""
    years = [float(year_map.year(r)) for r in rounds]
    cpi = synthetic_cpi(years, cpi_rate)
    tables = []
    for r, yr in zip(rounds, years):
        V, K = float(PAPER_V_TREND(r)), float(PAPER_K_TREND(r))
        C = float(PAPER_C_TREND(yr))
        steady = SteadyStateParams(alpha, C, V, K, y0)
        tables.append(grouped_table(yr, r, steady, EngelParams(V, K), cpi.at(yr)))
    return tables, cpi
