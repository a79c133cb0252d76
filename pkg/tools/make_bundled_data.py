"""Regenerate the synthetic CSV tables shipped in povdyn/data."""
from pathlib import Path

import numpy as np

from povdyn.dataio import write_expenditure_tables
from povdyn.engel import EngelParams
from povdyn.fpdist import SteadyStateParams
from povdyn.indices import YearMap
from povdyn.synthetic import grouped_table, paper_trend_tables, synthetic_cpi

OUT = Path(__file__).resolve().parents[1] / "src" / "povdyn" / "data"


def main():
    ym = YearMap()
    rounds = list(range(6, 25))
    tables, cpi = paper_trend_tables(rounds, ym)
    write_expenditure_tables(OUT / "synthetic_grouped.csv", tables,
                             {"source": "synthetic, paper V/K trends on rounds 6-24",
                              "units": "nominal; deflate with synthetic_cpi.csv"})
    # 2004-05 style table: Engel (139, 236.94), 1% multiplicative noise
    rng = np.random.default_rng(20040605)
    year_0405 = 2004.5
    cpi_0405 = synthetic_cpi([year_0405]).at(year_0405)
    steady = SteadyStateParams(1.6, 180.0, 139.0, 236.94, 30.0)
    edges = (30.0, 60.0, 90.0, 120.0, 160.0, 200.0, 250.0, 320.0, 400.0, 550.0, 800.0)
    t0405 = grouped_table(year_0405, float(ym.round(year_0405)), steady,
                          EngelParams(139.0, 236.94), cpi_0405, edges, noise=0.01, rng=rng)
    write_expenditure_tables(OUT / "synthetic_2004_05.csv", [t0405],
                             {"source": "synthetic, Engel V=139 K=236.94, 1% noise, seed 20040605",
                              "units": "nominal; deflate with synthetic_cpi.csv"})
    years = sorted({t.year for t in tables} | {year_0405})
    all_cpi = synthetic_cpi(years)
    with open(OUT / "synthetic_cpi.csv", "w", encoding="utf-8") as fh:
        fh.write("# source: synthetic, exp(0.07*(year-1974))\n")
        fh.write("year,cpi\n")
        for y, v in zip(all_cpi.years, all_cpi.values):
            fh.write(f"{float(y)!r},{float(v)!r}\n")
    with open(OUT / "external_hci.csv", "w", encoding="utf-8") as fh:
        fh.write("# head count index, percent\n")
        fh.write("year,value\n2005,37.2\n2010,29.8\n")


if __name__ == "__main__":
    main()
