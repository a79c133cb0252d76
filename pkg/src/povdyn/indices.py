"""Poverty indices: the deprivation-weighted index and the FGT family.

``P_CD = int_{y0}^inf CD(y) f(y) dy`` averages consumption deprivation over
the income density without a poverty line. The Foster-Greer-Thorbecke
indices (head count, poverty gap, squared gap) need an exogenous line ``z``.
"""
from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import trapezoid

from ._validation import check_increasing, check_positive
from .cddyn import Viscosity, evolve_cd_engel
from .engel import TrendModel
from .exceptions import ConfigError, DomainError, NormalizationError, RangeError
from .fpdist import (SELF_CONSISTENT, FokkerPlanckOperator, GridFunction, SteadyStateParams,
                     evolve_pdf, steady_grid_function, steady_pdf)
from .numerics import Quadrature, quad_interval, quad_semi_infinite

FGT_NAMES = {0: "hci", 1: "pg", 2: "spg"}
_Q = Quadrature(abs_tol=1e-14, rel_tol=1e-12, max_subdivisions=400)


@dataclass(frozen=True)
class PovertyLine:
    z: float
    basis: str = "config"

    def __post_init__(self):
        check_positive("z", self.z)
        if self.basis not in ("exogenous", "config"):
            raise ValueError("basis must be 'exogenous' or 'config'")


def _line_value(line):
    return line.z if isinstance(line, PovertyLine) else check_positive("z", line)


def _cd_on(cd, y):
    if isinstance(cd, GridFunction):
        vals = cd(y)
    elif hasattr(cd, "gf"):
        vals = cd.gf(y)
    elif callable(cd):
        vals = cd(y)
    elif np.ndim(cd) == 0:
        vals = np.full(np.shape(y), float(cd))
    else:
        vals = np.asarray(cd, dtype=float)
        if vals.shape != np.shape(y):
            raise DomainError("CD node values must match the density grid")
    vals = np.asarray(vals, dtype=float)
    if np.any(vals < 0):
        raise DomainError("CD must be non-negative")
    return vals


def poverty_index(cd, f, y0=None, mass_tol=1e-6):
    """Deprivation-weighted poverty index ``int CD f dy``.

    Parameters
    ----------
    cd : callable, GridFunction, CD state, array of node values or constant
    f : GridFunction, SteadyStateParams or callable density
        Grid densities are integrated by the trapezoid rule on their grid;
        analytic densities by semi-infinite quadrature from ``y0``.
    y0 : float
        Lower income limit; required for a callable density.

    Raises
    ------
    NormalizationError
        When the density's mass differs from one by more than ``mass_tol``.
    """
    if isinstance(f, GridFunction):
        if y0 is not None and abs(y0 - f.grid[0]) > 1e-12 * max(1.0, abs(y0)):
            raise DomainError("grid densities are integrated from their first node")
        mass = f.mass()
        if abs(mass - 1.0) > mass_tol:
            raise NormalizationError(f"density mass {mass} is not 1", mass)
        return float(trapezoid(_cd_on(cd, f.grid) * f.values, f.grid))
    if isinstance(f, SteadyStateParams):
        pdf, lo = (lambda y: steady_pdf(y, f)), f.y0
    elif callable(f):
        if y0 is None:
            raise DomainError("y0 is required for a callable density")
        pdf, lo = f, check_positive("y0", y0)
    else:
        raise TypeError("f must be a GridFunction, SteadyStateParams or callable")
    mode = 2.0 * lo
    mass = quad_semi_infinite(pdf, lo, _Q, points=[mode])
    if abs(mass - 1.0) > mass_tol:
        raise NormalizationError(f"density mass {mass} is not 1", mass)
    return quad_semi_infinite(lambda y: _cd_on(cd, y) * pdf(y), lo, _Q, points=[mode])


def _fgt_kernel(y, z, order):
    gap = np.clip((z - y) / z, 0.0, None)
    poor = y < z
    return np.where(poor, gap ** order if order else 1.0, 0.0)


def fgt(data, line, order):
    """Foster-Greer-Thorbecke index of ``order`` 0 (HCI), 1 (PG) or 2 (SPG).

    ``data`` is an income sample (array or ensemble), a grid density or
    :class:`SteadyStateParams`. For densities a line at or below the
    support floor gives 0 with a warning.
    """
    if order not in (0, 1, 2):
        raise DomainError("FGT order must be 0, 1 or 2")
    z = _line_value(line)
    if isinstance(data, GridFunction):
        g, v = data.grid, data.values
        if z <= g[0]:
            warnings.warn("poverty line below the density support", stacklevel=2)
            return 0.0
        mass = data.mass()
        inside = g < z
        gz = np.concatenate([g[inside], [min(z, g[-1])]])
        vz = np.concatenate([v[inside], [data(min(z, g[-1]))]])
        return float(trapezoid(_fgt_kernel(gz, z, order) * vz, gz) / mass)
    if isinstance(data, SteadyStateParams):
        if z <= data.y0:
            warnings.warn("poverty line below the density support", stacklevel=2)
            return 0.0
        return quad_interval(lambda y: _fgt_kernel(y, z, order) * steady_pdf(y, data),
                             data.y0, z, _Q)
    y = np.asarray(getattr(data, "incomes", data), dtype=float).ravel()
    if y.size == 0:
        raise DomainError("empty income sample")
    return float(np.mean(_fgt_kernel(y, z, order)))


def fgt_all(data, line):
    return {FGT_NAMES[k]: fgt(data, line, k) for k in (0, 1, 2)}


# --------------------------------------------------------------------------
# time series


@dataclass(frozen=True)
class YearMap:
    """Affine round <-> calendar-year map through two anchor points."""

    round_a: float = 6.0
    year_a: float = 1959.5
    round_b: float = 31.5
    year_b: float = 2005.0

    def __post_init__(self):
        if self.round_a == self.round_b or self.year_a == self.year_b:
            raise ConfigError("year map anchors must be distinct")

    @property
    def years_per_round(self):
        return (self.year_b - self.year_a) / (self.round_b - self.round_a)

    def year(self, r):
        return self.year_a + (np.asarray(r, dtype=float) - self.round_a) * self.years_per_round

    def round(self, year):
        return self.round_a + (np.asarray(year, dtype=float) - self.year_a) / self.years_per_round


@dataclass
class IndexRow:
    round: float
    year: float | None
    p_cd: float
    mean_income: float
    hci: float | None = None
    pg: float | None = None
    spg: float | None = None
    p_cd_rel: float | None = None
    extrapolated: bool = False
    clamped: bool = False


@dataclass
class IndexSeries:
    rows: list = field(default_factory=list)
    config_hash: str = ""
    notes: list = field(default_factory=list)

    def __post_init__(self):
        for r in self.rows:
            if r.p_cd < 0:
                raise DomainError("p_cd must be non-negative")
            for name in ("hci", "pg", "spg"):
                v = getattr(r, name)
                if v is not None and not -1e-12 <= v <= 1 + 1e-12:
                    raise DomainError(f"{name} must lie in [0, 1]")

    def column(self, name):
        return np.array([np.nan if getattr(r, name) is None else getattr(r, name)
                         for r in self.rows], dtype=float)

    @property
    def rounds(self):
        return self.column("round")

    @property
    def years(self):
        return self.column("year")

    @property
    def p_cd(self):
        return self.column("p_cd")

    def value_at_year(self, year, name="p_cd"):
        yrs = self.years
        if not yrs[0] <= year <= yrs[-1]:
            raise RangeError(f"year {year} outside the series span")
        return float(np.interp(year, yrs, self.column(name)))

    def ratio(self, year_num, year_den, name="p_cd"):
        return self.value_at_year(year_num, name) / self.value_at_year(year_den, name)

    def to_csv(self, path, header=None):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            meta = {"config_hash": self.config_hash, **(header or {})}
            for k, v in meta.items():
                fh.write(f"# {k}: {v}\n")
            for note in self.notes:
                fh.write(f"# note: {note}\n")
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["round", "year", "p_cd", "p_cd_rel", "mean_income", "hci", "pg", "spg",
                        "extrapolated_flag", "clamped_flag"])
            for r in self.rows:
                w.writerow([_num(r.round), _num(r.year), _num(r.p_cd), _num(r.p_cd_rel),
                            _num(r.mean_income), _num(r.hci), _num(r.pg), _num(r.spg),
                            int(r.extrapolated), int(r.clamped)])


def _num(v):
    return "" if v is None else repr(float(v))


def _trend_value(trend, t):
    return float(trend(t)) if callable(trend) else float(trend)


def _is_clamped(trend, t):
    return (isinstance(trend, TrendModel) and trend.positivity_floor is not None
            and float(trend.raw(t)) <= trend.positivity_floor)


def _out_of_range(trend, t):
    return isinstance(trend, TrendModel) and not trend.in_range(t)


def index_series(V_trend, K_trend, rounds, *, alpha, y0, C0, C_source=SELF_CONSISTENT,
                 C_trend=None, grid=None, dt=0.05, t_start=None, fp_time_per_round=1.0,
                 density="evolve", nu=None, year_map=None, data_end_year=None,
                 poverty_line=None, relative=False, config_hash=""):
    """Run the coupled deprivation/density pipeline and report indices.

    From ``t_start`` (default: the first reported round) the deprivation
    field starts in Engel form at ``(V, K)(t_start)`` with the stationary
    viscosity ``-V K/2`` and is advanced by :func:`evolve_cd_engel`. The
    density starts at the steady state for ``(alpha, C0, V, K, y0)`` and is
    either evolved by the Fokker-Planck solver (``density="evolve"``)
    driven by the current CD field, or refreshed to the steady state of the
    current parameters (``density="refresh"``).

    Parameters
    ----------
    C_source : {"self-consistent", "trend", "constant"}
        ``C(t)`` from the density's own mean, from ``C_trend`` evaluated at
        the calendar year, or fixed at ``C0``.
    fp_time_per_round : float
        Density-equation time units elapsed per survey round.
    data_end_year : float, optional
        Rows after this year are flagged as extrapolated (forecasts).
    relative : bool
        Also report ``P_CD / V(t)``.
    """
    rounds = check_increasing("rounds", rounds) if np.size(rounds) > 1 else np.atleast_1d(
        np.asarray(rounds, dtype=float))
    t_start = float(rounds[0]) if t_start is None else float(t_start)
    if t_start > rounds[0]:
        raise ConfigError("t_start must not follow the first reported round")
    if C_source not in (SELF_CONSISTENT, "trend", "constant"):
        raise ConfigError(f"unknown C source {C_source!r}")
    if C_source == "trend" and C_trend is None:
        raise ConfigError("C_source='trend' needs C_trend")
    if density not in ("evolve", "refresh"):
        raise ConfigError(f"unknown density mode {density!r}")
    if density == "refresh" and C_source == SELF_CONSISTENT:
        raise ConfigError("refreshed densities need an exogenous C (trend or constant)")
    if C_source == "trend" and year_map is None:
        raise ConfigError("C_source='trend' needs a year map (the C trend is in years)")

    V_s, K_s = _trend_value(V_trend, t_start), _trend_value(K_trend, t_start)
    if grid is None:
        grid = np.geomspace(y0, 1e3 * K_s, 2048)
    grid = check_increasing("grid", grid)
    nu = Viscosity.steady(V_s, K_s) if nu is None else nu
    t_end = float(rounds[-1])

    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        traj = evolve_cd_engel(V_trend, K_trend, nu, t_start, t_end, dt, grid,
                               extrapolate=True)
    notes = list(traj.warnings)

    def C_at(r):
        if C_source == "constant":
            return float(C0)
        return float(C_trend(float(year_map.year(r))))

    steady = SteadyStateParams(alpha, C0, V_s, K_s, y0)
    f = steady_grid_function(steady, grid, t_start)
    op = FokkerPlanckOperator(grid, alpha)

    if density == "evolve":
        # the density equation runs on its own clock; map CD lookups back to rounds
        class _CDClock:
            def at(self, tau):
                return traj.at(min(t_start + tau / fp_time_per_round, t_end))

        cd_clock = _CDClock()
        if C_source == SELF_CONSISTENT:
            C_fp = SELF_CONSISTENT
        else:
            C_fp = lambda tau: max(C_at(t_start + tau / fp_time_per_round), 1e-6)

    rows = []
    t_prev = t_start
    for r in rounds:
        r = float(r)
        if density == "evolve":
            if r > t_prev:
                tau0 = (t_prev - t_start) * fp_time_per_round
                tau1 = (r - t_start) * fp_time_per_round
                f = evolve_pdf(f, alpha, C_fp, cd_clock, tau0, tau1, dt * fp_time_per_round)
                f = GridFunction(grid, f.values, r)
        else:
            V_r, K_r = _trend_value(V_trend, r), _trend_value(K_trend, r)
            f = steady_grid_function(SteadyStateParams(alpha, max(C_at(r), 1e-6), V_r, K_r, y0),
                                     grid, r)
        t_prev = r
        cd_now = traj.at(r)
        p = float(trapezoid(cd_now * f.values, grid) / f.mass())
        year = None if year_map is None else float(year_map.year(r))
        row = IndexRow(round=r, year=year, p_cd=p, mean_income=op.first_moment(f.values)
                       / op.mass(f.values))
        if poverty_line is not None:
            row.hci, row.pg, row.spg = (fgt(f, poverty_line, k) for k in (0, 1, 2))
        if relative:
            row.p_cd_rel = p / _trend_value(V_trend, r)
        row.clamped = _is_clamped(V_trend, r) or _is_clamped(K_trend, r)
        row.extrapolated = (_out_of_range(V_trend, r) or _out_of_range(K_trend, r)
                            or (data_end_year is not None and year is not None
                                and year > data_end_year))
        rows.append(row)
    return IndexSeries(rows, config_hash, notes)


# --------------------------------------------------------------------------
# derived reports


@dataclass(frozen=True)
class PlateauReport:
    detected: bool
    round: float | None
    year: float | None
    threshold: float
    rates: np.ndarray


def detect_plateau(series: IndexSeries, threshold=1e-4, relative=True, sustained=True):
    """First round where ``|dP/dt|`` (per round) drops below ``threshold``.

    With ``relative`` the rate is ``|dP/dt| / P``. With ``sustained`` the
    rate must stay below the threshold for the rest of the series.
    """
    r = series.rounds
    p = series.p_cd
    if r.size < 3:
        raise DomainError("plateau detection needs at least 3 rows")
    rate = np.abs(np.gradient(p, r))
    if relative:
        rate = rate / np.maximum(np.abs(p), 1e-300)
    below = rate < threshold
    if sustained:
        ok = np.flip(np.logical_and.accumulate(np.flip(below)))
    else:
        ok = below
    if not np.any(ok):
        return PlateauReport(False, None, None, threshold, rate)
    k = int(np.argmax(ok))
    year = series.rows[k].year
    return PlateauReport(True, float(r[k]), year, threshold, rate)


def compare_series(model_years, model_values, ext_years, ext_values):
    """Year-matched comparison of a model series to an external index.

    Returns the model and external ratio between the first and last shared
    years, their relative agreement, the Spearman rank correlation over
    shared years (``nan`` if fewer than 3) and the sign of the trend match.
    """
    from scipy.stats import spearmanr

    my = np.asarray(model_years, dtype=float)
    mv = np.asarray(model_values, dtype=float)
    ey = np.asarray(ext_years, dtype=float)
    ev = np.asarray(ext_values, dtype=float)
    inside = (ey >= my.min()) & (ey <= my.max())
    if inside.sum() < 2:
        raise RangeError("fewer than two external years overlap the model series")
    ey, ev = ey[inside], ev[inside]
    order = np.argsort(ey)
    ey, ev = ey[order], ev[order]
    mv_at = np.interp(ey, my, mv)
    model_ratio = mv_at[-1] / mv_at[0]
    ext_ratio = ev[-1] / ev[0]
    rho = float(spearmanr(mv_at, ev)[0]) if ey.size >= 3 else float("nan")
    model_dir = np.sign(mv_at[-1] - mv_at[0])
    ext_dir = np.sign(ev[-1] - ev[0])
    return {
        "years": ey.tolist(),
        "model": mv_at.tolist(),
        "external": ev.tolist(),
        "model_ratio": float(model_ratio),
        "external_ratio": float(ext_ratio),
        "ratio_agreement": float(1.0 - abs(model_ratio - ext_ratio) / abs(ext_ratio)),
        "rank_correlation": rho,
        "aligned": bool(model_dir == ext_dir),
    }
