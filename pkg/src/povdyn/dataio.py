"""Grouped expenditure-class tables, CPI deflation and grouped-data densities.

Table CSV schema (UTF-8, ``#`` comment lines)::

    year,round,class_lower,class_upper,pop_share,mean_total,mean_cereal

An empty ``class_upper`` marks the open top class. One file may hold
several survey years. CPI files have columns ``year,cpi``.
"""
from __future__ import annotations

import csv
import hashlib
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.integrate import trapezoid
from scipy.interpolate import PchipInterpolator
from sklearn.base import BaseEstimator, DensityMixin
from sklearn.utils.validation import check_is_fitted

from .exceptions import DataError, DomainError
from .fpdist import GridFunction

TABLE_COLUMNS = ("year", "round", "class_lower", "class_upper", "pop_share", "mean_total",
                 "mean_cereal")
SHARE_WARN_TOL = 1e-3


def file_digest(path) -> str:
    with open(path, "rb") as fh:
        return hashlib.sha256(fh.read()).hexdigest()


def _data_lines(path):
    try:
        with open(path, encoding="utf-8") as fh:
            return [ln for ln in fh if ln.strip() and not ln.lstrip().startswith("#")]
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc


@dataclass(frozen=True)
class ClassRow:
    lower: float
    upper: float | None
    share: float
    mean_total: float
    mean_cereal: float


@dataclass(frozen=True)
class ExpenditureTable:
    """One survey year of expenditure classes, ordered by income."""

    year: float
    round: float
    rows: tuple

    def __post_init__(self):
        rows = tuple(self.rows)
        if not rows:
            raise DataError(f"year {self.year}: empty table")
        for i, r in enumerate(rows):
            if r.share < 0:
                raise DataError(f"year {self.year}: negative population share")
            if r.upper is not None and not r.upper > r.lower:
                raise DataError(f"year {self.year}: class {i} has upper <= lower")
            if i + 1 < len(rows):
                if r.upper is None:
                    raise DataError(f"year {self.year}: only the top class may be open")
                if rows[i + 1].lower < r.upper - 1e-9 * max(1.0, abs(r.upper)):
                    raise DataError(f"year {self.year}: classes overlap or are unordered")
            if r.upper is not None and not r.lower <= r.mean_total <= r.upper:
                raise DataError(f"year {self.year}: class {i} mean outside its bounds")
            if r.upper is None and r.mean_total < r.lower:
                raise DataError(f"year {self.year}: top-class mean below its lower bound")
        object.__setattr__(self, "rows", rows)

    @property
    def shares(self):
        return np.array([r.share for r in self.rows])

    @property
    def mean_total(self):
        return np.array([r.mean_total for r in self.rows])

    @property
    def mean_cereal(self):
        return np.array([r.mean_cereal for r in self.rows])

    def share_discrepancy(self):
        return float(abs(self.shares.sum() - 1.0))

    def mean_income(self):
        s = self.shares
        return float(np.dot(s, self.mean_total) / s.sum())


def read_expenditure_tables(path):
    """Parse a grouped-table CSV into ``{year: ExpenditureTable}`` (sorted by year)."""
    lines = _data_lines(path)
    if not lines:
        raise DataError(f"{path}: no data rows")
    reader = csv.DictReader(lines)
    missing = set(TABLE_COLUMNS) - set(reader.fieldnames or ())
    if missing:
        raise DataError(f"{path}: missing columns {sorted(missing)}")
    grouped = {}
    for n, rec in enumerate(reader, start=2):
        try:
            year, rnd = float(rec["year"]), float(rec["round"])
            upper = rec["class_upper"].strip()
            row = ClassRow(float(rec["class_lower"]), float(upper) if upper else None,
                           float(rec["pop_share"]), float(rec["mean_total"]),
                           float(rec["mean_cereal"]))
        except (TypeError, ValueError) as exc:
            raise DataError(f"{path}: bad value on data line {n}: {exc}") from exc
        grouped.setdefault((year, rnd), []).append(row)
    if not grouped:
        raise DataError(f"{path}: no data rows")
    tables = {}
    for (year, rnd), rows in sorted(grouped.items()):
        if year in tables:
            raise DataError(f"{path}: year {year} appears with two rounds")
        rows.sort(key=lambda r: r.lower)
        tables[year] = ExpenditureTable(year, rnd, tuple(rows))
    return tables


def write_expenditure_tables(path, tables, header=None):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        for k, v in (header or {}).items():
            fh.write(f"# {k}: {v}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TABLE_COLUMNS)
        for tbl in tables:
            for r in tbl.rows:
                w.writerow([_f(tbl.year), _f(tbl.round), _f(r.lower),
                            "" if r.upper is None else _f(r.upper), _f(r.share),
                            _f(r.mean_total), _f(r.mean_cereal)])


def _f(x):
    return repr(float(x))


@dataclass(frozen=True)
class CPISeries:
    """Consumer price index by year; values between listed years are log-linear."""

    years: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        y = np.asarray(self.years, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if y.shape != v.shape or y.ndim != 1 or y.size == 0:
            raise DataError("CPI years and values must be matching 1-D sequences")
        if np.any(v <= 0) or not np.all(np.isfinite(v)):
            raise DataError("CPI values must be finite and > 0")
        order = np.argsort(y)
        y, v = y[order], v[order]
        if np.any(np.diff(y) == 0):
            raise DataError("duplicate CPI years")
        object.__setattr__(self, "years", y)
        object.__setattr__(self, "values", v)

    def at(self, year):
        year = float(year)
        hit = np.flatnonzero(self.years == year)
        if hit.size:
            return float(self.values[hit[0]])
        if not self.years[0] <= year <= self.years[-1]:
            raise DataError(f"no CPI value for {year} (series covers "
                            f"{self.years[0]}-{self.years[-1]})")
        return float(np.exp(np.interp(year, self.years, np.log(self.values))))

    def rebased(self, base_year):
        return CPISeries(self.years, self.values / self.at(base_year))


def read_cpi(path) -> CPISeries:
    lines = _data_lines(path)
    reader = csv.DictReader(lines)
    if reader.fieldnames is None or not {"year", "cpi"} <= set(reader.fieldnames):
        raise DataError(f"{path}: CPI file needs 'year' and 'cpi' columns")
    try:
        pairs = [(float(r["year"]), float(r["cpi"])) for r in reader]
    except (TypeError, ValueError) as exc:
        raise DataError(f"{path}: bad CPI value: {exc}") from exc
    if not pairs:
        raise DataError(f"{path}: no CPI rows")
    y, v = zip(*pairs)
    return CPISeries(np.array(y), np.array(v))


def deflate(raw, cpi):
    """Real expenditure ``raw / cpi``."""
    cpi_arr = np.asarray(cpi, dtype=float)
    if np.any(~(cpi_arr > 0)):
        raise DomainError("CPI must be > 0")
    out = np.asarray(raw, dtype=float) / cpi_arr
    return float(out) if out.ndim == 0 else out


def deflate_table(tbl: ExpenditureTable, cpi, scale=1.0) -> ExpenditureTable:
    """Table in real units: every money column divided by ``cpi`` and times ``scale``."""
    c = cpi.at(tbl.year) if isinstance(cpi, CPISeries) else float(cpi)
    f = lambda x: None if x is None else scale * deflate(x, c)
    rows = tuple(ClassRow(f(r.lower), f(r.upper), r.share, f(r.mean_total), f(r.mean_cereal))
                 for r in tbl.rows)
    return ExpenditureTable(tbl.year, tbl.round, rows)


def anchor_scale(deflated_mean, target=64.84):
    """Scale factor making a reference year's deflated mean equal ``target``."""
    if not deflated_mean > 0:
        raise DomainError("reference mean must be > 0")
    return target / deflated_mean


class GroupedCDF:
    """CDF through the cumulative class shares, monotone between class bounds."""

    def __init__(self, knots, values, method="pchip"):
        self.knots = np.asarray(knots, dtype=float)
        self.values = np.asarray(values, dtype=float)
        if np.any(np.diff(self.knots) <= 0):
            raise DomainError("CDF knots must be strictly increasing")
        if np.any(np.diff(self.values) < 0):
            raise DomainError("CDF values must be non-decreasing")
        self.method = method
        if method == "pchip":
            self._interp = PchipInterpolator(self.knots, self.values, extrapolate=False)
        elif method == "linear":
            self._interp = None
        else:
            raise ValueError(f"unknown interpolation method {method!r}")

    def __call__(self, y):
        y = np.asarray(y, dtype=float)
        if self._interp is None:
            out = np.interp(y, self.knots, self.values)
        else:
            out = np.where(y <= self.knots[0], self.values[0],
                           np.where(y >= self.knots[-1], self.values[-1],
                                    np.nan_to_num(self._interp(np.clip(
                                        y, self.knots[0], self.knots[-1])))))
        out = np.clip(out, 0.0, 1.0)
        return float(out) if out.ndim == 0 else out

    def derivative(self, y):
        y = np.asarray(y, dtype=float)
        inside = (y >= self.knots[0]) & (y <= self.knots[-1])
        if self._interp is None:
            idx = np.clip(np.searchsorted(self.knots, y, side="right") - 1, 0,
                          self.knots.size - 2)
            d = np.diff(self.values)[idx] / np.diff(self.knots)[idx]
        else:
            d = self._interp.derivative()(np.clip(y, self.knots[0], self.knots[-1]))
        return np.where(inside, np.maximum(d, 0.0), 0.0)


def grouped_to_cdf(tbl: ExpenditureTable, deflator=1.0, closure_multiple=5.0,
                   method="pchip") -> GroupedCDF:
    """CDF over deflated income from cumulative class shares.

    ``deflator`` is a CPI series or value. The open top class is closed at
    ``closure_multiple`` times its lower bound. Shares are renormalised to
    sum to one, with a warning if they were off by more than 1e-3.
    """
    if not closure_multiple > 1:
        raise DomainError("closure_multiple must exceed 1")
    real = deflate_table(tbl, deflator)
    shares = real.shares
    total = shares.sum()
    if not total > 0:
        raise DataError(f"year {tbl.year}: population shares sum to zero")
    if abs(total - 1.0) > SHARE_WARN_TOL:
        warnings.warn(f"year {tbl.year}: shares sum to {total}; renormalised", stacklevel=2)
    shares = shares / total
    uppers = [r.upper if r.upper is not None else closure_multiple * r.lower for r in real.rows]
    knots = [real.rows[0].lower]
    values = [0.0]
    acc = 0.0
    for r, up, s in zip(real.rows, uppers, shares):
        if r.lower > knots[-1]:  # gap between classes carries no mass
            knots.append(r.lower)
            values.append(acc)
        acc += s
        knots.append(up)
        values.append(acc)
    values = np.minimum(np.array(values), 1.0)
    values[-1] = 1.0
    return GroupedCDF(knots, values, method)


def cdf_to_pdf(cdf: GroupedCDF, points_per_class=1000) -> GridFunction:
    """Density from the monotone CDF, on a grid refined within every class.

    The result is non-negative and renormalised to unit trapezoid mass.
    """
    if points_per_class < 2:
        raise DomainError("points_per_class must be >= 2")
    if np.any(np.diff(cdf.values) < 0):
        raise DomainError("CDF is not monotone")
    pieces = [np.linspace(a, b, points_per_class + 1)[:-1]
              for a, b in zip(cdf.knots[:-1], cdf.knots[1:])]
    grid = np.concatenate(pieces + [cdf.knots[-1:]])
    dens = cdf.derivative(grid)
    return GridFunction(grid, dens).normalized()


def class_masses(pdf: GridFunction, knots):
    """Trapezoid mass of a grid density between consecutive knots."""
    out = []
    for a, b in zip(knots[:-1], knots[1:]):
        m = (pdf.grid >= a - 1e-12 * abs(a)) & (pdf.grid <= b + 1e-12 * abs(b))
        out.append(float(trapezoid(pdf.values[m], pdf.grid[m])))
    return np.array(out)


def closure_sensitivity(tbl, statistic, deflator=1.0, multiples=(3.0, 10.0), method="pchip",
                        points_per_class=1000):
    """Change in ``statistic(pdf)`` between top-class closures ``multiples``."""
    vals = [statistic(cdf_to_pdf(grouped_to_cdf(tbl, deflator, m, method), points_per_class))
            for m in multiples]
    return {"multiples": list(multiples), "values": vals, "delta": vals[-1] - vals[0]}


def engel_points(tbl: ExpenditureTable, deflator=1.0):
    """Deflated (income, cereal expenditure) pairs and population shares."""
    real = deflate_table(tbl, deflator)
    return real.mean_total, real.mean_cereal, real.shares


def read_external_series(path):
    """External index CSV with columns ``year,value``."""
    lines = _data_lines(path)
    reader = csv.DictReader(lines)
    if reader.fieldnames is None or not {"year", "value"} <= set(reader.fieldnames):
        raise DataError(f"{path}: external series needs 'year' and 'value' columns")
    try:
        pairs = sorted((float(r["year"]), float(r["value"])) for r in reader)
    except (TypeError, ValueError) as exc:
        raise DataError(f"{path}: bad value: {exc}") from exc
    if not pairs:
        raise DataError(f"{path}: no rows")
    y, v = zip(*pairs)
    return np.array(y), np.array(v)


class GroupedIncomeDensity(BaseEstimator, DensityMixin):
    """Scikit-learn style density estimator for one grouped table.

    ``fit(table)`` builds the monotone CDF and its density; ``cdf`` and
    ``pdf`` evaluate them and ``score_samples`` returns log densities.
    """

    def __init__(self, closure_multiple=5.0, method="pchip", points_per_class=1000,
                 deflator=1.0):
        self.closure_multiple = closure_multiple
        self.method = method
        self.points_per_class = points_per_class
        self.deflator = deflator

    def fit(self, X, y=None):
        if not isinstance(X, ExpenditureTable):
            raise TypeError("GroupedIncomeDensity.fit expects an ExpenditureTable")
        self.cdf_ = grouped_to_cdf(X, self.deflator, self.closure_multiple, self.method)
        self.density_ = cdf_to_pdf(self.cdf_, self.points_per_class)
        self.mean_ = self.density_.mean()
        return self

    def cdf(self, y):
        check_is_fitted(self, "cdf_")
        return self.cdf_(y)

    def pdf(self, y):
        check_is_fitted(self, "density_")
        return self.density_(np.asarray(y, dtype=float))

    def score_samples(self, X):
        with np.errstate(divide="ignore"):
            return np.log(self.pdf(np.asarray(X, dtype=float).ravel()))
