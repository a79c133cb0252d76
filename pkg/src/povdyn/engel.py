"""Engel consumption curve, consumption deprivation and parameter trends.

The cereal Engel curve saturates: ``C(y) = V*y/(K+y)``. Its shortfall from
the saturation level ``V`` is the consumption deprivation
``CD(y) = V*K/(K+y)``. Both parameters drift over survey rounds and are
modelled by :class:`TrendModel`.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import as_1d, check_positive
from .exceptions import DomainError, FitFailureError, RangeError
from .numerics import FitReport, nlls_fit

SHIFTED_EXPONENTIAL = "shifted-exponential"
LINEAR = "linear"
TREND_KINDS = (SHIFTED_EXPONENTIAL, LINEAR)
DEFAULT_POSITIVITY_FLOOR = 1e-6


@dataclass(frozen=True)
class EngelParams:
    """Saturation level ``V`` and half-saturation income ``K`` for one year."""

    V: float
    K: float

    def __post_init__(self):
        check_positive("V", self.V)
        check_positive("K", self.K)


def _income(y):
    y = np.asarray(y, dtype=float)
    if np.any(y < 0) or np.any(np.isnan(y)):
        raise DomainError("income must be non-negative")
    return y


def _scalar_or_array(value):
    return float(value) if np.ndim(value) == 0 else value


def consumption(y, p: EngelParams):
    """Cereal expenditure ``V*y/(K+y)`` at income ``y >= 0``."""
    y = _income(y)
    return _scalar_or_array(p.V * y / (p.K + y))


def deprivation(y, p: EngelParams):
    """Consumption deprivation ``V*K/(K+y)``; adds to ``consumption`` to give ``V``."""
    y = _income(y)
    return _scalar_or_array(p.V * p.K / (p.K + y))


def budget_share_limit(p: EngelParams) -> float:
    """The ``y -> 0`` limit of ``C(y)/y``, i.e. ``V/K``."""
    return p.V / p.K


def _engel_model(y, params):
    V, K = params
    return V * y / (K + y)


def _engel_jac(y, params):
    V, K = params
    d = K + y
    return np.column_stack([y / d, -V * y / (d * d)])


def fit_engel(incomes, expenditures, weights=None, max_iter=200):
    """Least-squares fit of ``V*y/(K+y)`` to (income, expenditure) pairs.

    Classes are weighted equally unless ``weights`` (e.g. population
    shares) is given. Starts from ``V = max(expenditure)`` and
    ``K = median(income)``.

    Returns
    -------
    (EngelParams, FitReport)

    Raises
    ------
    FitFailureError
        When expenditure never increases with income, or the fit does not
        converge to positive parameters.
    """
    y = as_1d("incomes", incomes)
    c = as_1d("expenditures", expenditures)
    if y.size != c.size:
        raise DomainError("incomes and expenditures must have equal length")
    if y.size < 3:
        raise DomainError("fit_engel needs at least 3 points")
    if np.any(y <= 0):
        raise DomainError("incomes must be strictly positive")
    if np.all(y == y[0]):
        raise DomainError("incomes must not all be equal")
    order = np.argsort(y, kind="stable")
    if np.all(np.diff(c[order]) <= 0):
        raise FitFailureError("expenditure is non-increasing in income; "
                              "no saturating Engel curve fits this data")
    init = (max(float(c.max()), 1e-6), float(np.median(y)))
    bounds = [(1e-12, None), (1e-12, None)]
    report = nlls_fit(_engel_model, y, c, init, bounds=bounds, jac=_engel_jac,
                      weights=weights, max_iter=max_iter)
    V, K = report.params
    if not report.converged or V <= 0 or K <= 0:
        raise FitFailureError("Engel fit did not converge", report)
    return EngelParams(V, K), report


class TrendValue(NamedTuple):
    value: float
    clamped: bool
    extrapolated: bool


@dataclass(frozen=True)
class TrendModel:
    """Time law for a parameter.

    ``shifted-exponential``: ``a + b*exp(c*t)``; ``linear``: ``a + b*t``
    (``c`` unused). ``positivity_floor`` of ``None`` disables clamping.
    """

    kind: str
    a: float
    b: float
    c: float = 0.0
    valid_range: tuple = (-np.inf, np.inf)
    positivity_floor: float | None = DEFAULT_POSITIVITY_FLOOR

    def __post_init__(self):
        if self.kind not in TREND_KINDS:
            raise ValueError(f"unknown trend kind {self.kind!r}")
        lo, hi = self.valid_range
        if not lo <= hi:
            raise ValueError("valid_range must be ordered")
        object.__setattr__(self, "valid_range", (float(lo), float(hi)))
        if self.positivity_floor is not None and not self.positivity_floor > 0:
            raise ValueError("positivity_floor must be > 0 or None")

    def raw(self, t):
        t = np.asarray(t, dtype=float)
        if self.kind == SHIFTED_EXPONENTIAL:
            return self.a + self.b * np.exp(self.c * t)
        return self.a + self.b * t

    def __call__(self, t):
        """Vectorised value with positivity clamping, no range checks."""
        v = self.raw(t)
        if self.positivity_floor is not None:
            v = np.maximum(v, self.positivity_floor)
        return _scalar_or_array(v)

    def in_range(self, t):
        lo, hi = self.valid_range
        return lo <= t <= hi

    def to_dict(self):
        return {"kind": self.kind, "a": self.a, "b": self.b, "c": self.c,
                "valid_range": list(self.valid_range),
                "positivity_floor": self.positivity_floor}

    @classmethod
    def from_dict(cls, d):
        floor = d.get("positivity_floor", DEFAULT_POSITIVITY_FLOOR)
        rng = d.get("valid_range", (-np.inf, np.inf))
        rng = tuple(-np.inf if v is None and i == 0 else np.inf if v is None else float(v)
                    for i, v in enumerate(rng))
        return cls(d["kind"], float(d["a"]), float(d["b"]), float(d.get("c", 0.0)),
                   rng, None if floor is None else float(floor))


def eval_trend(m: TrendModel, t, extrapolate=False) -> TrendValue:
    """Evaluate a trend at round ``t`` with clamp and extrapolation flags.

    Raises :class:`RangeError` outside ``valid_range`` unless ``extrapolate``.
    """
    t = float(t)
    outside = not m.in_range(t)
    if outside and not extrapolate:
        raise RangeError(f"t={t} outside valid range {m.valid_range}")
    raw = float(m.raw(t))
    clamped = m.positivity_floor is not None and raw <= m.positivity_floor
    value = m.positivity_floor if clamped else raw
    return TrendValue(value, clamped, outside)


def _exp_model(t, p):
    a, b, c = p
    return a + b * np.exp(c * t)


def _exp_jac(t, p):
    a, b, c = p
    e = np.exp(c * t)
    return np.column_stack([np.ones_like(t), e, b * t * e])


def _lin_model(t, p):
    a, b = p
    return a + b * t


def _lin_jac(t, p):
    return np.column_stack([np.ones_like(t), t])


def _three_point_init(t, v):
    # a + b*exp(c*t) through the end points and the middle of the span
    order = np.argsort(t)
    t, v = t[order], v[order]
    t1, t3 = t[0], t[-1]
    t2 = 0.5 * (t1 + t3)
    v1, v3 = v[0], v[-1]
    v2 = float(np.interp(t2, t, v))
    h = t2 - t1
    if v2 != v1 and (v3 - v2) / (v2 - v1) > 0 and (v3 - v2) != (v2 - v1):
        c = np.log((v3 - v2) / (v2 - v1)) / h
    else:
        c = -1e-3 if v3 < v1 else 1e-3
    e1, e2 = np.exp(c * t1), np.exp(c * t2)
    b = (v2 - v1) / (e2 - e1)
    a = v1 - b * e1
    return float(a), float(b), float(c)


def fit_trend(t, values, kind=SHIFTED_EXPONENTIAL, positivity_floor="auto", max_iter=500):
    """Fit a :class:`TrendModel` to a (round, value) series.

    The validity range is the observed round span. The exponential fit is
    started from the three-point geometry of the series (plateau level from
    the late end, amplitude and rate from the early decay).

    Returns
    -------
    (TrendModel, FitReport)
        ``report.converged`` is False when the iteration budget runs out.
    """
    t = as_1d("t", t)
    v = as_1d("values", values)
    if t.size != v.size:
        raise DomainError("t and values must have equal length")
    if kind == SHIFTED_EXPONENTIAL:
        if t.size < 4:
            raise DomainError("shifted-exponential trend needs at least 4 points")
        init = _three_point_init(t, v)
        report = nlls_fit(_exp_model, t, v, init, jac=_exp_jac, max_iter=max_iter)
        a, b, c = report.params
        floor = DEFAULT_POSITIVITY_FLOOR if positivity_floor == "auto" else positivity_floor
    elif kind == LINEAR:
        if t.size < 2:
            raise DomainError("linear trend needs at least 2 points")
        i, j = np.argmin(t), np.argmax(t)
        if t[i] == t[j]:
            raise DomainError("linear trend needs distinct rounds")
        slope = (v[j] - v[i]) / (t[j] - t[i])
        init = (float(v[i] - slope * t[i]), float(slope))
        if t.size >= 3:
            report = nlls_fit(_lin_model, t, v, init, jac=_lin_jac, max_iter=max_iter)
        else:
            report = FitReport(init, 0.0, 0, True, message="two-point line")
        a, b = report.params
        c = 0.0
        floor = None if positivity_floor == "auto" else positivity_floor
    else:
        raise ValueError(f"unknown trend kind {kind!r}")
    model = TrendModel(kind, a, b, c, (float(t.min()), float(t.max())), floor)
    return model, report


class EngelCurve(BaseEstimator, RegressorMixin):
    """Scikit-learn style wrapper around :func:`fit_engel`.

    ``fit(X, y)`` takes incomes ``X`` (1-D or single column) and cereal
    expenditures ``y``; ``predict`` returns fitted consumption.
    """

    def __init__(self, weighted=False, max_iter=200):
        self.weighted = weighted
        self.max_iter = max_iter

    def fit(self, X, y, sample_weight=None):
        if self.weighted and sample_weight is None:
            raise ValueError("weighted=True requires sample_weight")
        w = sample_weight if self.weighted else None
        self.params_, self.report_ = fit_engel(X, y, weights=w, max_iter=self.max_iter)
        self.V_, self.K_ = self.params_.V, self.params_.K
        return self

    def predict(self, X):
        check_is_fitted(self, "params_")
        return np.asarray(consumption(as_1d("X", X), self.params_))

    def deprivation(self, X):
        check_is_fitted(self, "params_")
        return np.asarray(deprivation(as_1d("X", X), self.params_))


class TrendRegressor(BaseEstimator, RegressorMixin):
    """Scikit-learn style wrapper around :func:`fit_trend`."""

    def __init__(self, kind=SHIFTED_EXPONENTIAL, extrapolate=True):
        self.kind = kind
        self.extrapolate = extrapolate

    def fit(self, X, y):
        self.model_, self.report_ = fit_trend(X, y, kind=self.kind)
        return self

    def predict(self, X):
        check_is_fitted(self, "model_")
        t = as_1d("X", X)
        if not self.extrapolate:
            lo, hi = self.model_.valid_range
            if np.any((t < lo) | (t > hi)):
                raise RangeError("prediction outside the fitted range")
        return np.asarray(self.model_(t), dtype=float)
