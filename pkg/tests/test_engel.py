import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from povdyn.engel import (EngelCurve, EngelParams, TrendModel, TrendRegressor, budget_share_limit,
                          consumption, deprivation, eval_trend, fit_engel, fit_trend)
from povdyn.exceptions import DomainError, FitFailureError, RangeError

P0 = EngelParams(73.19, 95.0)
V_TREND = (-890.5, 963.69, -0.0025)
K_TREND = (-579.66, 674.66, -0.0048)

pos = st.floats(1.0, 1e3)


def test_deprivation_at_floor():
    assert deprivation(30.0, P0) == pytest.approx(55.62, abs=0.01)


def test_budget_share_limit():
    assert budget_share_limit(P0) == pytest.approx(0.77, abs=0.005)


@pytest.mark.parametrize("y", [0.0, 1.0, 95.0, 1e6])
def test_consumption_plus_deprivation_is_saturation(y):
    assert consumption(y, P0) + deprivation(y, P0) == pytest.approx(73.19, rel=1e-15)


def test_half_saturation_at_K():
    assert consumption(95.0, P0) == pytest.approx(73.19 / 2)


def test_negative_income_rejected():
    with pytest.raises(DomainError):
        consumption(-1.0, P0)


def test_params_must_be_positive():
    with pytest.raises(DomainError):
        EngelParams(-1.0, 2.0)


@given(pos, pos, st.lists(st.integers(0, 10_000).map(float), min_size=3, max_size=3,
                          unique=True))
@settings(max_examples=100, deadline=None)
def test_shape_properties(V, K, ys):
    p = EngelParams(V, K)
    a, b, c = sorted(ys)
    ca, cb, cc = (consumption(v, p) for v in (a, b, c))
    assert ca < cb < cc
    assert deprivation(a, p) > deprivation(b, p) > deprivation(c, p)
    # concavity: chord value below the curve at the middle point
    w = (c - b) / (c - a)
    assert w * ca + (1 - w) * cc <= cb * (1 + 1e-12)


@given(pos, pos, st.floats(1e-3, 1e4), st.floats(1e-3, 1e4))
@settings(max_examples=100, deadline=None)
def test_budget_share_decreasing(V, K, y1, y2):
    if y1 == y2:
        return
    p = EngelParams(V, K)
    lo, hi = min(y1, y2), max(y1, y2)
    assert consumption(lo, p) / lo > consumption(hi, p) / hi


def test_fit_engel_exact():
    y = np.arange(10.0, 501.0, 10.0)
    p, rep = fit_engel(y, consumption(y, P0))
    assert rep.converged
    assert p.V == pytest.approx(73.19, rel=1e-6)
    assert p.K == pytest.approx(95.0, rel=1e-6)


@given(pos, pos)
@settings(max_examples=100, deadline=None)
def test_fit_engel_roundtrip_random(V, K):
    y = np.geomspace(1.0, 1e4, 30)
    p, _ = fit_engel(y, consumption(y, EngelParams(V, K)))
    assert p.V == pytest.approx(V, rel=1e-6)
    assert p.K == pytest.approx(K, rel=1e-6)


def test_fit_engel_weighted():
    y = np.arange(10.0, 300.0, 15.0)
    p, _ = fit_engel(y, consumption(y, P0), weights=np.linspace(1, 2, y.size))
    assert p.V == pytest.approx(73.19, rel=1e-6)


def test_fit_engel_rejects_decreasing():
    with pytest.raises(FitFailureError):
        fit_engel([10, 20, 30, 40], [5.0, 4.0, 3.0, 2.0])


def test_fit_engel_input_checks():
    with pytest.raises(DomainError):
        fit_engel([1, 2], [1, 2])
    with pytest.raises(DomainError):
        fit_engel([0, 1, 2], [1, 2, 3])


def test_trend_values_from_captions():
    V = TrendModel("shifted-exponential", *V_TREND)
    C = TrendModel("linear", -2218.7, 1.16, positivity_floor=None)
    assert float(V(6)) == pytest.approx(58.84, abs=0.01)
    assert float(C(1973)) == pytest.approx(69.98, abs=1e-9)
    assert float(V(0)) == pytest.approx(73.19, abs=1e-9)
    assert float(TrendModel("shifted-exponential", *K_TREND)(0)) == pytest.approx(95.0, abs=1e-9)


def test_trend_clamp_and_range_flags():
    V = TrendModel("shifted-exponential", *V_TREND, valid_range=(6, 31))
    tv = eval_trend(V, 40, extrapolate=True)
    assert tv.clamped and tv.extrapolated and tv.value == V.positivity_floor
    with pytest.raises(RangeError):
        eval_trend(V, 40)
    ok = eval_trend(V, 10)
    assert not ok.clamped and not ok.extrapolated


@pytest.mark.parametrize("truth", [V_TREND, K_TREND])
def test_fit_trend_recovers_captions(truth):
    t = np.arange(6.0, 32.0)
    m, rep = fit_trend(t, truth[0] + truth[1] * np.exp(truth[2] * t))
    assert rep.converged
    np.testing.assert_allclose([m.a, m.b, m.c], truth, rtol=1e-4)
    assert m.valid_range == (6.0, 31.0)


def test_fit_linear_trend():
    yrs = np.arange(1973.0, 1993.0)
    m, _ = fit_trend(yrs, 1.16 * yrs - 2218.7, kind="linear")
    assert m.a == pytest.approx(-2218.7, rel=1e-9)
    assert m.b == pytest.approx(1.16, rel=1e-9)
    assert m.positivity_floor is None


def test_trend_dict_roundtrip():
    m = TrendModel("shifted-exponential", *V_TREND, valid_range=(6, 31))
    assert TrendModel.from_dict(m.to_dict()) == m


def test_sklearn_wrappers():
    y = np.arange(10.0, 501.0, 10.0)
    est = EngelCurve().fit(y.reshape(-1, 1), consumption(y, P0))
    assert est.V_ == pytest.approx(73.19, rel=1e-6)
    np.testing.assert_allclose(est.predict(y), consumption(y, P0), rtol=1e-8)
    assert est.get_params() == {"weighted": False, "max_iter": 200}
    t = np.arange(6.0, 32.0)
    reg = TrendRegressor().fit(t, V_TREND[0] + V_TREND[1] * np.exp(V_TREND[2] * t))
    assert reg.predict([10.0])[0] == pytest.approx(V_TREND[0] + V_TREND[1] * np.exp(-0.025),
                                                   rel=1e-8)
    with pytest.raises(RangeError):
        TrendRegressor(extrapolate=False).fit(t, reg.predict(t)).predict([40.0])
