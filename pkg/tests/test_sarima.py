import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from dmaflow.errors import InsufficientHistory, InvalidConfig, NonFiniteInput, SeriesTooShort
from dmaflow.sarima import (
    SarimaFit,
    SarimaSpec,
    css_objective,
    difference,
    fit,
    forecast,
    integrate,
    rolling_one_step,
)

from oracles import ma1_from_lag1, ols_ar1, simulate_arma

AR1_MEAN = SarimaSpec(p=1, d=0, q=0, P=0, D=0, Q=0, include_mean=True)
AR1 = SarimaSpec(p=1, d=0, q=0, P=0, D=0, Q=0)
MA1 = SarimaSpec(p=0, d=0, q=1, P=0, D=0, Q=0)
MEAN_ONLY = SarimaSpec(p=0, d=0, q=0, P=0, D=0, Q=0, include_mean=True)


# ------------------------------------------------------------ differencing

def test_difference_examples():
    np.testing.assert_array_equal(difference([1, 2, 4], 1), [1, 2])
    np.testing.assert_array_equal(difference([1, 2, 3, 4], 0, 1, 2), [2, 2])
    np.testing.assert_array_equal(difference(np.full(6, 3.5), 1), np.zeros(5))


def test_difference_too_short():
    with pytest.raises(SeriesTooShort):
        difference([1.0, 2.0], 0, 1, 2)


@settings(max_examples=150, deadline=None)
@given(st.integers(0, 2), st.integers(0, 1), st.integers(1, 5), st.data())
def test_difference_integrate_round_trip(d, D, s, data):
    k = d + D * s
    x = data.draw(arrays(float, st.integers(k + 1, k + 30),
                         elements=st.floats(-1e3, 1e3, allow_nan=False, allow_infinity=False)))
    back = integrate(difference(x, d, D, s), x[:k], d, D, s)
    np.testing.assert_allclose(back, x, atol=1e-6)


# --------------------------------------------------------------------- CSS

def test_css_matches_hand_recursion():
    x = np.array([1.2, 0.4, -0.3, 0.8, 1.5, 0.9, -0.2, -1.1, 0.3, 0.7])
    phi, mu = 0.6, 0.25
    e = np.empty_like(x)
    prev = mu  # pre-sample observation equals the mean
    for t, v in enumerate(x):
        e[t] = (v - mu) - phi * (prev - mu)
        prev = v
    assert css_objective(AR1_MEAN, [phi, mu], x) == pytest.approx(float(np.sum(e ** 2)), rel=1e-13)


def test_css_ma_hand_recursion():
    x = np.array([0.5, -0.2, 1.0, 0.1, -0.7, 0.4])
    theta = -0.4
    e_prev, total = 0.0, 0.0
    for v in x:
        e = v - theta * e_prev
        total += e * e
        e_prev = e
    assert css_objective(MA1, [theta], x) == pytest.approx(total, rel=1e-13)


def test_css_white_noise_at_sample_mean():
    x = np.random.default_rng(0).normal(3.0, 1.0, size=200)
    expected = float(np.sum((x - x.mean()) ** 2))
    assert css_objective(MEAN_ONLY, [x.mean()], x) == pytest.approx(expected, rel=1e-12)


@settings(max_examples=100, deadline=None)
@given(arrays(float, st.integers(5, 40), elements=st.floats(-100, 100)),
       st.floats(-0.99, 0.99), st.floats(-0.99, 0.99))
def test_css_non_negative(x, a, b):
    spec = SarimaSpec(p=1, d=0, q=1, P=0, D=0, Q=0)
    assert css_objective(spec, [a, b], x) >= 0.0


def test_wrong_parameter_count():
    with pytest.raises(InvalidConfig):
        css_objective(AR1, [0.1, 0.2], np.ones(5))


# -------------------------------------------------------------------- fit

def test_ar1_recovery_against_least_squares():
    x = simulate_arma(0.7, 0.0, 5000, seed=1)
    oracle = ols_ar1(x)
    assert abs(oracle - 0.7) <= 0.05
    fitted = fit(AR1, x)
    assert abs(fitted.ar[0] - oracle) <= 0.05
    assert 0.65 <= fitted.ar[0] <= 0.75


def test_ma1_recovery_against_autocorrelation():
    x = simulate_arma(0.0, 0.5, 5000, seed=2)
    fitted = fit(MA1, x)
    assert 0.4 <= fitted.ma[0] <= 0.6
    assert abs(fitted.ma[0] - ma1_from_lag1(x)) <= 0.05


def test_constant_series_mean_only():
    fitted = fit(MEAN_ONLY, np.full(50, 7.25))
    assert fitted.mean == 7.25
    assert fitted.css == 0.0


def test_fit_rejects_bad_input():
    with pytest.raises(NonFiniteInput):
        fit(AR1, [1.0, np.nan, 2.0, 3.0])
    with pytest.raises(SeriesTooShort):
        fit(SarimaSpec(), np.arange(100.0))


def test_fit_round_trip_dict():
    fitted = fit(AR1, simulate_arma(0.3, 0.0, 300, seed=3))
    assert SarimaFit.from_dict(fitted.to_dict()) == fitted


# --------------------------------------------------------------- forecast

def test_ar1_one_step():
    model = SarimaFit(AR1, ar=(0.5,))
    assert forecast(model, [1.0, -2.0, 4.0], 1)[0] == pytest.approx(2.0)


def test_mean_only_forecast_is_flat():
    model = SarimaFit(MEAN_ONLY, mean=3.0)
    np.testing.assert_allclose(forecast(model, [1.0, 5.0, 2.0], 4), 3.0)
    zero_ar = SarimaFit(AR1_MEAN, ar=(0.0,), mean=3.0)
    np.testing.assert_allclose(forecast(zero_ar, [1.0, 5.0, 2.0], 4), 3.0)


def test_random_walk_forecast_is_last_value():
    spec = SarimaSpec(p=0, d=1, q=0, P=0, D=0, Q=0)
    x = np.cumsum(np.random.default_rng(4).normal(size=100))
    model = fit(spec, x)
    assert forecast(model, x, 1)[0] == x[-1]
    np.testing.assert_allclose(forecast(model, x, 3), x[-1])


def test_forecast_needs_history():
    with pytest.raises(InsufficientHistory):
        forecast(SarimaFit(SarimaSpec(s=4)), np.ones(4), 1)


def test_periodic_series_is_tracked():
    s = 24
    t = np.arange(40 * s)
    x = 10 + 3 * np.sin(2 * np.pi * t / s) + np.cos(4 * np.pi * t / s)
    spec = SarimaSpec(p=1, d=0, q=1, P=0, D=1, Q=1, s=s)
    model = fit(spec, x[:30 * s])
    pred = rolling_one_step(model, x, 30 * s)
    rmse = np.sqrt(np.mean((pred - x[30 * s:]) ** 2))
    assert rmse < 0.1 * x.std()


def test_rolling_matches_prefix_forecasts():
    rng = np.random.default_rng(5)
    s = 6
    t = np.arange(120)
    x = np.sin(2 * np.pi * t / s) + 0.3 * rng.normal(size=t.size)
    spec = SarimaSpec(p=1, d=1, q=1, P=0, D=1, Q=1, s=s, include_mean=True)
    model = SarimaFit(spec, ar=(0.3,), ma=(-0.2,), sma=(-0.5,), mean=0.01)
    start = 40
    rolled = rolling_one_step(model, x, start)
    direct = [forecast(model, x[:i], 1)[0] for i in range(start, x.size)]
    np.testing.assert_allclose(rolled, direct, atol=1e-10)
