import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from dmaflow.errors import ConstantSeries, EmptyCorrelationSet, LengthMismatch, UnknownZone, WindowTooLarge
from dmaflow.series import (
    CorrelationMatrix,
    FlowPanel,
    build_dataset,
    correlation_matrix,
    feature_zones,
    pearson,
    select_correlated,
    sort_zones,
)
from dmaflow.synthgen import default_scenario, generate

finite = st.floats(-1e3, 1e3, allow_nan=False, allow_infinity=False)


def series_pair(min_size=3, max_size=40):
    return st.integers(min_size, max_size).flatmap(
        lambda n: st.tuples(arrays(float, n, elements=finite), arrays(float, n, elements=finite)))


def spread(x):
    return float(np.ptp(x)) > 1e-3


# ---------------------------------------------------------------- pearson

def test_pearson_hand_example():
    # centred: [-1.5,-.5,.5,1.5] and [-.5,-1.5,1.5,.5]; cross sum 3, each square sum 5
    assert pearson([1, 2, 3, 4], [2, 1, 4, 3]) == pytest.approx(0.6, abs=1e-15)


def test_pearson_identity_and_affine():
    x = np.array([3.0, 1.0, 4.0, 1.0, 5.0, 9.0, 2.0, 6.0])
    assert pearson(x, x) == 1.0
    assert pearson(x, 2 * x + 5) == pytest.approx(1.0, abs=1e-12)
    assert pearson(x, -x) == pytest.approx(-1.0, abs=1e-12)


def test_pearson_errors():
    with pytest.raises(LengthMismatch):
        pearson([1, 2, 3], [1, 2])
    with pytest.raises(ConstantSeries):
        pearson([2, 2, 2], [1, 2, 3])
    with pytest.raises(ConstantSeries):
        pearson([1, 2, 3], [5, 5, 5])


@settings(max_examples=200, deadline=None)
@given(series_pair())
def test_pearson_symmetric_and_bounded(pair):
    a, b = pair
    if not (spread(a) and spread(b)):
        return
    r = pearson(a, b)
    assert -1.0 <= r <= 1.0
    assert r == pytest.approx(pearson(b, a), abs=1e-12)


@settings(max_examples=200, deadline=None)
@given(series_pair(), st.floats(0.1, 10), st.floats(-100, 100), st.booleans())
def test_pearson_affine_invariance(pair, scale, shift, flip):
    a, b = pair
    if not (spread(a) and spread(b)):
        return
    sign = -1.0 if flip else 1.0
    r = pearson(a, b)
    assert pearson(sign * scale * a + shift, b) == pytest.approx(sign * r, abs=1e-7)


def test_pearson_matches_numpy_corrcoef():
    rng = np.random.default_rng(3)
    a, b = rng.normal(size=(2, 500))
    assert pearson(a, b) == pytest.approx(np.corrcoef(a, b)[0, 1], abs=1e-12)


# ------------------------------------------------------ correlation matrix

def test_matrix_identical_rows():
    x = np.array([1.0, 3.0, 2.0, 5.0])
    m = correlation_matrix(FlowPanel(("a", "b"), [x, x]))
    np.testing.assert_array_equal(m.rho, [[1.0, 1.0], [1.0, 1.0]])


def test_matrix_negated_rows():
    x = np.array([1.0, 3.0, 2.0, 5.0])
    m = correlation_matrix(FlowPanel(("a", "b"), [x, -x]))
    assert m.rho[0, 1] == pytest.approx(-1.0)
    assert m.rho[1, 0] == m.rho[0, 1]


def test_matrix_constant_zone_named():
    panel = FlowPanel(("1", "2"), [[1.0, 2.0, 3.0], [4.0, 4.0, 4.0]])
    with pytest.raises(ConstantSeries) as exc:
        correlation_matrix(panel)
    assert exc.value.zone == "2"


def test_matrix_interval_restricts_data():
    a = np.r_[np.arange(10.0), np.zeros(10)]
    b = np.r_[np.arange(10.0), np.arange(10.0)[::-1]]
    m = correlation_matrix(FlowPanel(("a", "b"), [a, b]), range(0, 10))
    assert m.rho[0, 1] == pytest.approx(1.0)


def test_matrix_on_default_scenario():
    panel = generate(default_scenario())
    m = correlation_matrix(panel)
    assert np.all(np.isfinite(m.rho))
    assert np.all(np.abs(m.rho) <= 1.0)
    np.testing.assert_array_equal(m.rho, m.rho.T)
    np.testing.assert_array_equal(np.diag(m.rho), 1.0)


# ------------------------------------------------------ correlation sets

TABLE_ROW = {"1": 0.951, "2": 0.680, "3": 0.950, "4": 0.953}


def test_select_reference_row():
    cset = select_correlated(CorrelationMatrix.from_row("5", TABLE_ROW), "5", 0.95)
    assert cset.members == ("1", "3", "4")
    assert cset.target == "5"
    assert cset.threshold == 0.95


def test_select_theta_zero_and_none_qualify():
    m = CorrelationMatrix.from_row("5", TABLE_ROW)
    assert select_correlated(m, "5", 0.0).members == ("1", "2", "3", "4")
    assert select_correlated(m, "5", 0.99).members == ()


def test_select_unknown_zone():
    with pytest.raises(UnknownZone):
        select_correlated(CorrelationMatrix.from_row("5", TABLE_ROW), "9", 0.5)


@settings(max_examples=200, deadline=None)
@given(st.lists(st.floats(-1, 1), min_size=1, max_size=12), st.floats(0, 1), st.floats(0, 1))
def test_select_monotone_in_theta(values, t1, t2):
    lo, hi = sorted((t1, t2))
    m = CorrelationMatrix.from_row("0", {str(i + 1): v for i, v in enumerate(values)})
    loose = set(select_correlated(m, "0", lo).members)
    tight = set(select_correlated(m, "0", hi).members)
    assert tight <= loose
    assert "0" not in loose


def test_sort_zones_numeric_order():
    assert sort_zones(["10", "2", "b", "1", "a"]) == ["1", "2", "10", "a", "b"]


# --------------------------------------------------------------- datasets

def small_panel(T=40, zones=("1", "2", "3", "4", "5")):
    values = np.arange(len(zones) * T, dtype=float).reshape(len(zones), T)
    return FlowPanel(zones, values)


def test_single_sample_window():
    panel = small_panel(T=16)
    ds = build_dataset(panel, "5", (), 15, range(16))
    assert len(ds) == 1
    np.testing.assert_array_equal(ds.inputs[0, 0], panel.row("5")[:15])
    assert ds.targets[0] == panel.row("5")[15]
    assert ds.t_index[0] == 14


def test_mode_shapes():
    panel = small_panel()
    members = ("1", "3", "4")
    both = build_dataset(panel, "5", members, 15, range(40), "local+correlated")
    assert both.inputs.shape == (25, 4, 15)
    assert both.zones == ("5", "1", "3", "4")
    only = build_dataset(panel, "5", members, 15, range(40), "correlated")
    assert only.inputs.shape == (25, 3, 15)
    np.testing.assert_array_equal(only.targets, panel.row("5")[15:40])
    window, label = only[0]
    assert window.shape == (3, 15)
    np.testing.assert_array_equal(window.values[0], panel.row("1")[:15])
    assert label == panel.row("5")[15]


def test_windows_run_oldest_to_newest():
    ds = build_dataset(small_panel(), "1", (), 4, range(10, 20))
    np.testing.assert_array_equal(ds.inputs[0, 0], [10, 11, 12, 13])
    assert ds.targets[0] == 14


def test_correlated_mode_needs_members():
    with pytest.raises(EmptyCorrelationSet):
        build_dataset(small_panel(), "5", (), 15, range(40), "correlated")
    with pytest.raises(EmptyCorrelationSet):
        feature_zones("5", [], "correlated")


def test_window_too_large():
    with pytest.raises(WindowTooLarge):
        build_dataset(small_panel(T=15), "5", (), 15, range(15))


@settings(max_examples=150, deadline=None)
@given(st.integers(20, 80), st.integers(1, 10), st.data())
def test_no_leakage_across_interval(T, window, data):
    start = data.draw(st.integers(0, T - window - 2))
    stop = data.draw(st.integers(start + window + 1, T))
    # sentinels outside [start, stop) must never appear in inputs or targets
    values = np.full((2, T), -1.0)
    values[:, start:stop] = np.arange(stop - start) + 1.0
    ds = build_dataset(FlowPanel(("a", "b"), values), "a", ("b",), window, range(start, stop),
                       "local+correlated")
    assert len(ds) == stop - start - window
    assert np.all(ds.inputs > 0) and np.all(ds.targets > 0)
    assert ds.t_index[0] == start + window - 1 and ds.t_index[-1] == stop - 2
    # every label strictly follows its window
    np.testing.assert_array_equal(ds.targets, ds.inputs[:, 0, -1] + 1)


def test_panel_values_read_only():
    panel = small_panel()
    with pytest.raises(ValueError):
        panel.values[0, 0] = 1.0
    assert math.isfinite(panel.row("1").sum())
