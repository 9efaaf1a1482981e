import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dmaflow.errors import EmptyCorrelationSet, InvalidConfig, MismatchedTargets, PanelTooShort
from dmaflow.nnet import NetConfig
from dmaflow.pipeline import (
    ExperimentReport,
    ExperimentSpec,
    MinMaxScaler,
    SplitSpec,
    aggregate,
    compare,
    evaluation_index,
    metrics,
    resolve_members,
    run_experiment,
    run_seeds,
    split,
)
from dmaflow.sarima import SarimaSpec
from dmaflow.series import FlowPanel
from dmaflow.synthgen import default_scenario, generate

# a tenth of the full benchmark: 1296 / 432 / 864 steps
SMALL_SPLIT = SplitSpec(0.15, 0.05, 0.1)
TINY_NET = NetConfig(conv_filters=4, hidden=4, dense_hidden=4, epochs=2, learning_rate=0.1)


@pytest.fixture(scope="module")
def panel():
    return generate(default_scenario(months=0.3))


def spec(**kw):
    base = dict(target="5", net=TINY_NET, split=SMALL_SPLIT, seeds=(0,))
    base.update(kw)
    return ExperimentSpec(**base)


# ------------------------------------------------------------------ split

def ramp(T, zones=("1",)):
    return FlowPanel(zones, np.arange(T * len(zones), dtype=float).reshape(len(zones), T))


def test_default_split_lengths():
    expected = (range(0, 12960), range(12960, 17280), range(17280, 25920))
    assert split(ramp(25920)) == expected
    assert split(ramp(25921)) == expected


def test_split_too_short():
    with pytest.raises(PanelTooShort):
        split(ramp(100))


# ---------------------------------------------------------------- metrics

def test_metrics_examples():
    assert metrics([1.0, 2.0], [1.0, 2.0]) == {"mse": 0.0, "mae": 0.0, "rmse": 0.0}
    m = metrics([0.0, 0.0], [1.0, 3.0])
    assert m["mse"] == 5.0 and m["mae"] == 2.0 and m["rmse"] == pytest.approx(math.sqrt(5))


pairs = st.lists(st.tuples(st.floats(-1e3, 1e3), st.floats(-1e3, 1e3)), min_size=1, max_size=50)


@settings(max_examples=200, deadline=None)
@given(pairs, st.randoms())
def test_metrics_permutation_invariant(data, rnd):
    y, yhat = map(np.array, zip(*data))
    perm = list(range(len(y)))
    rnd.shuffle(perm)
    a, b = metrics(y, yhat), metrics(y[perm], yhat[perm])
    for k in a:
        assert a[k] == pytest.approx(b[k], rel=1e-12, abs=1e-9)


@settings(max_examples=200, deadline=None)
@given(pairs)
def test_rmse_squared_is_mse(data):
    y, yhat = map(np.array, zip(*data))
    m = metrics(y, yhat)
    assert m["rmse"] ** 2 == pytest.approx(m["mse"], rel=1e-12, abs=1e-12)
    assert m["mae"] <= m["rmse"] + 1e-9


def test_aggregate_population_std():
    runs = [{"mse": 1.0, "mae": 1.0, "rmse": 1.0}, {"mse": 3.0, "mae": 1.0, "rmse": 2.0}]
    agg = aggregate(runs)
    assert agg["mse"] == {"mean": 2.0, "std": 1.0}
    assert agg["mae"]["std"] == 0.0


# ---------------------------------------------------------------- scaling

def test_scaler_uses_fit_interval_only():
    p = FlowPanel(("a",), [[0.0, 10.0, 5.0, 100.0]])
    sc = MinMaxScaler.fit(p, range(0, 3))
    np.testing.assert_allclose(sc.scale([0.0, 10.0, 100.0], "a"), [0.0, 1.0, 10.0])
    np.testing.assert_allclose(sc.unscale(sc.scale([3.0, 7.0], "a"), "a"), [3.0, 7.0])


# --------------------------------------------------------- specs, members

def test_spec_validation():
    with pytest.raises(InvalidConfig):
        ExperimentSpec(target="5", mode="correlated")
    with pytest.raises(InvalidConfig):
        ExperimentSpec(target="5", model="sarima", mode="local+correlated", members=("1",))
    with pytest.raises(InvalidConfig):
        ExperimentSpec(target="5", mode="sideways")
    assert ExperimentSpec(target="5", mode="correlated", theta=0.9).name == "corr"


def test_members_from_training_range_only():
    rng = np.random.default_rng(0)
    T = 300
    a = rng.normal(size=T)
    b = a.copy()
    b[200:] = rng.normal(size=100)  # related in training, unrelated afterwards
    c = rng.normal(size=T)
    panel = FlowPanel(("a", "b", "c"), [a, b, c])
    s = ExperimentSpec(target="a", mode="local+correlated", theta=0.9)
    members, cset = resolve_members(panel, s, range(0, 200))
    assert members == ("b",) and cset.members == ("b",)
    assert resolve_members(panel, s, range(100, 300))[0] == ()


def test_default_scenario_derives_designed_members():
    full = generate(default_scenario())
    train_r = split(full)[0]
    members, _ = resolve_members(full, ExperimentSpec(target="5", mode="correlated", theta=0.95), train_r)
    assert members == ("1", "3", "4")


def test_correlated_mode_with_empty_set(panel):
    with pytest.raises(EmptyCorrelationSet):
        run_experiment(panel, spec(mode="correlated", theta=1.0))


# ----------------------------------------------------------- experiments

def test_no_leakage_from_the_future(panel):
    test_r = split(panel, SMALL_SPLIT)[2]
    cut = test_r.start + 100
    values = np.array(panel.values)
    values[:, cut:] = 1e6  # sentinel after the cut
    poisoned = panel.with_values(values)
    for s in (spec(mode="local+correlated", members=("1", "3", "4")),
              spec(model="sarima", sarima=SarimaSpec(s=288))):
        clean, _, _ = run_seeds(panel, s)
        dirty, _, _ = run_seeds(poisoned, s)
        # forecasts for indices up to the cut only see earlier values
        keep = clean[0].t_index <= cut
        np.testing.assert_array_equal(clean[0].predictions[keep], dirty[0].predictions[keep])


def test_models_share_evaluation_indices(panel):
    net, _, _ = run_seeds(panel, spec())
    sar, _, _ = run_seeds(panel, spec(model="sarima"))
    test_r = split(panel, SMALL_SPLIT)[2]
    np.testing.assert_array_equal(net[0].t_index, evaluation_index(test_r, 15))
    np.testing.assert_array_equal(net[0].t_index, sar[0].t_index)
    np.testing.assert_array_equal(net[0].truth, panel.row("5")[net[0].t_index])


def test_report_structure_and_determinism(panel):
    s = spec(seeds=(0, 1))
    a = run_experiment(panel, s)
    b = run_experiment(panel, s)
    assert a.to_dict() == b.to_dict()
    assert a.seeds == [0, 1]
    assert a.mean("mse") == pytest.approx(np.mean([r["mse"] for r in a.runs]))
    assert ExperimentReport.from_dict(a.to_dict()) == a


def test_sarima_repeats_one_fit_per_seed(panel):
    r = run_experiment(panel, spec(model="sarima", seeds=(0, 1, 2)))
    assert len({run["mse"] for run in r.runs}) == 1
    assert r.std("mse") == 0.0


def test_compare_permutes_columns_only(panel):
    specs = [spec(), spec(model="sarima")]
    fwd = compare(panel, specs)
    rev = compare(panel, specs[::-1])
    assert fwd.names == ["self", "sarima"] and rev.names == ["sarima", "self"]
    for name in fwd.names:
        assert fwd.column(name).to_dict() == rev.column(name).to_dict()


def test_compare_single_column_matches_report(panel):
    s = spec()
    table = compare(panel, [s])
    assert table.reports[0].to_dict() == run_experiment(panel, s).to_dict()
    assert "self (5)" in table.format()


def test_compare_rejects_mixed_targets(panel):
    with pytest.raises(MismatchedTargets):
        compare(panel, [spec(), spec(target="4")])
