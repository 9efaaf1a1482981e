"""Experiment orchestration: splits, forecasting modes, metrics, seed repeats."""

from __future__ import annotations

import hashlib
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from . import sarima as sarima_mod
from .errors import (
    EmptySeries,
    InvalidConfig,
    LengthMismatch,
    MismatchedTargets,
    PanelTooShort,
)
from .nnet import NetConfig, predict_batch, train
from .sarima import SarimaSpec
from .series import (
    MODES,
    FlowPanel,
    build_dataset,
    correlation_matrix,
    feature_zones,
    select_correlated,
    sort_zones,
)
from .synthgen import months_to_steps

log = logging.getLogger(__name__)

MODELS = ("cnn_rnn", "sarima")
METRICS = ("mse", "mae", "rmse")


@dataclass(frozen=True)
class SplitSpec:
    train_months: float = 1.5
    val_months: float = 0.5
    test_months: float = 1.0

    def __post_init__(self):
        for name in ("train_months", "val_months", "test_months"):
            if not getattr(self, name) > 0:
                raise InvalidConfig(f"{name} must be positive, got {getattr(self, name)}")

    def lengths(self, step_seconds: int = 300) -> tuple[int, int, int]:
        return tuple(months_to_steps(m, step_seconds)
                     for m in (self.train_months, self.val_months, self.test_months))


def split(panel: FlowPanel, spec: SplitSpec = SplitSpec(), min_length: int = 1):
    """Contiguous train / validation / test intervals; surplus tail steps are dropped."""
    n_train, n_val, n_test = spec.lengths(panel.step_seconds)
    short = [name for name, n in (("train", n_train), ("validation", n_val), ("test", n_test))
             if n < min_length]
    if short:
        raise PanelTooShort(f"{', '.join(short)} split shorter than the required {min_length} steps")
    need = n_train + n_val + n_test
    if panel.n_steps < need:
        raise PanelTooShort(f"panel has {panel.n_steps} steps, split needs {need}")
    return (range(0, n_train), range(n_train, n_train + n_val),
            range(n_train + n_val, need))


def metrics(y, yhat) -> dict:
    y = np.asarray(y, dtype=float)
    yhat = np.asarray(yhat, dtype=float)
    if y.shape != yhat.shape:
        raise LengthMismatch(f"truth has shape {y.shape}, predictions {yhat.shape}")
    if y.size == 0:
        raise EmptySeries("cannot score empty series")
    err = y - yhat
    mse = float(np.mean(err * err))
    return {"mse": mse, "mae": float(np.mean(np.abs(err))), "rmse": math.sqrt(mse)}


@dataclass(frozen=True)
class MinMaxScaler:
    """Per-zone affine map to [0, 1] over a fitting interval."""

    lo: dict
    hi: dict

    @classmethod
    def fit(cls, panel: FlowPanel, interval: range) -> "MinMaxScaler":
        seg = panel.values[:, interval.start:interval.stop]
        lo = {z: float(seg[i].min()) for i, z in enumerate(panel.zone_ids)}
        hi = {z: float(seg[i].max()) for i, z in enumerate(panel.zone_ids)}
        return cls(lo, hi)

    def _span(self, zone):
        span = self.hi[zone] - self.lo[zone]
        return span if span > 0 else 1.0

    def scale(self, values, zone):
        return (np.asarray(values) - self.lo[zone]) / self._span(zone)

    def unscale(self, values, zone):
        return np.asarray(values) * self._span(zone) + self.lo[zone]

    def scale_inputs(self, inputs, zones):
        out = np.empty_like(inputs)
        for c, z in enumerate(zones):
            out[:, c, :] = self.scale(inputs[:, c, :], z)
        return out


@dataclass(frozen=True)
class ExperimentSpec:
    target: str
    mode: str = "local"
    model: str = "cnn_rnn"
    members: tuple | None = None
    theta: float | None = None
    net: NetConfig = NetConfig()
    sarima: SarimaSpec = SarimaSpec()
    split: SplitSpec = SplitSpec()
    seeds: tuple = (0, 1, 2, 3, 4)
    name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "target", str(self.target))
        if self.mode not in MODES:
            raise InvalidConfig(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.model not in MODELS:
            raise InvalidConfig(f"model must be one of {MODELS}, got {self.model!r}")
        if self.model == "sarima" and self.mode != "local":
            raise InvalidConfig("the SARIMA baseline is univariate; use mode=local")
        if self.members is not None:
            object.__setattr__(self, "members", tuple(sort_zones(str(m) for m in self.members)))
        if self.theta is not None and not 0.0 <= float(self.theta) <= 1.0:
            raise InvalidConfig(f"theta must lie in [0, 1], got {self.theta}")
        if self.mode != "local" and self.members is None and self.theta is None:
            raise InvalidConfig(f"mode {self.mode!r} needs explicit members or a theta to derive them")
        if not self.seeds:
            raise InvalidConfig("seeds must be non-empty")
        object.__setattr__(self, "seeds", tuple(int(s) for s in self.seeds))
        if not self.name:
            object.__setattr__(self, "name", self.default_name())

    def default_name(self) -> str:
        if self.model == "sarima":
            return "sarima"
        return {"local": "self", "local+correlated": "self+corr", "correlated": "corr"}[self.mode]

    def to_dict(self) -> dict:
        d = asdict(self)
        d["members"] = list(self.members) if self.members is not None else None
        d["seeds"] = list(self.seeds)
        return d

    def fingerprint(self, panel: FlowPanel) -> str:
        d = self.to_dict()
        d.pop("name")
        if self.model == "sarima":
            d.pop("net")
        else:
            d.pop("sarima")
        d["panel"] = panel.fingerprint()
        blob = json.dumps(d, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


@dataclass
class ExperimentReport:
    name: str
    target: str
    mode: str
    model: str
    members: tuple
    correlation_set: dict | None
    runs: list
    aggregate: dict
    fingerprint: str
    details: dict = field(default_factory=dict)

    @property
    def seeds(self) -> list:
        return [r["seed"] for r in self.runs]

    def mean(self, metric: str) -> float:
        return self.aggregate[metric]["mean"]

    def std(self, metric: str) -> float:
        return self.aggregate[metric]["std"]

    def to_dict(self) -> dict:
        d = asdict(self)
        d["members"] = list(self.members)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentReport":
        d = dict(d)
        d["members"] = tuple(d["members"])
        return cls(**d)


def aggregate(runs: list) -> dict:
    out = {}
    for m in METRICS:
        vals = np.array([r[m] for r in runs], dtype=float)
        out[m] = {"mean": float(vals.mean()), "std": float(vals.std())}
    return out


def resolve_members(panel: FlowPanel, spec: ExperimentSpec, train_range: range):
    """Members for the spec's mode plus the correlation set they came from, if derived."""
    if spec.members is not None:
        return spec.members, None
    if spec.theta is None:
        return (), None
    matrix = correlation_matrix(panel, train_range)
    cset = select_correlated(matrix, spec.target, spec.theta)
    return cset.members, cset


@dataclass
class SeedResult:
    seed: int
    metrics: dict
    t_index: np.ndarray
    truth: np.ndarray
    predictions: np.ndarray
    info: dict


def evaluation_index(test_range: range, window: int) -> np.ndarray:
    """Panel indices that receive a one-step forecast inside the test interval."""
    return np.arange(test_range.start + window, test_range.stop)


def _run_network(panel, spec, members, ranges, seed) -> SeedResult:
    train_r, val_r, test_r = ranges
    zones = feature_zones(spec.target, members, spec.mode)
    W = spec.net.window
    scaler = MinMaxScaler.fit(panel, train_r)

    def prepared(interval):
        ds = build_dataset(panel, spec.target, members, W, interval, spec.mode)
        return ds.map_values(scaler.scale_inputs(ds.inputs, zones), scaler.scale(ds.targets, spec.target))

    train_ds, val_ds, test_ds = prepared(train_r), prepared(val_r), prepared(test_r)
    config = spec.net.replace(input_channels=len(zones), seed=seed)
    report = train(config, train_ds, val_ds)
    pred = scaler.unscale(predict_batch(report.params, test_ds.inputs), spec.target)
    t_index = test_ds.t_index + 1
    truth = panel.row(spec.target)[t_index]
    info = {"best_epoch": report.best_epoch, "epochs_run": report.epochs_run,
            "best_val_loss": report.best_val_loss}
    log.info("%s seed %d: best epoch %d of %d", spec.name, seed, report.best_epoch, report.epochs_run)
    return SeedResult(seed, metrics(truth, pred), t_index, truth, pred, info)


def _run_sarima(panel, spec, ranges) -> SeedResult:
    train_r, val_r, test_r = ranges
    series = panel.row(spec.target)
    fitted = sarima_mod.fit(spec.sarima, series[train_r.start:val_r.stop])
    t_index = evaluation_index(test_r, spec.net.window)
    pred = sarima_mod.rolling_one_step(fitted, series[:test_r.stop], int(t_index[0]))
    truth = series[t_index]
    return SeedResult(-1, metrics(truth, pred), t_index, truth, pred, {"sarima_fit": fitted.to_dict()})


def _seed_task(args):
    panel, spec, members, ranges, seed = args
    return _run_network(panel, spec, members, ranges, seed)


def run_seeds(panel: FlowPanel, spec: ExperimentSpec, n_jobs: int = 1):
    """Per-seed results plus the members and correlation set used."""
    ranges = split(panel, spec.split, min_length=spec.net.window + 2)
    members, cset = resolve_members(panel, spec, ranges[0])
    if spec.mode == "local":
        members_used = ()
    else:
        members_used = members
        feature_zones(spec.target, members_used, spec.mode)  # fail fast on empty sets

    if spec.model == "sarima":
        base = _run_sarima(panel, spec, ranges)
        # deterministic model: one fit reported once per seed
        results = [replace(base, seed=s) for s in spec.seeds]
    else:
        tasks = [(panel, spec, members_used, ranges, s) for s in spec.seeds]
        if n_jobs > 1 and len(tasks) > 1:
            with ProcessPoolExecutor(max_workers=n_jobs) as pool:
                results = list(pool.map(_seed_task, tasks))
        else:
            results = [_seed_task(t) for t in tasks]
    return results, members_used, cset


def run_experiment(panel: FlowPanel, spec: ExperimentSpec, n_jobs: int = 1,
                   return_results: bool = False):
    results, members, cset = run_seeds(panel, spec, n_jobs)
    runs = [{"seed": r.seed, **r.metrics} for r in results]
    details = {"evaluated_steps": int(len(results[0].t_index)),
               "first_evaluated_index": int(results[0].t_index[0])}
    if spec.model == "sarima":
        details["sarima_fit"] = results[0].info["sarima_fit"]
    else:
        details["best_epochs"] = [r.info["best_epoch"] for r in results]
    report = ExperimentReport(
        name=spec.name,
        target=spec.target,
        mode=spec.mode,
        model=spec.model,
        members=tuple(members),
        correlation_set=(None if cset is None else
                         {"target": cset.target, "theta": cset.threshold, "members": list(cset.members)}),
        runs=runs,
        aggregate=aggregate(runs),
        fingerprint=spec.fingerprint(panel),
        details=details,
    )
    return (report, results) if return_results else report


@dataclass
class ComparisonTable:
    reports: list

    @property
    def names(self) -> list:
        return [r.name for r in self.reports]

    def column(self, name: str) -> ExperimentReport:
        for r in self.reports:
            if r.name == name:
                return r
        raise KeyError(name)

    def rows(self) -> list:
        """(metric, [(mean, std) per column]) in display order."""
        return [(m, [(r.mean(m), r.std(m)) for r in self.reports]) for m in METRICS]

    def format(self) -> str:
        headers = [""] + [self._header(r) for r in self.reports]
        body = [[m.upper()] + [f"{mean:.4f} ({std:.4f})" for mean, std in cells]
                for m, cells in self.rows()]
        body.append(["fingerprint"] + [r.fingerprint for r in self.reports])
        widths = [max(len(row[i]) for row in [headers] + body) for i in range(len(headers))]

        def line(row):
            return " | ".join(cell.ljust(w) for cell, w in zip(row, widths)).rstrip()

        sep = "-+-".join("-" * w for w in widths)
        return "\n".join([line(headers), sep] + [line(r) for r in body])

    @staticmethod
    def _header(report: ExperimentReport) -> str:
        if report.model == "sarima":
            return "SARIMA"
        members = ", ".join(report.members)
        if report.mode == "local":
            return f"self ({report.target})"
        if report.mode == "local+correlated":
            return f"self + corr. ({members})"
        return f"corr. ({members})"


def compare(panel: FlowPanel, specs: list, n_jobs: int = 1) -> ComparisonTable:
    if not specs:
        raise InvalidConfig("compare needs at least one experiment spec")
    targets = {s.target for s in specs}
    if len(targets) > 1:
        raise MismatchedTargets(f"specs forecast different targets: {sorted(targets)}")
    splits = {s.split for s in specs}
    if len(splits) > 1:
        raise MismatchedTargets("specs use different train/validation/test splits")
    names = [s.name for s in specs]
    if len(set(names)) != len(names):
        raise InvalidConfig(f"spec names must be unique, got {names}")
    return ComparisonTable([run_experiment(panel, s, n_jobs) for s in specs])
