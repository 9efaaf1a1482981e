"""File formats: wide panel CSV, key-value run configs, reports and traces."""

from __future__ import annotations

import csv
import io
import json
import math
import os
import tempfile
from dataclasses import dataclass, field, fields
from datetime import datetime, timedelta, timezone
from pathlib import Path

import numpy as np

from .errors import (
    GapTooLarge,
    InvalidConfig,
    IoError,
    IrregularCadence,
    LengthMismatch,
    MalformedCsv,
    NegativeFlow,
    ValidationError,
)
from .nnet import NetConfig
from .pipeline import ComparisonTable, ExperimentReport, ExperimentSpec, SplitSpec
from .sarima import SarimaSpec
from .series import FlowPanel
from .synthgen import ScenarioConfig, default_scenario

REPORT_SCHEMA = "dmaflow.report"
REPORT_VERSION = 1
FILL_POLICIES = ("error", "linear_interpolate")
MAX_INTERPOLATED_GAP = 3
OUTPUT_DIR_ENV = "DMAFLOW_OUTPUT_DIR"


def fmt_float(x: float) -> str:
    return f"{x:.9g}"


def output_path(path) -> Path:
    """Resolve relative output paths against $DMAFLOW_OUTPUT_DIR when it is set."""
    p = Path(path)
    base = os.environ.get(OUTPUT_DIR_ENV)
    if base and not p.is_absolute():
        p = Path(base) / p
    return p


def write_atomic(path, text: str) -> Path:
    """Write via a temp file in the target directory, then rename over ``path``."""
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
        try:
            with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
                fh.write(text)
            os.replace(tmp, path)
        except BaseException:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc
    return path


# ---------------------------------------------------------------- panel CSV

def parse_timestamp(text: str) -> datetime:
    s = text.strip()
    if s.endswith("Z"):
        s = s[:-1] + "+00:00"
    ts = datetime.fromisoformat(s)
    if ts.tzinfo is None:
        ts = ts.replace(tzinfo=timezone.utc)
    return ts.astimezone(timezone.utc)


def format_timestamp(ts: datetime) -> str:
    return ts.astimezone(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


def panel_to_csv(panel: FlowPanel) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["timestamp", *panel.zone_ids])
    step = timedelta(seconds=panel.step_seconds)
    for t in range(panel.n_steps):
        # repr-precision floats so a written panel reads back bit for bit
        w.writerow([format_timestamp(panel.start_time + t * step), *map(repr, panel.values[:, t].tolist())])
    return buf.getvalue()


def write_panel(panel: FlowPanel, path) -> Path:
    return write_atomic(path, panel_to_csv(panel))


def ingest(path, fill_policy: str = "error", max_gap: int | None = None,
           step_seconds: int | None = None) -> FlowPanel:
    """Read a wide panel CSV (``timestamp,<zone>,...``).

    ``max_gap`` is the longest run of consecutive missing rows tolerated: 0
    under the ``error`` policy, up to 3 for ``linear_interpolate``.  The step
    defaults to the most common spacing between rows.
    """
    if fill_policy not in FILL_POLICIES:
        raise InvalidConfig(f"fill_policy must be one of {FILL_POLICIES}, got {fill_policy!r}")
    limit = 0 if fill_policy == "error" else MAX_INTERPOLATED_GAP
    if max_gap is not None:
        limit = min(limit, int(max_gap)) if fill_policy == "linear_interpolate" else int(max_gap)
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from exc

    if not rows:
        raise MalformedCsv(f"{path}: empty file")
    header = [h.strip() for h in rows[0]]
    if len(header) < 2 or header[0] != "timestamp":
        raise MalformedCsv(f"{path}: header must be 'timestamp,<zone_id>,...', got {rows[0]}")
    zones = header[1:]
    if len(set(zones)) != len(zones) or any(not z for z in zones):
        raise MalformedCsv(f"{path}: zone ids in header must be unique and non-empty: {zones}")

    stamps, values = [], []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(header):
            raise MalformedCsv(f"{path}:{lineno}: expected {len(header)} columns, found {len(row)}")
        try:
            stamps.append(parse_timestamp(row[0]))
        except ValueError:
            raise MalformedCsv(f"{path}:{lineno}: bad timestamp {row[0]!r}") from None
        vals = []
        for col, cell in enumerate(row[1:], start=1):
            try:
                v = float(cell)
            except ValueError:
                raise MalformedCsv(f"{path}:{lineno}: column {header[col]!r}: not a number: {cell!r}") from None
            if not math.isfinite(v):
                raise MalformedCsv(f"{path}:{lineno}: column {header[col]!r}: non-finite value {cell!r}")
            if v < 0:
                raise NegativeFlow(f"{path}:{lineno}: zone {header[col]}: negative flow {v}")
            vals.append(v)
        values.append(vals)
    if not stamps:
        raise MalformedCsv(f"{path}: no data rows")

    secs = [(ts - stamps[0]).total_seconds() for ts in stamps]
    diffs = np.diff(secs)
    for i, dt in enumerate(diffs):
        if dt <= 0:
            raise IrregularCadence(f"{path}:{i + 3}: timestamp {format_timestamp(stamps[i + 1])} "
                                   f"does not increase on the previous row")
    if step_seconds is not None:
        step = int(step_seconds)
    elif len(diffs):
        spacings, counts = np.unique(diffs, return_counts=True)
        step = spacings[np.argmax(counts)]
    else:
        step = 300
    if step <= 0 or step != int(step):
        raise IrregularCadence(f"{path}: cadence must be a whole number of seconds, got {step}")
    step = int(step)

    data = np.asarray(values, dtype=float).T
    out_cols = [data[:, :1]]
    for i, dt in enumerate(diffs):
        if dt % step:
            raise IrregularCadence(f"{path}:{i + 3}: gap of {dt:g}s is not a multiple of the {step}s step")
        missing = int(dt // step) - 1
        if missing:
            if missing > limit:
                raise GapTooLarge(f"{path}:{i + 3}: {missing} missing row(s) before "
                                  f"{format_timestamp(stamps[i + 1])} (policy {fill_policy!r} allows {limit})")
            a, b = data[:, i], data[:, i + 1]
            frac = np.arange(1, missing + 1) / (missing + 1)
            out_cols.append(a[:, None] + (b - a)[:, None] * frac[None, :])
        out_cols.append(data[:, i + 1:i + 2])
    return FlowPanel(tuple(zones), np.hstack(out_cols), stamps[0], step)


# ------------------------------------------------------------------ config

def _floats(text: str) -> tuple:
    return tuple(float(v) for v in text.split(",") if v.strip())


def _strings(text: str) -> tuple:
    return tuple(v.strip() for v in text.split(",") if v.strip())


def _ints(text: str) -> tuple:
    return tuple(int(v) for v in text.split(",") if v.strip())


def _matrix(text: str) -> tuple:
    return tuple(_floats(row) for row in text.split(";") if row.strip())


def _bool(text: str) -> bool:
    v = text.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _optional_float(text: str):
    return None if text.strip().lower() in ("", "none") else float(text)


def _optional_strings(text: str):
    return None if text.strip().lower() in ("", "none", "derive") else _strings(text)


SCENARIO_KEYS = {
    "n_zones": int, "months": float, "step_seconds": int, "latent_weights": _matrix,
    "noise_sigma": _floats, "base_scale": _floats, "phase_hours": _floats,
    "nonlinearity": str, "seed": int, "zone_ids": _strings,
}
NET_KEYS = {f.name: (str if f.name == "cell" else type(f.default)) for f in fields(NetConfig)
            if f.name not in ("input_channels", "seed")}
SARIMA_KEYS = {"p": int, "d": int, "q": int, "P": int, "D": int, "Q": int, "s": int,
               "include_mean": _bool}
SPLIT_KEYS = {"train_months": float, "val_months": float, "test_months": float}
EXPERIMENT_KEYS = {"target": str, "mode": str, "model": str, "members": _optional_strings,
                   "theta": _optional_float, "seeds": _ints, "specs": _strings, "panel": str,
                   "fill_policy": str, "max_gap": int, "jobs": int}
SPEC_KEYS = {"mode": str, "model": str, "members": _optional_strings, "theta": _optional_float,
             "cell": str}
TRACE_KEYS = {"day": int, "seed": int}
SECTIONS = {"scenario": SCENARIO_KEYS, "net": NET_KEYS, "sarima": SARIMA_KEYS,
            "split": SPLIT_KEYS, "experiment": EXPERIMENT_KEYS, "trace": TRACE_KEYS}


@dataclass
class RunConfig:
    scenario: ScenarioConfig = field(default_factory=default_scenario)
    net: NetConfig = NetConfig()
    sarima: SarimaSpec = SarimaSpec()
    split: SplitSpec = SplitSpec()
    specs: list = field(default_factory=list)
    panel_path: str | None = None
    fill_policy: str = "error"
    max_gap: int | None = None
    jobs: int = 1
    trace_day: int = 0
    trace_seed: int | None = None
    theta: float | None = None
    target: str = "5"

    def spec(self, name: str | None = None) -> ExperimentSpec:
        if name is None:
            return self.specs[0]
        for s in self.specs:
            if s.name == name:
                return s
        raise InvalidConfig(f"no experiment spec named {name!r}; have {[s.name for s in self.specs]}")

    def with_seeds(self, seeds) -> "RunConfig":
        from dataclasses import replace
        return replace(self, specs=[replace(s, seeds=tuple(seeds)) for s in self.specs],
                       scenario=self.scenario)


def parse_kv(text: str, source: str = "<config>") -> dict:
    out = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise InvalidConfig(f"{source}:{lineno}: expected 'key = value', got {raw.strip()!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise InvalidConfig(f"{source}:{lineno}: empty key")
        if key in out:
            raise InvalidConfig(f"{source}:{lineno}: duplicate key {key!r}")
        out[key] = (value, lineno)
    return out


def _convert(conv, value, key, source, lineno):
    try:
        return conv(value)
    except (TypeError, ValueError) as exc:
        raise InvalidConfig(f"{source}:{lineno}: bad value for {key}: {value!r} ({exc})") from None


def load_config(path) -> RunConfig:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise IoError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text, source=str(path), base_dir=Path(path).parent)


def parse_config(text: str, source: str = "<config>", base_dir: Path | None = None) -> RunConfig:
    entries = parse_kv(text, source)
    sections: dict = {name: {} for name in SECTIONS}
    spec_overrides: dict = {}
    for key, (value, lineno) in entries.items():
        parts = key.split(".")
        if parts[0] == "spec" and len(parts) == 3 and parts[2] in SPEC_KEYS:
            spec_overrides.setdefault(parts[1], {})[parts[2]] = _convert(
                SPEC_KEYS[parts[2]], value, key, source, lineno)
            continue
        if len(parts) != 2 or parts[0] not in SECTIONS or parts[1] not in SECTIONS[parts[0]]:
            raise InvalidConfig(f"{source}:{lineno}: unknown key {key!r}")
        section, name = parts
        sections[section][name] = _convert(SECTIONS[section][name], value, key, source, lineno)

    try:
        scenario = default_scenario(**sections["scenario"])
        net = NetConfig(**sections["net"])
        sarima = SarimaSpec(**sections["sarima"])
        split = SplitSpec(**sections["split"])
    except TypeError as exc:
        raise InvalidConfig(f"{source}: {exc}") from None

    exp = sections["experiment"]
    target = exp.get("target", "5")
    defaults = {"mode": exp.get("mode", "local"), "model": exp.get("model", "cnn_rnn"),
                "members": exp.get("members"), "theta": exp.get("theta")}
    seeds = exp.get("seeds", (0, 1, 2, 3, 4))
    names = list(exp.get("specs", ())) or ([] if not spec_overrides else sorted(spec_overrides))
    unknown = set(spec_overrides) - set(names)
    if unknown:
        raise InvalidConfig(f"{source}: spec.* keys for specs not listed in experiment.specs: {sorted(unknown)}")
    specs = []
    for name in names or [None]:
        fields_ = {**defaults, **spec_overrides.get(name, {})}
        spec_net = net.replace(cell=fields_.pop("cell")) if "cell" in fields_ else net
        specs.append(ExperimentSpec(target=target, net=spec_net, sarima=sarima, split=split,
                                    seeds=seeds, name=name or "", **fields_))

    panel = exp.get("panel")
    if panel and base_dir is not None and not Path(panel).is_absolute():
        panel = str(base_dir / panel)
    fill_policy = exp.get("fill_policy", "error")
    if fill_policy not in FILL_POLICIES:
        raise InvalidConfig(f"{source}: experiment.fill_policy must be one of {FILL_POLICIES}")
    jobs = exp.get("jobs", 1)
    if jobs < 1:
        raise InvalidConfig(f"{source}: experiment.jobs must be >= 1")
    return RunConfig(scenario, net, sarima, split, specs, panel, fill_policy, exp.get("max_gap"),
                     jobs, sections["trace"].get("day", 0), sections["trace"].get("seed"),
                     defaults["theta"], str(target))


# ----------------------------------------------------------------- reports

def _as_reports(report) -> list:
    if isinstance(report, ComparisonTable):
        return list(report.reports)
    if isinstance(report, ExperimentReport):
        return [report]
    return list(report)


def report_to_json(report) -> str:
    doc = {"schema": REPORT_SCHEMA, "version": REPORT_VERSION,
           "experiments": [r.to_dict() for r in _as_reports(report)]}
    return json.dumps(doc, sort_keys=True, indent=2) + "\n"


def report_to_csv(report) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["experiment", "fingerprint", "model", "mode", "members", "seed",
                "mse", "mae", "rmse", "mse_std", "mae_std", "rmse_std"])
    for r in _as_reports(report):
        head = [r.name, r.fingerprint, r.model, r.mode, " ".join(r.members)]
        for run in r.runs:
            w.writerow(head + [run["seed"]] + [fmt_float(run[m]) for m in ("mse", "mae", "rmse")]
                       + ["", "", ""])
        w.writerow(head + ["mean"] + [fmt_float(r.mean(m)) for m in ("mse", "mae", "rmse")]
                   + [fmt_float(r.std(m)) for m in ("mse", "mae", "rmse")])
    return buf.getvalue()


def emit_report(report, fmt: str, path) -> Path:
    if fmt == "json":
        text = report_to_json(report)
    elif fmt == "csv":
        text = report_to_csv(report)
    else:
        raise ValidationError(f"unknown report format {fmt!r}; use json or csv")
    return write_atomic(path, text)


def read_report(path) -> list:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise IoError(f"cannot read report {path}: {exc}") from exc
    if doc.get("schema") != REPORT_SCHEMA or doc.get("version") != REPORT_VERSION:
        raise ValidationError(f"{path}: not a {REPORT_SCHEMA} v{REPORT_VERSION} document")
    return [ExperimentReport.from_dict(d) for d in doc["experiments"]]


def emit_forecast_trace(truth, predictions: dict, window, path, t_index=None) -> Path:
    """Plot-ready CSV ``t,truth,<model>...`` restricted to panel indices in ``window``."""
    truth = np.asarray(truth, dtype=float)
    t_index = np.arange(len(truth)) if t_index is None else np.asarray(t_index)
    if len(t_index) != len(truth):
        raise LengthMismatch(f"{len(t_index)} time indices for {len(truth)} truth values")
    for name, pred in predictions.items():
        if len(pred) != len(truth):
            raise LengthMismatch(f"model {name!r}: {len(pred)} predictions for {len(truth)} truth values")
    window = window if isinstance(window, range) else range(*window)
    keep = (t_index >= window.start) & (t_index < window.stop)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    names = list(predictions)
    w.writerow(["t", "truth", *names])
    preds = [np.asarray(predictions[n], dtype=float) for n in names]
    for i in np.flatnonzero(keep):
        w.writerow([int(t_index[i]), fmt_float(truth[i]), *(fmt_float(p[i]) for p in preds)])
    return write_atomic(path, buf.getvalue())
