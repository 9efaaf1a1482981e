"""Command-line front end.

    dmaflow generate  --config CFG --out panel.csv
    dmaflow correlate panel.csv [--range A:B] [--theta X] [--out corr.json]
    dmaflow run       --config CFG [--panel P] [--spec NAME] --out report.json
    dmaflow compare   --config CFG [--panel P] --out table.csv --format csv
    dmaflow trace     --config CFG [--panel P] [--day N] --out trace.csv

Exit status: 0 on success, 1 on invalid input or usage, 2 on runtime failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace

import numpy as np

from . import io as dio
from .errors import DmaflowError, ValidationError
from .pipeline import compare, run_experiment, split
from .series import as_range, correlation_matrix, select_correlated
from .synthgen import generate

log = logging.getLogger("dmaflow")


class UsageError(ValidationError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{message}\n{self.format_usage().rstrip()}")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key = value run configuration")
    common.add_argument("--seed", type=int, help="override the scenario seed (generate) or run a single seed")
    common.add_argument("--out", help="output file; relative paths honour $DMAFLOW_OUTPUT_DIR")
    common.add_argument("--format", choices=("json", "csv"), default="json")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = _Parser(prog="dmaflow", description="Per-zone water consumption forecasting.")
    sub = parser.add_subparsers(dest="command", metavar="{generate,correlate,run,compare,trace}",
                                parser_class=_Parser)
    sub.required = True

    sub.add_parser("generate", parents=[common], help="write a synthetic panel CSV")

    p = sub.add_parser("correlate", parents=[common], help="correlation matrix and correlation sets")
    p.add_argument("panel", help="panel CSV")
    p.add_argument("--range", dest="interval", help="index interval A:B (default: training split)")
    p.add_argument("--theta", type=float, help="selection threshold (default: config or 0.95)")
    p.add_argument("--target", help="only report this zone's correlation set")

    for name, text in (("run", "run one experiment spec"), ("compare", "run every spec and tabulate"),
                       ("trace", "write a day-long forecast trace")):
        p = sub.add_parser(name, parents=[common], help=text)
        p.add_argument("--panel", help="panel CSV (default: experiment.panel or a generated scenario)")
        p.add_argument("--jobs", type=int, help="parallel seed workers")
        if name == "run":
            p.add_argument("--spec", help="spec name (default: the first)")
        if name == "trace":
            p.add_argument("--day", type=int, help="day offset inside the test interval")
    return parser


def _config(args) -> dio.RunConfig:
    cfg = dio.load_config(args.config) if args.config else dio.parse_config("", "<defaults>")
    if args.seed is not None and args.command != "generate":
        cfg = cfg.with_seeds([args.seed])
    return cfg


def _panel(args, cfg):
    path = getattr(args, "panel", None) or cfg.panel_path
    if path:
        return dio.ingest(path, cfg.fill_policy, cfg.max_gap)
    return generate(cfg.scenario)


def _emit(args, obj):
    if args.out:
        dio.emit_report(obj, args.format, dio.output_path(args.out))


def cmd_generate(args) -> int:
    cfg = _config(args)
    scenario = cfg.scenario if args.seed is None else cfg.scenario.replace(seed=args.seed)
    panel = generate(scenario)
    if not args.out:
        raise UsageError("generate needs --out")
    path = dio.write_panel(panel, dio.output_path(args.out))
    print(f"wrote {panel.n_zones} zones x {panel.n_steps} steps to {path}")
    return 0


def cmd_correlate(args) -> int:
    cfg = dio.load_config(args.config) if args.config else None
    panel = dio.ingest(args.panel, cfg.fill_policy if cfg else "error", cfg.max_gap if cfg else None)
    if args.interval:
        try:
            a, b = (int(v) for v in args.interval.split(":"))
        except ValueError:
            raise UsageError(f"--range must look like START:STOP, got {args.interval!r}") from None
        interval = as_range((a, b), panel.n_steps)
    else:
        try:
            interval = split(panel, cfg.split if cfg else dio.SplitSpec())[0]
        except DmaflowError:
            interval = range(panel.n_steps)
    theta = args.theta if args.theta is not None else (cfg.theta if cfg and cfg.theta is not None else 0.95)
    matrix = correlation_matrix(panel, interval)
    zones = [args.target] if args.target else list(panel.zone_ids)
    sets = {z: list(select_correlated(matrix, z, theta).members) for z in zones}

    width = max(6, *(len(z) for z in panel.zone_ids))
    print(f"Pearson correlation over steps [{interval.start}, {interval.stop})")
    print(" " * width + "".join(z.rjust(8) for z in panel.zone_ids))
    for i, z in enumerate(panel.zone_ids):
        print(z.rjust(width) + "".join(f"{v:8.3f}" for v in matrix.rho[i]))
    print(f"correlation sets at theta = {theta:g}")
    for z, members in sets.items():
        print(f"  {z}: {{{', '.join(members)}}}")
    if args.out:
        doc = {"zone_ids": list(panel.zone_ids), "range": [interval.start, interval.stop],
               "rho": matrix.rho.tolist(), "theta": theta, "sets": sets}
        dio.write_atomic(dio.output_path(args.out), json.dumps(doc, sort_keys=True, indent=2) + "\n")
    return 0


def _jobs(args, cfg):
    return args.jobs if args.jobs else cfg.jobs


def cmd_run(args) -> int:
    cfg = _config(args)
    panel = _panel(args, cfg)
    spec = cfg.spec(args.spec)
    report = run_experiment(panel, spec, _jobs(args, cfg))
    for run in report.runs:
        print(f"{report.name} seed {run['seed']}: mse {run['mse']:.4f} mae {run['mae']:.4f} rmse {run['rmse']:.4f}")
    agg = report.aggregate
    print(f"{report.name} mean (std): " + "  ".join(
        f"{m} {agg[m]['mean']:.4f} ({agg[m]['std']:.4f})" for m in ("mse", "mae", "rmse")))
    if report.members:
        print(f"members: {', '.join(report.members)}")
    _emit(args, report)
    return 0


def cmd_compare(args) -> int:
    cfg = _config(args)
    panel = _panel(args, cfg)
    table = compare(panel, cfg.specs, _jobs(args, cfg))
    print(table.format())
    _emit(args, table)
    return 0


def cmd_trace(args) -> int:
    from .pipeline import run_seeds

    cfg = _config(args)
    panel = _panel(args, cfg)
    seed = cfg.trace_seed if cfg.trace_seed is not None else cfg.specs[0].seeds[0]
    day = args.day if args.day is not None else cfg.trace_day
    per_day = 86400 // panel.step_seconds
    predictions = {}
    t_index = truth = None
    for spec in cfg.specs:
        results, _, _ = run_seeds(panel, replace(spec, seeds=(seed,)), 1)
        res = results[0]
        if t_index is None:
            t_index, truth = res.t_index, res.truth
        elif not np.array_equal(res.t_index, t_index):
            raise ValidationError("specs evaluate different test indices; use one window size")
        predictions[spec.name] = res.predictions
    start = int(t_index[0]) + day * per_day
    window = range(start, start + per_day)
    if window.stop > int(t_index[-1]) + 1:
        raise ValidationError(f"day {day} runs past the end of the test interval")
    if not args.out:
        raise UsageError("trace needs --out")
    path = dio.emit_forecast_trace(truth, predictions, window, dio.output_path(args.out), t_index)
    print(f"wrote {len(window)} rows ({', '.join(predictions) or 'truth only'}) to {path}")
    return 0


COMMANDS = {"generate": cmd_generate, "correlate": cmd_correlate, "run": cmd_run,
            "compare": cmd_compare, "trace": cmd_trace}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"dmaflow: error: {exc}", file=sys.stderr)
        return 1
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        return COMMANDS[args.command](args)
    except ValidationError as exc:
        print(f"dmaflow: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    except (DmaflowError, OSError, ArithmeticError) as exc:
        print(f"dmaflow: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
