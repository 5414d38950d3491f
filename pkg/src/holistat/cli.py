"""``holistat`` command line.

Every subcommand reads a bundle directory (metrics.csv, jobs.csv,
inventory.csv), runs one stage and writes its artifacts to ``--out``.
Failures print one JSON object to stderr and exit nonzero.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import pipeline
from .config import RunConfig, parse_time
from .errors import HolistatError, InvalidInput, TraceFormatError
from .model import TraceBundle
from .parallel import resolve_workers
from .storage import COMPRESSORS, EXTENSION, write_hstrace
from .synth import PRESETS, GeneratorSpec, gen_bundle
from .traceio import (INVENTORY_FILE, JOBS_FILE, METRICS_FILE, read_bundle, read_inventory, read_jobs,
                      read_metrics, write_bundle)

EXIT_INPUT = 2
EXIT_IO = 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _ints(text):
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _strs(text):
    return [x.strip() for x in text.split(",") if x.strip()]


def build_parser():
    p = _Parser(prog="holistat", description="Datacenter telemetry and workload trace analysis.")
    p.add_argument("--config", help="JSON or TOML RunConfig file")
    p.add_argument("--workers", type=int, help="worker processes (HOLISTAT_WORKERS overrides)")
    p.add_argument("--seed", type=int)
    p.add_argument("--log-level", default="WARNING")
    sub = p.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    sub.required = True

    def stage(name, help_text, needs_input=True):
        sp = sub.add_parser(name, help=help_text)
        if needs_input:
            sp.add_argument("--input", "-i", required=True, help="bundle directory")
            sp.add_argument("--base-interval", type=int, help="sampling interval in seconds (default: inferred)")
        sp.add_argument("--out", "-o", required=True, help="output directory")
        return sp

    sp = stage("ingest", "validate trace files and write a normalized bundle", needs_input=False)
    sp.add_argument("--metrics", required=True)
    sp.add_argument("--jobs")
    sp.add_argument("--inventory")
    sp.add_argument("--base-interval", type=int)

    sp = stage("clean", "drop missing samples, constant series and out-of-scope jobs")
    sp.add_argument("--start", help="window start (epoch or ISO date)")
    sp.add_argument("--end", help="window end (epoch or ISO date)")
    sp.add_argument("--exclude-racks", type=_strs)

    sp = stage("correlate", "daily all-pairs correlation and cross-day persistence")
    sp.add_argument("--days", type=_strs, help="comma-separated ISO days (default: all full days)")
    sp.add_argument("--method", choices=["pearson", "spearman", "kendall"])
    sp.add_argument("--threshold", type=float, help="strong-pair threshold")
    sp.add_argument("--bin", type=int, help="resample to this bin width first")

    sp = stage("anomaly", "moving Z-score anomaly detection")
    sp.add_argument("--metric")
    sp.add_argument("--percentile", type=float)
    sp.add_argument("--window", type=int)
    sp.add_argument("--bin", type=int, help="resample bin width (0 keeps raw samples)")
    sp.add_argument("--global", dest="pooled", action="store_true", default=None,
                    help="one threshold pooled across all series")
    sp.add_argument("--slack", type=int, help="seconds of slack when joining with failed jobs")

    sp = stage("characterize", "workload statistics, intensity heatmap and rack comparison")
    sp.add_argument("--pivot", help="period split date")
    sp.add_argument("--tz-offset", type=int, help="seconds east of UTC for hour/weekday grouping")

    sp = stage("predict", "LSTM sampling-granularity study")
    sp.add_argument("--granularities", type=_ints)
    sp.add_argument("--metrics", type=_strs, help="input features; the first is the target")
    sp.add_argument("--nodes", type=_strs)
    sp.add_argument("--hidden", type=int)
    sp.add_argument("--epochs", type=int)
    sp.add_argument("--patience", type=int)
    sp.add_argument("--lr", type=float)
    sp.add_argument("--save-models", action="store_true", default=None)

    sp = stage("storage", "compressed storage growth across granularities")
    sp.add_argument("--granularities", type=_ints)
    sp.add_argument("--compressor", choices=sorted(COMPRESSORS))
    sp.add_argument("--metrics", type=_strs)

    sp = stage("synth", "generate a synthetic bundle with ground truth", needs_input=False)
    sp.add_argument("--spec", help="GeneratorSpec JSON/TOML file")
    sp.add_argument("--preset", choices=sorted(PRESETS), default="default")
    sp.add_argument("--days", type=int)

    sp = stage("report", "run every stage into one directory with an index")
    sp.add_argument("--skip", type=_strs, default=[], help=f"stages to skip ({','.join(pipeline.STAGES)})")

    for sp in sub.choices.values():
        sp.add_argument("--drop-partial", action="store_true", default=None,
                        help="drop incomplete first/last resample bins")
    return p


# flag name -> RunConfig field, per subcommand
_OVERRIDES = {
    "clean": {"exclude_racks": "exclude_racks"},
    "correlate": {"days": "days", "method": "correlation_method", "threshold": "spearman_strong",
                  "bin": "correlation_bin"},
    "anomaly": {"metric": "anomaly_metric", "percentile": "anomaly_percentile", "window": "zscore_window",
                "bin": "anomaly_bin", "pooled": "anomaly_global", "slack": "anomaly_slack"},
    "characterize": {"pivot": "pivot", "tz_offset": "tz_offset"},
    "predict": {"granularities": "granularities", "metrics": "predict_metrics", "nodes": "predict_nodes",
                "hidden": "hidden_size", "epochs": "max_epochs", "patience": "patience", "lr": "learning_rate",
                "save_models": "save_models"},
    "storage": {"granularities": "granularities", "compressor": "storage_compressor",
                "metrics": "storage_metrics"},
}


def make_config(args) -> RunConfig:
    cfg = RunConfig.load(args.config) if args.config else RunConfig()
    for flag, name in _OVERRIDES.get(args.command, {}).items():
        value = getattr(args, flag, None)
        if value is not None:
            setattr(cfg, name, value)
    if args.seed is not None:
        cfg.seed = args.seed
    if getattr(args, "drop_partial", None):
        cfg.drop_partial = True
    cfg.workers = resolve_workers(args.workers if args.workers is not None else cfg.workers)
    return cfg.validate()


def _load(args):
    return read_bundle(args.input, args.base_interval)


def cmd_ingest(args, cfg):
    series = read_metrics(args.metrics, args.base_interval)
    jobs = read_jobs(args.jobs) if args.jobs else []
    inventory = read_inventory(args.inventory) if args.inventory else {}
    bundle = TraceBundle(series, jobs, inventory)
    try:
        bundle.validate()
    except HolistatError as exc:
        raise TraceFormatError(str(exc), args.jobs or args.metrics) from None
    files, report = pipeline.run_clean(bundle, cfg, args.out)
    write_hstrace(Path(args.out) / f"trace{EXTENSION}", [bundle.series[k] for k in bundle.sorted_keys()])
    return {"files": files + [f"trace{EXTENSION}"], "clean_report": report.to_dict()}


def cmd_clean(args, cfg):
    bundle = _load(args)
    window = None
    if args.start is not None or args.end is not None:
        lo, hi = bundle.time_span()
        window = (parse_time(args.start) if args.start is not None else lo,
                  parse_time(args.end) if args.end is not None else hi + 1)
        if window[0] >= window[1]:
            raise InvalidInput("clean window is empty (start >= end)")
    files, report = pipeline.run_clean(bundle, cfg, args.out, window)
    return {"files": files, "clean_report": report.to_dict()}


def cmd_correlate(args, cfg):
    files, common = pipeline.run_correlate(_load(args), cfg, args.out)
    return {"files": files, "persistent_pairs": len(common)}


def cmd_anomaly(args, cfg):
    files, reports = pipeline.run_anomaly(_load(args), cfg, args.out)
    return {"files": files, "flagged": sum(len(r.flagged) for r in reports)}


def cmd_characterize(args, cfg):
    files, summary = pipeline.run_characterize(_load(args), cfg, args.out)
    return {"files": files}


def cmd_predict(args, cfg):
    files, table = pipeline.run_predict(_load(args), cfg, args.out)
    return {"files": files, "rows": len(table.losses)}


def cmd_storage(args, cfg):
    files, report = pipeline.run_storage(_load(args), cfg, args.out)
    return {"files": files, "sample_ratio": report.sample_ratio, "compressed_ratio": report.compressed_ratio}


def cmd_synth(args, cfg):
    if args.spec:
        spec = GeneratorSpec.load(args.spec)
        if args.seed is not None:
            spec.seed = args.seed
        if args.days is not None:
            spec.days = args.days
    else:
        kw = {"seed": cfg.seed}
        if args.days is not None:
            kw["days"] = args.days
        spec = PRESETS[args.preset](**kw)
    bundle, truth = gen_bundle(spec)
    truth["spec"] = spec.to_dict()
    write_bundle(args.out, bundle, truth)
    return {"files": [METRICS_FILE, JOBS_FILE, INVENTORY_FILE, "ground_truth.json"],
            "series": len(bundle.series), "jobs": len(bundle.jobs)}


def cmd_report(args, cfg):
    bad = set(args.skip) - set(pipeline.STAGES)
    if bad:
        raise InvalidInput(f"unknown stage(s) to skip: {sorted(bad)}")
    index = pipeline.run_report(_load(args), cfg, args.out, skip=args.skip)
    failed = {k: v["message"] for k, v in index["stages"].items() if v["status"] == "error"}
    return {"files": ["index.json"], "failed_stages": failed}


COMMANDS = {
    "ingest": cmd_ingest, "clean": cmd_clean, "correlate": cmd_correlate, "anomaly": cmd_anomaly,
    "characterize": cmd_characterize, "predict": cmd_predict, "storage": cmd_storage, "synth": cmd_synth,
    "report": cmd_report,
}


def _fail(kind, message, code, **extra):
    payload = {"error": kind, "message": message}
    payload.update(extra)
    print(json.dumps(payload, sort_keys=True), file=sys.stderr)
    return code


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        return _fail("usage", str(exc), EXIT_INPUT, usage=parser.format_usage().strip())
    logging.basicConfig(level=getattr(logging, str(args.log_level).upper(), logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = make_config(args)
        result = COMMANDS[args.command](args, cfg)
    except TraceFormatError as exc:
        payload = exc.to_dict()
        return _fail(payload.pop("error"), payload.pop("message"), EXIT_INPUT, **payload)
    except HolistatError as exc:
        return _fail(type(exc).__name__, str(exc), EXIT_INPUT)
    except (ValueError, TypeError) as exc:
        return _fail("config", str(exc), EXIT_INPUT)
    except OSError as exc:
        return _fail("io", str(exc), EXIT_IO, file=getattr(exc, "filename", None))
    print(json.dumps({"command": args.command, "out": args.out, **result}, sort_keys=True, default=str))
    return 0


if __name__ == "__main__":
    sys.exit(main())
