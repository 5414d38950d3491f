"""Subcommand bodies: read a bundle, run one analysis stage, write its artifacts.

Every ``run_*`` function returns the list of files it wrote, relative to its
output directory.  CSV and JSON artifacts are byte-stable for a fixed config.
"""

from __future__ import annotations

import hashlib
import logging
from collections import Counter
from pathlib import Path

import numpy as np

from . import characterize as ch
from . import plots
from .anomaly import detect_anomalies, detect_anomalies_pooled
from .cleanup import clean_bundle
from .config import RunConfig
from .correlation import Method, daily_correlations, key_label, persistent_pairs
from .errors import HolistatError, InvalidInput
from .model import (HOUR, JobState, TraceBundle, classify_intensity, cluster_load_utilization, hourly_max_class,
                    normalize_p99_clip, resample)
from .predictor import granularity_study
from .storage import EXTENSION, compression_study, write_hstrace
from .traceio import write_bundle, write_csv, write_json

log = logging.getLogger(__name__)


class Artifacts:
    def __init__(self, out):
        self.out = Path(out)
        self.out.mkdir(parents=True, exist_ok=True)
        self.files = []

    def path(self, name):
        p = self.out / name
        p.parent.mkdir(parents=True, exist_ok=True)
        self.files.append(name)
        return p

    def csv(self, name, header, rows):
        write_csv(self.path(name), header, rows)

    def json(self, name, obj):
        write_json(self.path(name), obj)


def resample_bundle(bundle: TraceBundle, bin_width, drop_partial=False) -> TraceBundle:
    return TraceBundle({k: resample(s, bin_width, drop_partial) for k, s in bundle.series.items()},
                       bundle.jobs, bundle.inventory)


def _label(pair):
    return [key_label(pair[0]), key_label(pair[1])]


# -- clean -------------------------------------------------------------------

def run_clean(bundle, cfg: RunConfig, out, window=None):
    valid = None
    if cfg.exclude_racks:
        excluded = set(cfg.exclude_racks)
        valid = {n for n, info in bundle.inventory.items() if info.rack_id not in excluded}
    cleaned, report = clean_bundle(bundle, window=window, valid_nodes=valid)
    art = Artifacts(out)
    write_bundle(art.out, cleaned)
    art.files += ["metrics.csv", "jobs.csv", "inventory.csv"]
    art.json("clean_report.json", report.to_dict())
    return art.files, report


# -- correlate -----------------------------------------------------------------

def run_correlate(bundle, cfg: RunConfig, out):
    art = Artifacts(out)
    if cfg.correlation_bin:
        bundle = resample_bundle(bundle, cfg.correlation_bin, cfg.drop_partial)
    method = Method(cfg.correlation_method)
    by_day, daily = daily_correlations(bundle, cfg.day_list(), method, cfg.spearman_strong, cfg.workers)
    header = ["metric_a", "metric_b", "method", "coefficient", "p_value", "n"]
    for day, results in by_day.items():
        art.csv(f"correlations/{day.isoformat()}.csv", header, [r.row() for r in results])
    if not daily:
        raise InvalidInput("no days to correlate")
    counts, common = persistent_pairs(daily)
    union = set().union(*(d.strong_pairs for d in daily))
    art.csv("persistence.csv", ["day", "strong_pairs", "persistent_pairs"],
            [(d.isoformat(), c, len(common)) for d, c in counts])
    art.json("persistence.json", {
        "method": method.value,
        "threshold": cfg.spearman_strong,
        "days": [d.isoformat() for d, _ in counts],
        "per_day_counts": {d.isoformat(): c for d, c in counts},
        "persistent_pairs": [_label(p) for p in common],
        "persistent_count": len(common),
        "unique_strong_pairs": len(union),
    })
    plots.line_svg(art.path("persistence.svg"), [d.isoformat() for d, _ in counts],
                   {"strong pairs": [c for _, c in counts], "present on all days": [len(common)] * len(counts)},
                   "day", "pairs")
    return art.files, common


# -- anomaly -------------------------------------------------------------------

def run_anomaly(bundle, cfg: RunConfig, out):
    art = Artifacts(out)
    series = []
    for s in bundle.metric(cfg.anomaly_metric):
        r = resample(s, cfg.anomaly_bin, cfg.drop_partial) if cfg.anomaly_bin else s
        if int(r.present.sum()) > cfg.zscore_window:
            series.append(r)
        else:
            log.warning("%s too short for z-score window %d; skipped", s.key, cfg.zscore_window)
    if cfg.anomaly_global and series:
        reports = detect_anomalies_pooled(series, cfg.zscore_window, cfg.anomaly_percentile)
    else:
        reports = [detect_anomalies(s, cfg.zscore_window, cfg.anomaly_percentile) for s in series]
    art.json("anomalies.json", {
        "metric": cfg.anomaly_metric,
        "window": cfg.zscore_window,
        "bin_width": cfg.anomaly_bin,
        "pooled_threshold": cfg.anomaly_global,
        "reports": [r.to_dict() for r in reports],
        "total_flagged": sum(len(r.flagged) for r in reports),
    })
    rows = [(r.key[0], r.key[1], t) for r in reports for t in r.flagged]
    art.csv("anomalies.csv", ["node", "metric", "timestamp"], rows)
    join_rows = []
    for r in reports:
        for t, hits in ch.join_anomalies_jobs(r.flagged, bundle.jobs, cfg.anomaly_slack):
            join_rows.append((r.key[0], t, len(hits), ";".join(j.job_id for j in hits)))
    art.csv("anomaly_jobs.csv", ["node", "timestamp", "failed_jobs", "job_ids"], join_rows)
    return art.files, reports


# -- characterize -------------------------------------------------------------

def _arrival_intensity(jobs, base=15):
    stamps = np.array(sorted(j.submit_time for j in jobs), dtype=np.int64)
    slots = stamps // base
    first, last = int(slots[0]), int(slots[-1])
    counts = np.bincount(slots - first, minlength=last - first + 1).astype(np.float64)
    norm = normalize_p99_clip(counts) if np.percentile(counts, 99) > 0 else np.minimum(counts, 1.0)
    hours = {}
    for i, v in enumerate(norm.tolist()):
        h = (first + i) * base // HOUR
        if v > hours.get(h, -1.0):
            hours[h] = v
    return [(h * HOUR, _class_or_none(hours.get(h))) for h in range(min(hours), max(hours) + 1)]


def _class_or_none(v):
    return None if v is None else classify_intensity(v)


def run_characterize(bundle, cfg: RunConfig, out):
    art = Artifacts(out)
    summary = {}
    jobs = bundle.jobs
    if jobs:
        completed = [j for j in jobs if j.state is JobState.COMPLETED]
        if completed:
            curve, below = ch.duration_stats(jobs)
            art.csv("duration_ecdf.csv", ["runtime_seconds", "fraction"], zip(curve.values, curve.fractions))
            plots.ecdf_svg(art.path("duration_ecdf.svg"), list(curve.values), list(curve.fractions),
                           "runtime [s] (completed jobs)")
            summary["completed_fraction_below_300s"] = below(300)
        hist = ch.core_histogram(jobs)
        rows = [(e, c) for e, c in zip(hist.bin_edges, hist.counts) if c]
        art.csv("core_histogram.csv", ["cores", "jobs"], rows)
        plots.bar_svg(art.path("core_histogram.svg"), [r[0] for r in rows], [r[1] for r in rows], "cores", "jobs")
        summary["core_mode"] = hist.mode()
        for key, name in ((ch.GroupKey.HOUR_OF_DAY, "hour"), (ch.GroupKey.DAY_OF_WEEK, "dow"),
                          (ch.GroupKey.CALENDAR_DAY, "day")):
            rows = ch.arrivals_grouped(jobs, key, cfg.tz_offset)
            art.csv(f"arrivals_{name}.csv", [name, "count", "mean"], rows)
            if key is ch.GroupKey.HOUR_OF_DAY:
                plots.bar_svg(art.path("arrivals_hour.svg"), [r[0] for r in rows], [r[2] for r in rows],
                              "hour of day", "mean submitted jobs")
            if key is ch.GroupKey.CALENDAR_DAY:
                summary["max_jobs_single_day"] = max(r[1] for r in rows)
        cov = ch.cov_per_user(jobs)
        art.csv("cov_per_user.csv", ["user", "cov", "singleton"], [(u, c, int(s)) for u, c, s in cov])
        summary["max_user_cov"] = max(c for _, c, _ in cov)
        fr = ch.state_fractions(jobs)
        art.csv("state_fractions.csv", ["state", "fraction"], [(s.value, f) for s, f in fr.items()])
        summary["state_fractions"] = {s.value: f for s, f in fr.items()}
        labels, table = ch.runtime_by_length_and_state(jobs)
        states = [s for s in JobState if any(s in row for row in table)]
        art.csv("runtime_by_length_state.csv", ["length_bin"] + [s.value for s in states],
                [[lab] + [row.get(s, 0) for s in states] for lab, row in zip(labels, table)])
        plots.stacked_bar_svg(art.path("runtime_by_length_state.svg"), labels,
                              {s.value: [row.get(s, 0) / 3600 for row in table] for s in states}, "runtime [h]")
        cpu = ch.cpu_hours_per_day(jobs)
        art.csv("cpu_hours_per_day.csv", ["day", "core_hours"], [(d.isoformat(), v) for d, v in cpu])
        plots.line_svg(art.path("cpu_hours_per_day.svg"), [d.isoformat() for d, _ in cpu],
                       {"core-hours": [v for _, v in cpu]}, "day", "core-hours")
    # heatmap rows: job arrivals and cluster load
    heat = {}
    if jobs:
        heat["job_arrivals"] = _arrival_intensity(jobs)
    load = bundle.metric("node_load1")
    if load and all(s.node_id in bundle.inventory for s in load):
        util = cluster_load_utilization(load, bundle.inventory)
        heat["cluster_load1"] = hourly_max_class(util)
    if heat:
        rows = [(name, t, "" if c is None else c.label) for name, cells in heat.items() for t, c in cells]
        art.csv("intensity_heatmap.csv", ["row", "hour_start", "class"], rows)
        share_rows = []
        for name, cells in heat.items():
            known = [c for _, c in cells if c is not None]
            counts = Counter(known)
            for c in sorted(counts):
                share_rows.append((name, c.label, counts[c] / len(known)))
        art.csv("intensity_share.csv", ["row", "class", "fraction_of_hours"], share_rows)
        plots.heatmap_svg(art.path("intensity_heatmap.svg"), list(heat),
                          [[None if c is None else int(c) for _, c in cells] for cells in heat.values()])
    # per-rack distributions and the period comparison
    metrics = [m for m in cfg.period_metrics if bundle.metric(m)]
    if metrics and bundle.inventory:
        rows = []
        for m in metrics:
            series = [s for s in bundle.metric(m) if s.node_id in bundle.inventory]
            for rack, vals in sorted(ch.rack_values(series, bundle.inventory).items()):
                if vals.size == 0:
                    continue
                b = ch.boxplot_stats(vals)
                std = float(vals.std(ddof=1)) if vals.size > 1 else 0.0
                rows.append((m, rack, b.n, b.mean, std, b.q1, b.median, b.q3, b.whisker_low, b.whisker_high,
                             len(b.outliers)))
        art.csv("rack_stats.csv", ["metric", "rack", "n", "mean", "std", "q1", "median", "q3", "whisker_low",
                                   "whisker_high", "outliers"], rows)
        pivot = cfg.pivot_epoch()
        prow = ch.period_compare(bundle, pivot, metrics)
        art.csv("period_compare.csv", ["metric", "rack", "before_mean", "before_std", "after_mean", "after_std",
                                       "delta"],
                [(p.metric, p.rack, _opt(p.before_mean), _opt(p.before_std), _opt(p.after_mean),
                  _opt(p.after_std), _opt(p.delta)) for p in prow])
    art.json("summary.json", summary)
    return art.files, summary


def _opt(v):
    return "" if v is None else float(v)


# -- predict ------------------------------------------------------------------

def predictor_inputs(bundle, metrics, nodes=None):
    nodes_with = None
    for m in metrics:
        have = {s.node_id for s in bundle.metric(m)}
        nodes_with = have if nodes_with is None else nodes_with & have
    chosen = sorted(nodes_with or ())
    if nodes is not None:
        chosen = [n for n in chosen if n in set(nodes)]
    return {n: [bundle.series[(n, m)] for m in metrics] for n in chosen}


def run_predict(bundle, cfg: RunConfig, out):
    art = Artifacts(out)
    inputs = predictor_inputs(bundle, cfg.predict_metrics, cfg.predict_nodes)
    if not inputs:
        raise InvalidInput(f"no node carries all of {cfg.predict_metrics}")
    table = granularity_study(inputs, cfg.granularities, cfg.train_config(), cfg.workers)
    gs = table.granularities
    art.csv("study.csv", ["node"] + [f"loss_{g}s" for g in gs] + ["best"],
            [[node] + losses + [";".join(f"{g}s" for g in best)] for node, losses, best in table.rows()])
    art.json("study.json", {
        "metrics": cfg.predict_metrics,
        "granularities": gs,
        "config": cfg.train_config().__dict__,
        "losses": {n: {f"{g}s": table.losses[n][g] for g in gs} for n in sorted(table.losses)},
        "best": {n: [f"{g}s" for g in table.best(n)] for n in sorted(table.losses)},
        "epochs": {f"{n}/{g}s": len(h) - 1 for (n, g), h in sorted(table.histories.items())},
    })
    if cfg.save_models:
        for (node, g), model in sorted(table.models.items()):
            art.json(f"models/{node}_{g}s.json", model.to_dict(cfg.train_config()))
    return art.files, table


# -- storage ------------------------------------------------------------------

def run_storage(bundle, cfg: RunConfig, out):
    art = Artifacts(out)
    keys = bundle.sorted_keys()
    if cfg.storage_metrics:
        keys = [k for k in keys if k[1] in set(cfg.storage_metrics)]
    series = [bundle.series[k] for k in keys]
    if not series:
        raise InvalidInput("no series selected for the storage probe")
    report = compression_study(series, cfg.granularities, cfg.storage_compressor)
    for g in report_granularities(report):
        write_hstrace(art.path(f"traces/trace_{g}s{EXTENSION}"), [resample(s, g) for s in series])
    art.json("storage_report.json", report.to_dict())
    art.csv("storage_report.csv", ["granularity", "samples", "raw_bytes", "compressed_bytes"],
            [(e.granularity, e.samples, e.raw_bytes, e.compressed_bytes) for e in report.entries])
    return art.files, report


def report_granularities(report):
    return [e.granularity for e in report.entries]


# -- report -------------------------------------------------------------------

STAGES = ("correlate", "anomaly", "characterize", "predict", "storage")
_RUNNERS = {"correlate": run_correlate, "anomaly": run_anomaly, "characterize": run_characterize,
            "predict": run_predict, "storage": run_storage}


def run_report(bundle, cfg: RunConfig, out, skip=()):
    """Run every stage into its own sub-directory and index the results."""
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    # the worker count changes scheduling only, never results
    settings = {k: v for k, v in cfg.to_dict().items() if k != "workers"}
    index = {"config": settings, "stages": {}}
    for stage in STAGES:
        if stage in skip:
            index["stages"][stage] = {"status": "skipped"}
            continue
        try:
            files, _ = _RUNNERS[stage](bundle, cfg, out / stage)
        except HolistatError as exc:
            index["stages"][stage] = {"status": "error", "message": str(exc)}
            continue
        entries = []
        for name in sorted(set(files)):
            p = out / stage / name
            entry = {"path": f"{stage}/{name}", "bytes": p.stat().st_size}
            if p.suffix in (".csv", ".json"):
                entry["sha256"] = hashlib.sha256(p.read_bytes()).hexdigest()
            entries.append(entry)
        index["stages"][stage] = {"status": "ok", "artifacts": entries}
    write_json(out / "index.json", index)
    return index
