"""CSV trace format: metrics, jobs and inventory files plus bundle directories.

metrics.csv    timestamp,node,metric,value          (empty value = missing)
jobs.csv       job_id,user_id,submit,start,end,cores,state,is_ml,nodes   (nodes ';'-separated)
inventory.csv  node,rack,cores,is_ml
"""

from __future__ import annotations

import csv
import json
import math
import os
from collections import defaultdict
from functools import reduce
from pathlib import Path

import numpy as np

from .errors import HolistatError, TraceFormatError
from .model import DEFAULT_BASE_INTERVAL, JobRecord, JobState, MetricSeries, NodeInfo, TraceBundle

METRICS_HEADER = ["timestamp", "node", "metric", "value"]
JOBS_HEADER = ["job_id", "user_id", "submit", "start", "end", "cores", "state", "is_ml", "nodes"]
INVENTORY_HEADER = ["node", "rack", "cores", "is_ml"]

METRICS_FILE = "metrics.csv"
JOBS_FILE = "jobs.csv"
INVENTORY_FILE = "inventory.csv"
TRUTH_FILE = "ground_truth.json"

_TRUE = {"1", "true", "yes", "t", "y"}
_FALSE = {"0", "false", "no", "f", "n", ""}


def fmt_float(v):
    return float.__repr__(float(v))


def _bool(text, path, line, col):
    t = text.strip().lower()
    if t in _TRUE:
        return True
    if t in _FALSE:
        return False
    raise TraceFormatError(f"expected a boolean, got {text!r}", path, line, col)


def _int(text, path, line, col, name):
    try:
        return int(text)
    except ValueError:
        raise TraceFormatError(f"{name}: expected an integer, got {text!r}", path, line, col) from None


def _rows(path, header):
    """Yield (line number, row) after checking the header; rejects empty files."""
    path = Path(path)
    if not path.exists():
        raise TraceFormatError("file not found", path)
    fh = open(path, newline="", encoding="utf-8")
    with fh:
        reader = csv.reader(fh)
        first = next(reader, None)
        if first is None:
            raise TraceFormatError("file is empty", path, 1)
        if [c.strip() for c in first] != header:
            raise TraceFormatError(f"expected header {','.join(header)}, got {','.join(first)}", path, 1, 1)
        for row in reader:
            line = reader.line_num
            if not row:
                continue
            if len(row) != len(header):
                raise TraceFormatError(f"expected {len(header)} fields, got {len(row)}", path, line,
                                       min(len(row), len(header)) + 1)
            yield line, row


def read_metrics(path, base_interval=None, allow_empty=False):
    raw = defaultdict(list)
    for line, (ts, node, metric, value) in _rows(path, METRICS_HEADER):
        t = _int(ts, path, line, 1, "timestamp")
        if not node:
            raise TraceFormatError("empty node id", path, line, 2)
        if not metric:
            raise TraceFormatError("empty metric name", path, line, 3)
        if value.strip() == "":
            v = None
        else:
            try:
                v = float(value)
            except ValueError:
                raise TraceFormatError(f"value: expected a number, got {value!r}", path, line, 4) from None
            if math.isnan(v):
                v = None
            elif not math.isfinite(v):
                raise TraceFormatError(f"value must be finite, got {value!r}", path, line, 4)
        raw[(node, metric)].append((t, v, line))
    if not raw:
        if allow_empty:
            return []
        raise TraceFormatError("no metric rows", path, 2)
    for samples in raw.values():
        samples.sort(key=lambda s: s[0])
        for a, b in zip(samples, samples[1:]):
            if a[0] == b[0]:
                raise TraceFormatError(f"duplicate timestamp {b[0]} for this series", path, b[2], 1)
    if base_interval is None:
        gaps = [b[0] - a[0] for s in raw.values() for a, b in zip(s, s[1:])]
        base_interval = reduce(math.gcd, gaps, 0) or DEFAULT_BASE_INTERVAL
    out = []
    for key in sorted(raw):
        samples = raw[key]
        try:
            out.append(MetricSeries.from_samples(key[0], key[1], [(t, v) for t, v, _ in samples], base_interval))
        except HolistatError as exc:
            raise TraceFormatError(str(exc), path, samples[0][2]) from None
    return out


def read_jobs(path):
    jobs = []
    for line, row in _rows(path, JOBS_HEADER):
        job_id, user, submit, start, end, cores, state, is_ml, nodes = row
        submit = _int(submit, path, line, 3, "submit")
        start = _int(start, path, line, 4, "start")
        end = _int(end, path, line, 5, "end")
        cores = _int(cores, path, line, 6, "cores")
        try:
            state = JobState(state.strip().upper())
        except ValueError:
            raise TraceFormatError(f"unknown job state {state!r}", path, line, 7) from None
        node_list = tuple(n for n in nodes.split(";") if n)
        try:
            jobs.append(JobRecord(job_id, user, submit, start, end, cores, state,
                                  _bool(is_ml, path, line, 8), node_list))
        except HolistatError as exc:
            raise TraceFormatError(str(exc), path, line) from None
    return jobs


def read_inventory(path):
    inv = {}
    for line, (node, rack, cores, is_ml) in _rows(path, INVENTORY_HEADER):
        if node in inv:
            raise TraceFormatError(f"node {node!r} listed twice", path, line, 1)
        inv[node] = NodeInfo(rack, _int(cores, path, line, 3, "cores"), _bool(is_ml, path, line, 4))
    return inv


def _writer(path):
    fh = open(path, "w", newline="", encoding="utf-8")
    return fh, csv.writer(fh, lineterminator="\n")


def write_metrics(path, series):
    fh, w = _writer(path)
    with fh:
        w.writerow(METRICS_HEADER)
        for s in sorted(series, key=lambda s: s.key):
            node, metric = s.key
            ts = s.timestamps.tolist()
            vals = s.values.tolist()
            for t, v, p in zip(ts, vals, s.present.tolist()):
                w.writerow((t, node, metric, float.__repr__(v) if p else ""))


def write_jobs(path, jobs):
    fh, w = _writer(path)
    with fh:
        w.writerow(JOBS_HEADER)
        for j in jobs:
            w.writerow((j.job_id, j.user_id, j.submit_time, j.start_time, j.end_time, j.cores_requested,
                        j.state.value, int(j.is_ml), ";".join(j.nodes)))


def write_inventory(path, inventory):
    fh, w = _writer(path)
    with fh:
        w.writerow(INVENTORY_HEADER)
        for node in sorted(inventory):
            info = inventory[node]
            w.writerow((node, info.rack_id, info.core_count, int(info.is_ml_node)))


def write_bundle(directory, bundle: TraceBundle, truth=None):
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    write_metrics(d / METRICS_FILE, bundle.series.values())
    write_jobs(d / JOBS_FILE, bundle.jobs)
    write_inventory(d / INVENTORY_FILE, bundle.inventory)
    if truth is not None:
        write_json(d / TRUTH_FILE, truth)


def read_bundle(directory, base_interval=None) -> TraceBundle:
    """Read a bundle directory; jobs and inventory files are optional."""
    d = Path(directory)
    if not d.is_dir():
        raise TraceFormatError("bundle directory not found", d)
    series = read_metrics(d / METRICS_FILE, base_interval, allow_empty=True) if (d / METRICS_FILE).exists() else []
    jobs = read_jobs(d / JOBS_FILE) if (d / JOBS_FILE).exists() else []
    inventory = read_inventory(d / INVENTORY_FILE) if (d / INVENTORY_FILE).exists() else {}
    bundle = TraceBundle(series, jobs, inventory)
    try:
        bundle.validate()
    except HolistatError as exc:
        raise TraceFormatError(str(exc), d / JOBS_FILE) from None
    return bundle


def _json_default(o):
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.floating,)):
        return float(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    if hasattr(o, "isoformat"):
        return o.isoformat()
    if hasattr(o, "value"):
        return o.value
    raise TypeError(f"cannot serialize {type(o).__name__}")


def write_json(path, obj):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")


def write_csv(path, header, rows):
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    fh, w = _writer(path)
    with fh:
        w.writerow(header)
        for row in rows:
            w.writerow([fmt_float(c) if isinstance(c, (float, np.floating)) else c for c in row])
