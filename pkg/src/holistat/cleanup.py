"""Missing-data filtering, constant-series elimination, job filtering and period splits."""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass
from datetime import datetime, timezone

import numpy as np

from .errors import EmptySeries, InvalidInput
from .model import MetricSeries, TraceBundle

log = logging.getLogger(__name__)

# Midnight UTC on the day the Dutch government declared the pandemic.
COVID_PIVOT = int(datetime(2020, 2, 27, tzinfo=timezone.utc).timestamp())


@dataclass
class CleanReport:
    input_measurements: int = 0
    dropped_missing: int = 0
    dropped_constant_series: int = 0
    dropped_jobs: int = 0
    retained_nodes: int = 0

    def to_dict(self):
        return asdict(self)


def drop_missing(series: MetricSeries) -> MetricSeries:
    if not series.present.any():
        raise EmptySeries(f"{series.key}: every sample is missing")
    return series.select(series.present)


def is_constant(series: MetricSeries) -> bool:
    vals = series.present_values()
    if vals.size == 0:
        raise EmptySeries(f"{series.key}: no present values")
    return bool(np.all(vals == vals[0]))


def filter_jobs(jobs, window, valid_nodes):
    t0, t1 = window
    if not t0 < t1:
        raise InvalidInput(f"empty job window ({t0}, {t1})")
    valid_nodes = set(valid_nodes)
    return [j for j in jobs if t0 <= j.start_time <= t1 and all(n in valid_nodes for n in j.nodes)]


def _item_time(item):
    return item.start_time if hasattr(item, "start_time") else item


def split_periods(items, pivot, warn=True):
    """Split at ``pivot``: strictly-earlier goes before, at-or-after goes after.

    ``items`` is either a MetricSeries (split sample-wise into two series) or an
    iterable of JobRecords (split on start time).
    """
    pivot = int(pivot)
    if isinstance(items, MetricSeries):
        before = items.select(items.timestamps < pivot)
        after = items.select(items.timestamps >= pivot)
        if warn and (len(before) == 0 or len(after) == 0):
            log.warning("pivot %d lies outside the span of %s", pivot, items.key)
        return before, after
    items = list(items)
    before = [j for j in items if _item_time(j) < pivot]
    after = [j for j in items if _item_time(j) >= pivot]
    if warn and items and (not before or not after):
        log.warning("pivot %d lies outside the span of %d jobs", pivot, len(items))
    return before, after


def split_bundle(bundle: TraceBundle, pivot):
    before = TraceBundle({}, [], dict(bundle.inventory))
    after = TraceBundle({}, [], dict(bundle.inventory))
    one_sided = 0
    for key in bundle.sorted_keys():
        b, a = split_periods(bundle.series[key], pivot, warn=False)
        one_sided += not len(b) or not len(a)
        if len(b):
            before.series[key] = b
        if len(a):
            after.series[key] = a
    if one_sided:
        log.warning("pivot %d lies outside the span of %d of %d series", int(pivot), one_sided, len(bundle.series))
    before.jobs, after.jobs = split_periods(bundle.jobs, pivot)
    return before, after


def clean_bundle(bundle: TraceBundle, window=None, valid_nodes=None):
    """Apply every cleanup rule to a bundle; returns (clean bundle, CleanReport).

    ``valid_nodes`` defaults to the whole inventory; ``window`` defaults to
    the metric time span.
    """
    report = CleanReport()
    series = {}
    for key in bundle.sorted_keys():
        s = bundle.series[key]
        report.input_measurements += len(s)
        report.dropped_missing += int((~s.present).sum())
        if not s.present.any():
            continue
        s = drop_missing(s)
        if is_constant(s):
            report.dropped_constant_series += 1
            continue
        series[key] = s
    if valid_nodes is None:
        valid_nodes = set(bundle.inventory) or {k[0] for k in series}
    if window is None:
        lo, hi = bundle.time_span()
        if lo is None:
            starts = [j.start_time for j in bundle.jobs] or [0]
            lo, hi = min(starts), max(starts) + 1
        window = (lo, hi if hi > lo else lo + 1)
    jobs = filter_jobs(bundle.jobs, window, valid_nodes)
    report.dropped_jobs = len(bundle.jobs) - len(jobs)
    inventory = {n: info for n, info in bundle.inventory.items() if n in valid_nodes}
    series = {k: s for k, s in series.items() if k[0] in valid_nodes}
    report.retained_nodes = len({k[0] for k in series} | {n for j in jobs for n in j.nodes})
    return TraceBundle(series, jobs, inventory), report
