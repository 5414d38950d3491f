"""Descriptive statistics over metrics and job traces.

Covers distributions (ECDF, histograms, boxplots), arrival patterns, per-user
coefficient of variation, job-state mixes, runtime and core-hour footprints,
per-rack aggregation, before/after period comparison and the anomaly-to-job
cross-reference.
"""

from __future__ import annotations

import enum
import logging
from collections import Counter, defaultdict
from dataclasses import dataclass
from datetime import date, datetime, timedelta, timezone
from typing import Dict, List, Optional

import numpy as np

from .cleanup import split_bundle
from .errors import InvalidInput
from .model import DAY, HOUR, UNSUCCESSFUL_STATES, JobState, TraceBundle

log = logging.getLogger(__name__)

SHORT_JOB_SECONDS = 300
DEFAULT_LENGTH_EDGES = (300, 3600, 6 * 3600, 24 * 3600)


@dataclass(frozen=True)
class BoxplotStats:
    q1: float
    median: float
    q3: float
    whisker_low: float
    whisker_high: float
    outliers: tuple = ()
    mean: float = float("nan")
    n: int = 0


@dataclass(frozen=True)
class Histogram:
    bin_edges: tuple
    counts: tuple

    def mode(self):
        """Left edge of the fullest bin (lowest on ties)."""
        if not self.counts:
            raise InvalidInput("empty histogram has no mode")
        i = int(np.argmax(self.counts))
        return self.bin_edges[i]


@dataclass(frozen=True)
class EcdfCurve:
    values: tuple
    fractions: tuple

    def __call__(self, v):
        """F(v) = fraction of samples <= v."""
        i = np.searchsorted(self.values, v, side="right")
        return 0.0 if i == 0 else self.fractions[i - 1]


class GroupKey(str, enum.Enum):
    HOUR_OF_DAY = "hour_of_day"
    DAY_OF_WEEK = "day_of_week"
    CALENDAR_DAY = "calendar_day"


class RackStatistic(str, enum.Enum):
    MEAN = "mean"
    STD = "std"
    BOXPLOT = "boxplot"


def ecdf(values) -> EcdfCurve:
    arr = np.asarray(values, dtype=np.float64)
    if arr.size == 0:
        raise InvalidInput("ECDF of an empty sample")
    if not np.all(np.isfinite(arr)):
        raise InvalidInput("ECDF needs finite values")
    uniq, counts = np.unique(arr, return_counts=True)
    fractions = np.cumsum(counts) / arr.size
    fractions[-1] = 1.0
    return EcdfCurve(tuple(uniq.tolist()), tuple(fractions.tolist()))


def boxplot_stats(values) -> BoxplotStats:
    arr = np.asarray(values, dtype=np.float64)
    if arr.size == 0:
        raise InvalidInput("boxplot of an empty sample")
    q1, med, q3 = (float(v) for v in np.percentile(arr, [25, 50, 75]))
    iqr = q3 - q1
    # whiskers reach the most extreme samples inside the 1.5 IQR fences
    inside = arr[(arr >= q1 - 1.5 * iqr) & (arr <= q3 + 1.5 * iqr)]
    lo, hi = float(inside.min()), float(inside.max())
    outliers = tuple(sorted(float(v) for v in arr if v < lo or v > hi))
    return BoxplotStats(q1, med, q3, lo, hi, outliers, float(arr.mean()), int(arr.size))


def _filter_states(jobs, states):
    if states is None:
        return list(jobs)
    states = {JobState(s) for s in states}
    return [j for j in jobs if j.state in states]


def duration_stats(jobs, states=(JobState.COMPLETED,)):
    """ECDF of runtimes plus a ``fraction_below(t)`` helper (<= t counts as below)."""
    jobs = _filter_states(jobs, states)
    if not jobs:
        raise InvalidInput("no jobs left after state filter")
    curve = ecdf([j.runtime for j in jobs])

    def fraction_below(t=SHORT_JOB_SECONDS):
        return curve(t)

    return curve, fraction_below


def core_histogram(jobs) -> Histogram:
    cores = [j.cores_requested for j in jobs]
    if not cores:
        raise InvalidInput("core histogram of an empty job set")
    lo, hi = min(cores), max(cores)
    counts = np.bincount(np.array(cores) - lo, minlength=hi - lo + 1)
    edges = tuple(range(lo, hi + 2))
    return Histogram(edges, tuple(int(c) for c in counts))


def _local(ts, tz_offset):
    return datetime.fromtimestamp(int(ts) + int(tz_offset), tz=timezone.utc)


def arrivals_grouped(jobs, key=GroupKey.HOUR_OF_DAY, tz_offset=0):
    """Submissions grouped by hour of day, weekday or calendar day.

    Returns ``(group, count, mean)`` rows.  For hour and weekday groups the
    mean divides by the number of times the group occurs in the covered
    calendar span; for calendar days mean equals count.
    """
    key = GroupKey(key)
    jobs = list(jobs)
    stamps = [_local(j.submit_time, tz_offset) for j in jobs]
    if key is GroupKey.CALENDAR_DAY:
        counts = Counter(s.date() for s in stamps)
        return [(d.isoformat(), counts[d], float(counts[d])) for d in sorted(counts)]
    if not stamps:
        n_groups = 24 if key is GroupKey.HOUR_OF_DAY else 7
        return [(g, 0, 0.0) for g in range(n_groups)]
    first = min(stamps).date()
    last = max(stamps).date()
    days = [first + timedelta(days=i) for i in range((last - first).days + 1)]
    if key is GroupKey.HOUR_OF_DAY:
        counts = Counter(s.hour for s in stamps)
        return [(h, counts[h], counts[h] / len(days)) for h in range(24)]
    counts = Counter(s.weekday() for s in stamps)
    occurrences = Counter(d.weekday() for d in days)
    return [(w, counts[w], counts[w] / occurrences[w] if occurrences[w] else 0.0) for w in range(7)]


def cov_per_user(jobs):
    """Sorted (descending) ``(user, cov, singleton)`` rows of requested-core variability."""
    per_user = defaultdict(list)
    for j in jobs:
        per_user[j.user_id].append(j.cores_requested)
    rows = []
    for user, cores in per_user.items():
        if len(cores) < 2:
            rows.append((user, 0.0, True))
            continue
        arr = np.array(cores, dtype=np.float64)
        rows.append((user, float(arr.std(ddof=1) / arr.mean()), False))
    rows.sort(key=lambda r: (-r[1], r[0]))
    return rows


def state_fractions(jobs) -> Dict[JobState, float]:
    jobs = list(jobs)
    if not jobs:
        raise InvalidInput("state fractions of an empty job set")
    counts = Counter(j.state for j in jobs)
    return {s: counts[s] / len(jobs) for s in JobState if counts[s]}


def length_bin_labels(edges):
    labels = [f"<{edges[0]}"]
    labels += [f"[{a},{b})" for a, b in zip(edges[:-1], edges[1:])]
    labels.append(f">={edges[-1]}")
    return labels


def runtime_by_length_and_state(jobs, length_edges=DEFAULT_LENGTH_EDGES):
    """Total runtime per (length bin, state).

    Bins are ``(-inf, e0), [e0, e1), ..., [ek, inf)`` so every job lands
    somewhere.  Returns ``(labels, table)`` with ``table[i][state]`` in seconds.
    """
    edges = list(length_edges)
    if edges != sorted(edges) or len(set(edges)) != len(edges):
        raise InvalidInput("length bin edges must be strictly increasing")
    table = [defaultdict(int) for _ in range(len(edges) + 1)]
    for j in jobs:
        i = int(np.searchsorted(edges, j.runtime, side="right"))
        table[i][j.state] += j.runtime
    return length_bin_labels(edges), [dict(t) for t in table]


def unsuccessful_fraction(row):
    total = sum(row.values())
    if total == 0:
        return float("nan")
    return sum(v for s, v in row.items() if s in UNSUCCESSFUL_STATES) / total


def cpu_hours_per_day(jobs):
    """Requested cores x runtime, attributed proportionally to each UTC day spanned."""
    per_day = defaultdict(float)
    for j in jobs:
        if j.runtime == 0:
            continue
        t = j.start_time
        while t < j.end_time:
            boundary = (t // DAY + 1) * DAY
            seg_end = min(boundary, j.end_time)
            per_day[t // DAY] += j.cores_requested * (seg_end - t) / HOUR
            t = seg_end
    return [(date.fromordinal(date(1970, 1, 1).toordinal() + d), v) for d, v in sorted(per_day.items())]


def _pooled(values, statistic):
    arr = np.asarray(values, dtype=np.float64)
    statistic = RackStatistic(statistic)
    if statistic is RackStatistic.MEAN:
        return float(arr.mean())
    if statistic is RackStatistic.STD:
        return float(arr.std(ddof=1)) if arr.size > 1 else 0.0
    return boxplot_stats(arr)


def rack_values(series_list, inventory):
    """Present values pooled per rack, in node order."""
    pools = defaultdict(list)
    for s in sorted(series_list, key=lambda s: s.key):
        if s.node_id not in inventory:
            raise InvalidInput(f"node {s.node_id!r} has no rack in the inventory")
        pools[inventory[s.node_id].rack_id].append(s.present_values())
    return {rack: np.concatenate(chunks) for rack, chunks in pools.items()}


def rack_aggregate(series_list, inventory, statistic=RackStatistic.MEAN):
    out = {}
    for rack, vals in sorted(rack_values(series_list, inventory).items()):
        if vals.size == 0:
            log.warning("rack %s has no present values; skipped", rack)
            continue
        out[rack] = _pooled(vals, statistic)
    return out


@dataclass
class PeriodStats:
    rack: str
    metric: str
    before_mean: Optional[float]
    before_std: Optional[float]
    after_mean: Optional[float]
    after_std: Optional[float]
    delta: Optional[float]


def period_compare(bundle: TraceBundle, pivot, metrics) -> List[PeriodStats]:
    before, after = split_bundle(bundle, pivot)
    rows = []
    for metric in metrics:
        b = rack_values(before.metric(metric), bundle.inventory)
        a = rack_values(after.metric(metric), bundle.inventory)
        for rack in sorted(set(a) | set(b)):
            bv, av = b.get(rack), a.get(rack)
            bm = float(bv.mean()) if bv is not None and bv.size else None
            am = float(av.mean()) if av is not None and av.size else None
            bs = _pooled(bv, "std") if bm is not None else None
            as_ = _pooled(av, "std") if am is not None else None
            delta = None if bm is None or am is None else am - bm
            rows.append(PeriodStats(rack, metric, bm, bs, am, as_, delta))
    return rows


def join_anomalies_jobs(timestamps, jobs, slack=0):
    """For each flagged timestamp, the unsuccessful jobs whose padded run covers it."""
    if slack < 0:
        raise InvalidInput("slack must be >= 0")
    failed = sorted((j for j in jobs if j.state in UNSUCCESSFUL_STATES), key=lambda j: j.job_id)
    out = []
    for t in timestamps:
        hits = [j for j in failed if j.start_time - slack <= t <= j.end_time + slack]
        out.append((int(t), hits))
    return out
