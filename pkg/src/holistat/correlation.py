"""Pairwise Pearson / Spearman / Kendall correlation and cross-day persistence.

The coefficients are computed here directly; scipy only supplies the Student-t
and normal tail probabilities for the p-values.
"""

from __future__ import annotations

import enum
import math
from collections import Counter
from dataclasses import dataclass
from datetime import date, datetime, timezone
from typing import Optional

import numpy as np
from scipy import stats

from .errors import DegenerateInput, InvalidInput
from .model import DAY, TraceBundle
from .parallel import pmap

STRONG_THRESHOLD = 0.9
# Schober et al. cutoffs on |coefficient|, strongest first.
DEFAULT_BANDS = ((0.9, "very strong"), (0.7, "strong"), (0.4, "moderate"), (0.1, "weak"))

_KENDALL_BLOCK = 2048


class Method(str, enum.Enum):
    PEARSON = "pearson"
    SPEARMAN = "spearman"
    KENDALL = "kendall"


@dataclass(frozen=True)
class CorrelationResult:
    method: Method
    coefficient: float
    p_value: float
    n: int
    metric_a: Optional[tuple] = None
    metric_b: Optional[tuple] = None

    def row(self):
        return (key_label(self.metric_a), key_label(self.metric_b), self.method.value,
                repr(self.coefficient), repr(self.p_value), self.n)


@dataclass(frozen=True)
class DailyPairSet:
    day: date
    strong_pairs: frozenset


def key_label(key):
    if key is None:
        return ""
    return f"{key[0]}:{key[1]}"


def rank_with_ties(values):
    """1-based ranks; tied values share the mean of the ranks they span."""
    arr = np.asarray(values, dtype=np.float64)
    n = arr.size
    order = np.argsort(arr, kind="mergesort")
    sorted_vals = arr[order]
    # start index of each run of equal values
    new_run = np.empty(n, dtype=bool)
    if n:
        new_run[0] = True
        new_run[1:] = sorted_vals[1:] != sorted_vals[:-1]
    starts = np.flatnonzero(new_run)
    ends = np.append(starts[1:], n)
    avg = (starts + ends + 1) / 2.0  # mean of ranks starts+1 .. ends
    run_id = np.cumsum(new_run) - 1
    ranks = np.empty(n)
    ranks[order] = avg[run_id]
    return ranks


def _paired(x, y):
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise InvalidInput("x and y must be 1-d vectors of equal length")
    ok = np.isfinite(x) & np.isfinite(y)
    if not ok.all():
        x, y = x[ok], y[ok]
    if x.size < 3:
        raise InvalidInput(f"need at least 3 paired samples, got {x.size}")
    return x, y


def _t_pvalue(r, n):
    if abs(r) >= 1.0:
        return 0.0
    t = r * math.sqrt((n - 2) / (1.0 - r * r))
    return float(min(1.0, 2.0 * stats.t.sf(abs(t), n - 2)))


def _pearson_r(x, y):
    dx = x - x.mean()
    dy = y - y.mean()
    sxx = float(np.dot(dx, dx))
    syy = float(np.dot(dy, dy))
    if sxx == 0.0 or syy == 0.0:
        raise DegenerateInput("correlation of a constant vector is undefined")
    r = float(np.dot(dx, dy)) / math.sqrt(sxx * syy)
    return max(-1.0, min(1.0, r))


def pearson(x, y) -> CorrelationResult:
    x, y = _paired(x, y)
    r = _pearson_r(x, y)
    return CorrelationResult(Method.PEARSON, r, _t_pvalue(r, x.size), int(x.size))


def spearman(x, y, ranks=None) -> CorrelationResult:
    """Pearson correlation of average ranks.  ``ranks`` may carry precomputed ranks."""
    if ranks is None:
        x, y = _paired(x, y)
        ranks = (rank_with_ties(x), rank_with_ties(y))
    rx, ry = ranks
    r = _pearson_r(rx, ry)
    return CorrelationResult(Method.SPEARMAN, r, _t_pvalue(r, rx.size), int(rx.size))


def _tie_sums(values):
    counts = np.array(list(Counter(values.tolist()).values()), dtype=np.float64)
    counts = counts[counts > 1]
    pairs = float(np.sum(counts * (counts - 1) / 2))
    v0 = float(np.sum(counts * (counts - 1) * (counts - 2)))
    v1 = float(np.sum(counts * (counts - 1) * (2 * counts + 5)))
    return pairs, v0, v1


def _concordance(x, y):
    """Sum over i<j of sign(x_i - x_j) * sign(y_i - y_j), in row blocks."""
    n = x.size
    total = 0
    for lo in range(0, n, _KENDALL_BLOCK):
        hi = min(n, lo + _KENDALL_BLOCK)
        sx = np.sign(x[lo:hi, None] - x[None, :]).astype(np.int8)
        sy = np.sign(y[lo:hi, None] - y[None, :]).astype(np.int8)
        prod = sx * sy
        # keep only j > i within the block's rows
        cols = np.arange(n)[None, :]
        rows = np.arange(lo, hi)[:, None]
        total += int(prod[cols > rows].sum(dtype=np.int64))
    return total


def kendall(x, y) -> CorrelationResult:
    """Kendall tau-b with the tie-corrected normal approximation for the p-value."""
    x, y = _paired(x, y)
    n = x.size
    n0 = n * (n - 1) / 2.0
    n1, x0, x1 = _tie_sums(x)
    n2, y0, y1 = _tie_sums(y)
    denom = (n0 - n1) * (n0 - n2)
    if denom <= 0:
        raise DegenerateInput("correlation of a constant vector is undefined")
    s = _concordance(x, y)
    tau = max(-1.0, min(1.0, s / math.sqrt(denom)))
    m = n * (n - 1.0)
    var = (m * (2 * n + 5) - x1 - y1) / 18.0 + (2 * n1 * n2) / m + x0 * y0 / (9 * m * (n - 2))
    if s == 0:
        p = 1.0
    elif var <= 0:
        p = 0.0
    else:
        p = float(min(1.0, math.erfc(abs(s) / math.sqrt(var) / math.sqrt(2))))
    return CorrelationResult(Method.KENDALL, tau, p, int(n))


_SCALAR = {Method.PEARSON: pearson, Method.SPEARMAN: spearman, Method.KENDALL: kendall}


def correlate(x, y, method=Method.SPEARMAN) -> CorrelationResult:
    return _SCALAR[Method(method)](x, y)


def classify_strength(coefficient, bands=DEFAULT_BANDS):
    c = abs(coefficient)
    if c > 1.0 + 1e-12:
        raise InvalidInput(f"coefficient {coefficient} outside [-1, 1]")
    for cutoff, label in bands:
        if c >= cutoff:
            return label
    return "negligible"


def ols_fit(x, y):
    """Least-squares line; returns (slope, intercept, r_squared)."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.size < 2:
        raise InvalidInput("ols_fit needs two equally long vectors of length >= 2")
    dx = x - x.mean()
    sxx = float(np.dot(dx, dx))
    if sxx == 0.0:
        raise DegenerateInput("ols_fit: x is constant")
    slope = float(np.dot(dx, y - y.mean())) / sxx
    intercept = float(y.mean()) - slope * float(x.mean())
    resid = y - (slope * x + intercept)
    ss_res = float(np.dot(resid, resid))
    ss_tot = float(np.dot(y - y.mean(), y - y.mean()))
    r2 = 1.0 if ss_tot == 0.0 else 1.0 - ss_res / ss_tot
    return slope, intercept, r2


# -- all-pairs engine -------------------------------------------------------

_SHARD_DATA = {}


def _init_shard(data):
    _SHARD_DATA.clear()
    _SHARD_DATA.update(data)


def _pair_result(task):
    a, b, method = task
    ta, va, ra = _SHARD_DATA[a]
    tb, vb, rb = _SHARD_DATA[b]
    if ta.size == tb.size and np.array_equal(ta, tb):
        xa, xb = va, vb
        full = True
    else:
        _, ia, ib = np.intersect1d(ta, tb, assume_unique=True, return_indices=True)
        xa, xb = va[ia], vb[ib]
        full = False
    if xa.size < 3:
        return ("too_short", a, b)
    try:
        if method is Method.SPEARMAN:
            ranks = (ra, rb) if full else (rank_with_ties(xa), rank_with_ties(xb))
            res = spearman(None, None, ranks=ranks)
        else:
            res = _SCALAR[method](xa, xb)
    except DegenerateInput:
        return ("degenerate", a, b)
    return CorrelationResult(res.method, res.coefficient, res.p_value, res.n, a, b)


def all_pairs(bundle: TraceBundle, method=Method.SPEARMAN, workers=1, report=None):
    """Correlate every unordered pair of non-constant series on shared timestamps.

    Results come back sorted by (metric_a, metric_b).  Skipped pairs are
    tallied into ``report`` (a dict) when one is given.
    """
    method = Method(method)
    report = {} if report is None else report
    for k in ("constant", "too_short", "degenerate"):
        report.setdefault(k, 0)
    data = {}
    keys = []
    for key in bundle.sorted_keys():
        s = bundle.series[key]
        vals = s.present_values()
        if vals.size == 0 or np.all(vals == vals[0]):
            report["constant"] += 1
            continue
        ranks = rank_with_ties(vals) if method is Method.SPEARMAN else None
        data[key] = (s.present_timestamps(), vals, ranks)
        keys.append(key)
    tasks = [(keys[i], keys[j], method) for i in range(len(keys)) for j in range(i + 1, len(keys))]
    out = pmap(_pair_result, tasks, workers, initializer=_init_shard, initargs=(data,))
    results = []
    for item in out:
        if isinstance(item, tuple):
            report[item[0]] += 1
        else:
            results.append(item)
    results.sort(key=lambda r: (r.metric_a, r.metric_b))
    return results


def utc_day(ts) -> date:
    return datetime.fromtimestamp(int(ts), tz=timezone.utc).date()


def day_start(day: date) -> int:
    return int(datetime(day.year, day.month, day.day, tzinfo=timezone.utc).timestamp())


def bundle_days(bundle: TraceBundle):
    lo, hi = bundle.time_span()
    if lo is None:
        return []
    first, last = utc_day(lo), utc_day(hi)
    return [date.fromordinal(d) for d in range(first.toordinal(), last.toordinal() + 1)]


def day_slice(bundle: TraceBundle, day: date) -> TraceBundle:
    t0 = day_start(day)
    t1 = t0 + DAY
    out = TraceBundle({}, [], bundle.inventory)
    for key, s in bundle.series.items():
        mask = (s.timestamps >= t0) & (s.timestamps < t1)
        if mask.any():
            out.series[key] = s.select(mask)
    out.jobs = [j for j in bundle.jobs if t0 <= j.start_time < t1]
    return out


def strong_pairs(results, threshold=STRONG_THRESHOLD, absolute=False):
    pick = (lambda r: abs(r.coefficient) >= threshold) if absolute else (lambda r: r.coefficient >= threshold)
    return frozenset((r.metric_a, r.metric_b) for r in results if pick(r))


def daily_correlations(bundle: TraceBundle, days=None, method=Method.SPEARMAN, threshold=STRONG_THRESHOLD,
                       workers=1, absolute=False):
    """Per-day all-pairs results and strong-pair sets; returns (results_by_day, [DailyPairSet])."""
    days = bundle_days(bundle) if days is None else list(days)
    by_day = {}
    daily = []
    for day in days:
        res = all_pairs(day_slice(bundle, day), method, workers)
        by_day[day] = res
        daily.append(DailyPairSet(day, strong_pairs(res, threshold, absolute)))
    return by_day, daily


def persistent_pairs(daily):
    """Per-day strong-pair counts and the pairs strong on every day."""
    daily = list(daily)
    if not daily:
        raise InvalidInput("persistence needs at least one day")
    counts = [(d.day, len(d.strong_pairs)) for d in daily]
    common = set(daily[0].strong_pairs)
    for d in daily[1:]:
        common &= d.strong_pairs
    return counts, sorted(common)
