"""Moving Z-score anomaly detection with a percentile threshold on |z|."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import List, NamedTuple

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import InvalidInput
from .model import MetricSeries

DEFAULT_PERCENTILE = 97.0


class ZScorePoint(NamedTuple):
    timestamp: int
    z: float


@dataclass
class AnomalyReport:
    threshold_percentile: float
    threshold_value: float
    flagged: List[int] = field(default_factory=list)
    total_points: int = 0
    key: tuple = None

    def to_dict(self):
        d = asdict(self)
        d["key"] = None if self.key is None else list(self.key)
        if math.isinf(self.threshold_value):
            d["threshold_value"] = "inf"
        return d


def zscores(values, window):
    """z of each value after the first ``window`` against the trailing window.

    Uses the sample (n-1) standard deviation.  A perfectly flat window gives
    z = 0 for an equal next value and a signed infinity otherwise.
    """
    v = np.asarray(values, dtype=np.float64)
    window = int(window)
    if window < 2:
        raise InvalidInput(f"window must be >= 2, got {window}")
    if v.size <= window:
        raise InvalidInput(f"series of {v.size} points is too short for window {window}")
    wins = sliding_window_view(v, window)[:-1]
    nxt = v[window:]
    mean = wins.mean(axis=1)
    std = wins.std(axis=1, ddof=1)
    # a spread that underflows to zero counts as flat
    flat = (wins.max(axis=1) == wins.min(axis=1)) | (std == 0)
    z = np.empty(nxt.size)
    ok = ~flat
    z[ok] = (nxt[ok] - mean[ok]) / std[ok]
    diff = nxt[flat] - wins[flat, 0]
    z[flat] = np.where(diff == 0, 0.0, np.copysign(np.inf, diff))
    return z


def moving_zscore(series: MetricSeries, window: int):
    """Z-scores over the present samples of ``series`` (missing samples are skipped)."""
    ts = series.present_timestamps()
    z = zscores(series.present_values(), window)
    return [ZScorePoint(int(t), float(v)) for t, v in zip(ts[window:], z)]


def abs_percentile(absz, q):
    """Linear-interpolation percentile that tolerates +inf entries."""
    a = np.sort(np.asarray(absz, dtype=np.float64))
    if a.size == 0:
        raise InvalidInput("no z-scores to threshold")
    pos = q / 100.0 * (a.size - 1)
    lo = int(math.floor(pos))
    hi = min(lo + 1, a.size - 1)
    frac = pos - lo
    if frac == 0 or a[hi] == a[lo]:
        return float(a[lo])
    if math.isinf(a[hi]):
        return math.inf
    return float(a[lo] + frac * (a[hi] - a[lo]))


def _flag(points, threshold):
    return [p.timestamp for p in points if abs(p.z) > threshold or math.isinf(p.z)]


def detect_anomalies(series: MetricSeries, window: int, percentile=DEFAULT_PERCENTILE) -> AnomalyReport:
    if not 0 < percentile <= 100:
        raise InvalidInput(f"percentile must lie in (0, 100], got {percentile}")
    points = moving_zscore(series, window)
    thr = abs_percentile([abs(p.z) for p in points], percentile)
    return AnomalyReport(float(percentile), thr, _flag(points, thr), len(points), series.key)


def detect_anomalies_pooled(series_list, window, percentile=DEFAULT_PERCENTILE):
    """One threshold over the pooled |z| of every series; one report per series."""
    if not 0 < percentile <= 100:
        raise InvalidInput(f"percentile must lie in (0, 100], got {percentile}")
    per = [(s, moving_zscore(s, window)) for s in series_list]
    thr = abs_percentile([abs(p.z) for _, pts in per for p in pts], percentile)
    return [AnomalyReport(float(percentile), thr, _flag(pts, thr), len(pts), s.key) for s, pts in per]
