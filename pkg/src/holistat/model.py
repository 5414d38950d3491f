"""Core trace types, time-bin resampling and normalization helpers.

A :class:`MetricSeries` keeps its samples as parallel numpy arrays: integer
timestamps, float values and an explicit boolean ``present`` mask.  The mask
is the single source of truth for missingness; value slots behind a cleared
mask hold NaN only so that accidental use shows up loudly.
"""

from __future__ import annotations

import bisect
import enum
import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, NamedTuple, Optional, Sequence

import numpy as np

from .errors import DegenerateInput, InvalidInput

DEFAULT_BASE_INTERVAL = 15
HOUR = 3600
DAY = 86400


class Sample(NamedTuple):
    timestamp: int
    value: Optional[float]


class JobState(str, enum.Enum):
    COMPLETED = "COMPLETED"
    FAILED = "FAILED"
    CANCELLED = "CANCELLED"
    TIMEOUT = "TIMEOUT"
    OUT_OF_MEMORY = "OUT_OF_MEMORY"
    REQUEUED = "REQUEUED"
    NODE_FAILURE = "NODE_FAILURE"


UNSUCCESSFUL_STATES = frozenset({JobState.FAILED, JobState.TIMEOUT, JobState.OUT_OF_MEMORY})


class IntensityClass(enum.IntEnum):
    VERY_LOW = 0
    LOW = 1
    MODERATE = 2
    HIGH = 3
    VERY_HIGH = 4

    @property
    def label(self):
        return self.name.lower().replace("_", " ")


_INTENSITY_UPPER = (0.2, 0.4, 0.6, 0.8)


@dataclass(frozen=True, eq=False)
class MetricSeries:
    """One (node, metric) time series on a regular sampling grid."""

    node_id: str
    metric_name: str
    timestamps: np.ndarray
    values: np.ndarray
    present: np.ndarray
    base_interval: int = DEFAULT_BASE_INTERVAL

    def __post_init__(self):
        ts = np.asarray(self.timestamps, dtype=np.int64)
        vals = np.asarray(self.values, dtype=np.float64).copy()
        mask = np.asarray(self.present, dtype=bool)
        if not (ts.ndim == vals.ndim == mask.ndim == 1) or not (len(ts) == len(vals) == len(mask)):
            raise InvalidInput("timestamps, values and present mask must be 1-d and equally long")
        if int(self.base_interval) <= 0:
            raise InvalidInput(f"base_interval must be positive, got {self.base_interval}")
        if len(ts) > 1:
            steps = np.diff(ts)
            if np.any(steps <= 0):
                raise InvalidInput(f"{self.key}: timestamps must strictly increase")
            if np.any(steps % int(self.base_interval)):
                raise InvalidInput(
                    f"{self.key}: timestamp gaps must be multiples of base_interval={self.base_interval}"
                )
        if not np.all(np.isfinite(vals[mask])):
            raise InvalidInput(f"{self.key}: present values must be finite")
        vals[~mask] = np.nan
        for arr in (ts, vals, mask):
            arr.setflags(write=False)
        object.__setattr__(self, "timestamps", ts)
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "present", mask)
        object.__setattr__(self, "base_interval", int(self.base_interval))

    @classmethod
    def from_samples(cls, node_id, metric_name, samples: Iterable, base_interval=DEFAULT_BASE_INTERVAL):
        samples = list(samples)
        ts = [int(s[0]) for s in samples]
        present = [s[1] is not None and not (isinstance(s[1], float) and math.isnan(s[1])) for s in samples]
        vals = [float(s[1]) if p else np.nan for s, p in zip(samples, present)]
        return cls(node_id, metric_name, np.array(ts, dtype=np.int64), np.array(vals), np.array(present, dtype=bool),
                   base_interval)

    @classmethod
    def from_values(cls, node_id, metric_name, values, t0=0, base_interval=DEFAULT_BASE_INTERVAL):
        """Build a gap-free series from a value list; ``None``/NaN entries become missing."""
        samples = [(t0 + i * base_interval, v) for i, v in enumerate(values)]
        return cls.from_samples(node_id, metric_name, samples, base_interval)

    @property
    def key(self):
        return (self.node_id, self.metric_name)

    @property
    def samples(self):
        return [Sample(int(t), float(v) if p else None)
                for t, v, p in zip(self.timestamps, self.values, self.present)]

    def present_values(self):
        return self.values[self.present]

    def present_timestamps(self):
        return self.timestamps[self.present]

    def with_arrays(self, timestamps, values, present, base_interval=None):
        return MetricSeries(self.node_id, self.metric_name, timestamps, values, present,
                            self.base_interval if base_interval is None else base_interval)

    def select(self, mask):
        mask = np.asarray(mask, dtype=bool)
        return self.with_arrays(self.timestamps[mask], self.values[mask], self.present[mask])

    def __len__(self):
        return len(self.timestamps)

    def __eq__(self, other):
        if not isinstance(other, MetricSeries):
            return NotImplemented
        return (self.key == other.key and self.base_interval == other.base_interval
                and np.array_equal(self.timestamps, other.timestamps)
                and np.array_equal(self.present, other.present)
                and np.array_equal(self.values[self.present], other.values[other.present]))

    __hash__ = None

    def __repr__(self):
        return (f"MetricSeries({self.node_id!r}, {self.metric_name!r}, n={len(self)}, "
                f"present={int(self.present.sum())}, base_interval={self.base_interval})")


@dataclass(frozen=True)
class JobRecord:
    job_id: str
    user_id: str
    submit_time: int
    start_time: int
    end_time: int
    cores_requested: int
    state: JobState
    is_ml: bool = False
    nodes: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "state", JobState(self.state))
        object.__setattr__(self, "nodes", tuple(self.nodes))
        if not self.submit_time <= self.start_time <= self.end_time:
            raise InvalidInput(f"job {self.job_id}: need submit <= start <= end")
        if self.cores_requested < 1:
            raise InvalidInput(f"job {self.job_id}: cores_requested must be >= 1")

    @property
    def runtime(self):
        return self.end_time - self.start_time


@dataclass(frozen=True)
class NodeInfo:
    rack_id: str
    core_count: int
    is_ml_node: bool = False


@dataclass
class TraceBundle:
    series: dict = field(default_factory=dict)   # (node, metric) -> MetricSeries
    jobs: list = field(default_factory=list)
    inventory: dict = field(default_factory=dict)  # node -> NodeInfo

    def __post_init__(self):
        if not isinstance(self.series, dict):
            items = list(self.series)
            self.series = {}
            for s in items:
                if s.key in self.series:
                    raise InvalidInput(f"duplicate series key {s.key}")
                self.series[s.key] = s
        self.jobs = list(self.jobs)

    def validate(self):
        for job in self.jobs:
            for node in job.nodes:
                if node not in self.inventory:
                    raise InvalidInput(f"job {job.job_id} references node {node!r} missing from inventory")
        for key, s in self.series.items():
            if key != s.key:
                raise InvalidInput(f"series stored under {key} but keyed {s.key}")

    def sorted_keys(self):
        return sorted(self.series)

    def metric(self, name):
        """All series of one metric, ordered by node id."""
        return [self.series[k] for k in self.sorted_keys() if k[1] == name]

    def time_span(self):
        lo, hi = None, None
        for s in self.series.values():
            if len(s):
                lo = int(s.timestamps[0]) if lo is None else min(lo, int(s.timestamps[0]))
                hi = int(s.timestamps[-1]) if hi is None else max(hi, int(s.timestamps[-1]))
        return lo, hi


def percentile(values, q):
    """Linear-interpolation percentile between closest ranks (numpy's default)."""
    arr = np.asarray(values, dtype=np.float64)
    if arr.size == 0:
        raise InvalidInput("percentile of empty input")
    return float(np.percentile(arr, q))


def resample(series: MetricSeries, bin_width: int, drop_partial=False) -> MetricSeries:
    """Mean-aggregate ``series`` into epoch-aligned bins of ``bin_width`` seconds.

    Only bins containing at least one input slot are emitted; a bin with no
    present sample is emitted as missing.  With ``drop_partial`` the first and
    last bins are dropped when they hold fewer slots than a full bin.
    """
    bin_width = int(bin_width)
    if bin_width <= 0 or bin_width % series.base_interval:
        raise InvalidInput(f"bin_width {bin_width} is not a positive multiple of {series.base_interval}")
    if len(series) == 0:
        return series.with_arrays([], [], [], base_interval=bin_width)
    bins = (series.timestamps // bin_width) * bin_width
    edges, inverse, slots = np.unique(bins, return_inverse=True, return_counts=True)
    weights = np.where(series.present, series.values, 0.0)
    sums = np.bincount(inverse, weights=weights, minlength=len(edges))
    counts = np.bincount(inverse, weights=series.present.astype(np.float64), minlength=len(edges))
    has = counts > 0
    means = np.full(len(edges), np.nan)
    means[has] = sums[has] / counts[has]
    keep = np.ones(len(edges), dtype=bool)
    if drop_partial:
        full = bin_width // series.base_interval
        keep[0] &= slots[0] >= full
        keep[-1] &= slots[-1] >= full
    return series.with_arrays(edges[keep], means[keep], has[keep], base_interval=bin_width)


def normalize_minmax(series: MetricSeries, on_constant="raise") -> MetricSeries:
    """Map present values onto [0, 1] by (v - min) / (max - min).

    ``on_constant="zero"`` maps a constant series to all zeros instead of raising.
    """
    vals = series.present_values()
    if vals.size == 0:
        raise DegenerateInput(f"{series.key}: no present values to normalize")
    lo, hi = float(vals.min()), float(vals.max())
    out = np.where(series.present, series.values, 0.0)
    if hi == lo:
        if on_constant != "zero":
            raise DegenerateInput(f"{series.key}: constant series cannot be min-max normalized")
        out = np.zeros_like(out)
    else:
        out = np.clip((out - lo) / (hi - lo), 0.0, 1.0)
    return series.with_arrays(series.timestamps, out, series.present)


def normalize_p99_clip(values) -> np.ndarray:
    """Divide by the 99th percentile, clip into [0, 1]."""
    arr = np.asarray(values, dtype=np.float64)
    if arr.size == 0 or not np.all(np.isfinite(arr)):
        raise InvalidInput("need at least one value, all finite")
    p99 = percentile(arr, 99)
    if p99 <= 0:
        raise DegenerateInput(f"99th percentile is {p99}; cannot normalize")
    return np.clip(arr / p99, 0.0, 1.0)


def classify_intensity(v: float) -> IntensityClass:
    if not 0.0 <= v <= 1.0:
        raise InvalidInput(f"intensity value {v} outside [0, 1]")
    return IntensityClass(bisect.bisect_right(_INTENSITY_UPPER, v))


def hourly_max_class(series: MetricSeries):
    """Per-hour intensity class of the hourly maximum; ``None`` for hours without data."""
    if len(series) == 0:
        return []
    hours = series.timestamps // HOUR
    first, last = int(hours[0]), int(hours[-1])
    out = []
    present_hours = hours[series.present]
    present_vals = series.values[series.present]
    maxima = {}
    for h, v in zip(present_hours.tolist(), present_vals.tolist()):
        if h not in maxima or v > maxima[h]:
            maxima[h] = v
    for h in range(first, last + 1):
        m = maxima.get(h)
        out.append((h * HOUR, None if m is None else classify_intensity(m)))
    return out


def cluster_load_utilization(load_series: Sequence[MetricSeries], inventory: Mapping[str, NodeInfo],
                             metric_name="load1_utilization") -> MetricSeries:
    """Summed load1 over summed cores of the nodes reporting at each timestamp, clipped to 1."""
    load_series = list(load_series)
    if not load_series:
        raise InvalidInput("cluster utilization needs at least one node")
    base = load_series[0].base_interval
    grid = np.unique(np.concatenate([s.timestamps for s in load_series]))
    load = np.zeros(len(grid))
    cores = np.zeros(len(grid))
    for s in load_series:
        if s.node_id not in inventory:
            raise InvalidInput(f"node {s.node_id!r} missing from inventory")
        if s.base_interval != base:
            raise InvalidInput("all load series must share the sampling grid")
        idx = np.searchsorted(grid, s.timestamps[s.present])
        load[idx] += s.values[s.present]
        cores[idx] += inventory[s.node_id].core_count
    has = cores > 0
    util = np.full(len(grid), np.nan)
    util[has] = np.clip(load[has] / cores[has], 0.0, 1.0)
    return MetricSeries("cluster", metric_name, grid, util, has, base)
