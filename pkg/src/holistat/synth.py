"""Deterministic synthetic traces with planted ground truth.

Every random stream is seeded from ``(spec.seed, <stream name>)`` so a series
comes out the same no matter which other series are generated, in which
order, or by how many workers.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass, field, fields
from datetime import datetime, timezone
from typing import Dict, List, Optional

import numpy as np
from scipy.signal import lfilter

from .errors import InvalidInput
from .model import DAY, JobRecord, JobState, MetricSeries, NodeInfo, TraceBundle

MODELS = ("constant", "ramp", "sinusoid", "ar1")

DEFAULT_STATE_MIX = {"COMPLETED": 0.92, "FAILED": 0.06, "CANCELLED": 0.01, "TIMEOUT": 0.01}
DEFAULT_CORE_WEIGHTS = {1: 0.08, 4: 0.08, 8: 0.12, 16: 0.40, 32: 0.16, 64: 0.10, 128: 0.06}
# Office-hours heavy submission profile (jobs per hour, by hour of day).
DEFAULT_HOURLY_RATES = [4, 3, 3, 2, 2, 3, 5, 10, 18, 24, 26, 26, 24, 25, 26, 25, 22, 18, 14, 12, 10, 8, 6, 5]


def _rng(seed, *stream):
    h = hashlib.sha256(repr((int(seed),) + tuple(stream)).encode()).digest()
    return np.random.default_rng(int.from_bytes(h[:16], "little"))


@dataclass
class InventorySpec:
    racks: int = 4
    nodes_per_rack: int = 4
    cores_per_node: int = 16
    ml_racks: List[int] = field(default_factory=list)
    gateway_racks: List[int] = field(default_factory=list)

    def node_names(self):
        return [f"r{r:02d}n{k:02d}" for r in range(self.racks) for k in range(self.nodes_per_rack)]

    def build(self):
        inv = {}
        for r in range(self.racks):
            for k in range(self.nodes_per_rack):
                inv[f"r{r:02d}n{k:02d}"] = NodeInfo(f"r{r:02d}", self.cores_per_node, r in self.ml_racks)
        return inv


@dataclass
class SeriesSpec:
    """One metric model.  ``node="*"`` expands to every non-gateway node."""

    node: str
    metric: str
    model: str = "ar1"
    mean: float = 0.0
    scale: float = 1.0
    phi: float = 0.99
    periods: List[float] = field(default_factory=lambda: [86400.0])
    amplitudes: List[float] = field(default_factory=lambda: [1.0])
    phase_drift: float = 0.0
    noise: float = 0.0
    ar_weight: float = 0.0
    quantum: float = 0.0
    clip_min: Optional[float] = None
    missing_fraction: float = 0.0


@dataclass
class Coupling:
    """``target`` follows ``source`` with the given mixing coefficient.

    ``days`` are day indices from the start of the span; ``None`` means every day.
    """

    source: List[str]
    target: List[str]
    coefficient: float = 1.0
    days: Optional[List[int]] = None


@dataclass
class LevelShift:
    metric: str
    at: int
    delta: float
    ml_only: bool = True


@dataclass
class AnomalyInjection:
    node: str
    metric: str
    timestamp: int
    magnitude: float  # in units of the series scale


@dataclass
class JobSpec:
    hourly_rates: List[float] = field(default_factory=lambda: list(DEFAULT_HOURLY_RATES))
    short_fraction: float = 0.889
    short_max: int = 300
    long_median: float = 3600.0
    long_sigma: float = 1.2
    max_runtime: int = 5 * DAY
    core_weights: Dict[int, float] = field(default_factory=lambda: dict(DEFAULT_CORE_WEIGHTS))
    state_mix: Dict[str, float] = field(default_factory=lambda: dict(DEFAULT_STATE_MIX))
    users: int = 50
    user_core_spread: float = 0.2
    queue_mean: float = 60.0
    ml_fraction: float = 0.2
    long_failure_boost: float = 0.0
    gateway_fraction: float = 0.0


@dataclass
class GeneratorSpec:
    seed: int = 0
    start: int = int(datetime(2020, 1, 6, tzinfo=timezone.utc).timestamp())
    days: int = 2
    base_interval: int = 15
    inventory: InventorySpec = field(default_factory=InventorySpec)
    series: List[SeriesSpec] = field(default_factory=list)
    couplings: List[Coupling] = field(default_factory=list)
    shifts: List[LevelShift] = field(default_factory=list)
    anomalies: List[AnomalyInjection] = field(default_factory=list)
    jobs: Optional[JobSpec] = None

    @property
    def end(self):
        return self.start + self.days * DAY

    def validate(self):
        if self.days < 1 or self.base_interval < 1:
            raise InvalidInput("days and base_interval must be positive")
        if self.start % self.base_interval:
            raise InvalidInput("start must lie on the sampling grid")
        for s in self.series:
            if s.model not in MODELS:
                raise InvalidInput(f"unknown metric model {s.model!r}")
            if not 0 <= s.missing_fraction < 1:
                raise InvalidInput("missing_fraction must lie in [0, 1)")
            if s.model == "ar1" and not -1 < s.phi < 1:
                raise InvalidInput("ar1 phi must lie in (-1, 1)")
            if len(s.periods) != len(s.amplitudes) or any(p <= 0 for p in s.periods):
                raise InvalidInput("sinusoid periods must be positive and match amplitudes")
        for c in self.couplings:
            if not -1 <= c.coefficient <= 1:
                raise InvalidInput("coupling coefficient must lie in [-1, 1]")
        j = self.jobs
        if j is not None:
            if any(r < 0 for r in j.hourly_rates) or len(j.hourly_rates) != 24:
                raise InvalidInput("hourly_rates needs 24 non-negative entries")
            for name, mix in (("core_weights", j.core_weights), ("state_mix", j.state_mix)):
                if any(w < 0 for w in mix.values()) or not math.isclose(sum(mix.values()), 1.0, abs_tol=1e-9):
                    raise InvalidInput(f"{name} must be non-negative and sum to 1")
            for s in j.state_mix:
                JobState(s)
            if not 0 <= j.short_fraction <= 1 or not 0 <= j.ml_fraction <= 1:
                raise InvalidInput("fractions must lie in [0, 1]")
            if j.users < 1:
                raise InvalidInput("need at least one user")

    # -- (de)serialization -------------------------------------------------
    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        out = {}
        nested = {"inventory": InventorySpec, "jobs": JobSpec}
        lists = {"series": SeriesSpec, "couplings": Coupling, "shifts": LevelShift, "anomalies": AnomalyInjection}
        known = {f.name for f in fields(cls)}
        for k, v in d.items():
            if k not in known:
                raise InvalidInput(f"unknown generator field {k!r}")
            if k in nested and v is not None:
                out[k] = _build(nested[k], v)
            elif k in lists:
                out[k] = [_build(lists[k], item) for item in v]
            else:
                out[k] = v
        spec = cls(**out)
        if spec.jobs is not None:
            spec.jobs.core_weights = {int(c): float(w) for c, w in spec.jobs.core_weights.items()}
        return spec

    @classmethod
    def load(cls, path):
        path = str(path)
        if path.endswith(".toml"):
            try:
                import tomllib
            except ModuleNotFoundError:
                import tomli as tomllib
            with open(path, "rb") as fh:
                return cls.from_dict(tomllib.load(fh))
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def _build(cls, d):
    known = {f.name for f in fields(cls)}
    bad = set(d) - known
    if bad:
        raise InvalidInput(f"unknown {cls.__name__} field(s): {sorted(bad)}")
    return cls(**d)


# -- metric latents --------------------------------------------------------

def _ar1(rng, n, phi):
    e = rng.standard_normal(n)
    x0 = e[0]
    rest = lfilter([math.sqrt(1 - phi * phi)], [1.0, -phi], e[1:], zi=[phi * x0])[0]
    return np.concatenate([[x0], rest])


def _latent(spec: SeriesSpec, n, dt, rng):
    if spec.model == "constant":
        return np.zeros(n)
    if spec.model == "ramp":
        return np.linspace(-1.0, 1.0, n)
    if spec.model == "ar1":
        return _ar1(rng, n, spec.phi)
    z = np.zeros(n)
    for period, amp in zip(spec.periods, spec.amplitudes):
        steps = np.full(n, 2 * math.pi * dt / period)
        if spec.phase_drift:
            steps = steps + rng.normal(0.0, spec.phase_drift, n)
        phase = np.cumsum(steps) + rng.uniform(0, 2 * math.pi)
        z += amp * np.sin(phase)
    if spec.ar_weight:
        z += spec.ar_weight * _ar1(rng, n, spec.phi)
    if spec.noise:
        z += rng.normal(0.0, spec.noise, n)
    return z


def expand_series(spec: GeneratorSpec):
    inv = spec.inventory
    compute = [n for n in inv.node_names() if int(n[1:3]) not in inv.gateway_racks]
    out = []
    for s in spec.series:
        nodes = compute if s.node == "*" else [s.node]
        for node in nodes:
            out.append(SeriesSpec(**{**asdict(s), "node": node}))
    seen = set()
    for s in out:
        if (s.node, s.metric) in seen:
            raise InvalidInput(f"duplicate series {(s.node, s.metric)}")
        seen.add((s.node, s.metric))
    return out


def _gen_series(spec: GeneratorSpec, inventory):
    n = spec.days * DAY // spec.base_interval
    ts = spec.start + spec.base_interval * np.arange(n, dtype=np.int64)
    day_idx = (ts - spec.start) // DAY
    specs = {(s.node, s.metric): s for s in expand_series(spec)}
    latents = {k: _latent(s, n, spec.base_interval, _rng(spec.seed, "latent", *k)) for k, s in specs.items()}
    mixed = {k: v.copy() for k, v in latents.items()}
    always, per_day = set(), {}
    for c in spec.couplings:
        src, tgt = tuple(c.source), tuple(c.target)
        if src not in latents or tgt not in latents:
            raise InvalidInput(f"coupling references unknown series {src} -> {tgt}")
        days = range(spec.days) if c.days is None else c.days
        mask = np.isin(day_idx, list(days))
        a = c.coefficient
        mixed[tgt][mask] = a * latents[src][mask] + math.sqrt(max(0.0, 1 - a * a)) * latents[tgt][mask]
        pair = tuple(sorted([src, tgt]))
        if c.days is None:
            always.add(pair)
        for d in days:
            per_day.setdefault(int(d), set()).add(pair)
    result = {}
    for k, s in specs.items():
        v = s.mean + s.scale * mixed[k]
        for shift in spec.shifts:
            if shift.metric == k[1] and (not shift.ml_only or inventory[k[0]].is_ml_node):
                v[ts >= shift.at] += shift.delta
        for a in spec.anomalies:
            if (a.node, a.metric) == k:
                i = (a.timestamp - spec.start) // spec.base_interval
                if 0 <= i < n:
                    v[i] += a.magnitude * s.scale
        if s.quantum:
            v = np.round(v / s.quantum) * s.quantum
        if s.clip_min is not None:
            v = np.maximum(v, s.clip_min)
        present = np.ones(n, dtype=bool)
        if s.missing_fraction:
            present = _rng(spec.seed, "missing", *k).random(n) >= s.missing_fraction
        result[k] = MetricSeries(k[0], k[1], ts, v, present, spec.base_interval)
    truth = {
        "always_coupled": [[list(a), list(b)] for a, b in sorted(always)],
        "day_coupled": {str(d): [[list(a), list(b)] for a, b in sorted(p)] for d, p in sorted(per_day.items())},
    }
    return result, truth


# -- jobs ------------------------------------------------------------------

def _pick(rng, weights: dict, size):
    keys = list(weights)
    p = np.array([weights[k] for k in keys], dtype=np.float64)
    idx = rng.choice(len(keys), size=size, p=p / p.sum())
    return [keys[i] for i in idx]


def _gen_jobs(spec: GeneratorSpec, inventory):
    js = spec.jobs
    rng = _rng(spec.seed, "jobs")
    counts = rng.poisson(np.tile(np.asarray(js.hourly_rates, dtype=np.float64), spec.days))
    hour_starts = spec.start + 3600 * np.arange(counts.size, dtype=np.int64)
    submit = np.repeat(hour_starts, counts) + rng.integers(0, 3600, counts.sum())
    submit.sort(kind="stable")
    n = submit.size
    short = rng.random(n) < js.short_fraction
    dur_short = rng.integers(1, js.short_max + 1, n)
    dur_long = np.exp(rng.normal(math.log(js.long_median), js.long_sigma, n))
    dur_long = np.clip(np.ceil(dur_long), js.short_max + 1, js.max_runtime).astype(np.int64)
    dur = np.where(short, dur_short, dur_long)
    wait = np.floor(rng.exponential(js.queue_mean, n)).astype(np.int64) if js.queue_mean > 0 else np.zeros(n, int)
    states = _pick(rng, js.state_mix, n)
    if js.long_failure_boost:
        frac = np.log10(np.maximum(dur, 1)) / math.log10(js.max_runtime)
        flip = rng.random(n) < js.long_failure_boost * np.minimum(1.0, frac)
        alt = _pick(rng, {"FAILED": 0.5, "TIMEOUT": 0.5}, n)
        states = [a if f and s == "COMPLETED" else s for s, f, a in zip(states, flip, alt)]
    user_rng = _rng(spec.seed, "users")
    home = _pick(user_rng, js.core_weights, js.users)
    user_of = rng.integers(0, js.users, n)
    deviate = rng.random(n) < js.user_core_spread
    direction = rng.integers(0, 2, n)
    gateway = [nd for nd, info in inventory.items() if int(info.rack_id[1:]) in spec.inventory.gateway_racks]
    compute = [nd for nd in sorted(inventory) if nd not in gateway]
    ml_nodes = [nd for nd in compute if inventory[nd].is_ml_node] or compute
    cpu_nodes = [nd for nd in compute if not inventory[nd].is_ml_node] or compute
    is_ml = rng.random(n) < js.ml_fraction
    on_gateway = rng.random(n) < js.gateway_fraction if gateway else np.zeros(n, dtype=bool)
    node_pick = rng.random(n)
    jobs = []
    per_node = spec.inventory.cores_per_node
    for i in range(n):
        cores = home[user_of[i]]
        if deviate[i]:
            cores = cores * 2 if direction[i] else max(1, cores // 2)
        pool = gateway if on_gateway[i] else (ml_nodes if is_ml[i] else cpu_nodes)
        k = min(len(pool), max(1, -(-cores // per_node)))
        first = int(node_pick[i] * len(pool))
        nodes = tuple(pool[(first + j) % len(pool)] for j in range(k))
        start = int(submit[i] + wait[i])
        jobs.append(JobRecord(f"job{i:07d}", f"user{user_of[i]:03d}", int(submit[i]), start, start + int(dur[i]),
                              int(cores), JobState(states[i]), bool(is_ml[i]), nodes))
    return jobs


def gen_bundle(spec: GeneratorSpec):
    """Build a TraceBundle plus its ground-truth record."""
    spec.validate()
    inventory = spec.inventory.build()
    series, truth = _gen_series(spec, inventory)
    jobs = _gen_jobs(spec, inventory) if spec.jobs is not None else []
    truth.update({
        "seed": spec.seed,
        "start": spec.start,
        "days": spec.days,
        "anomalies": [asdict(a) for a in spec.anomalies],
        "shifts": [asdict(s) for s in spec.shifts],
        "jobs": None if spec.jobs is None else {
            "short_fraction": spec.jobs.short_fraction,
            "core_mode": max(spec.jobs.core_weights, key=spec.jobs.core_weights.get),
            "state_mix": spec.jobs.state_mix,
            "count": len(jobs),
        },
    })
    bundle = TraceBundle(series, jobs, inventory)
    bundle.validate()
    return bundle, truth


def default_spec(seed=0, days=2):
    """Small mixed corpus exercising every metric model and a job trace."""
    return GeneratorSpec(
        seed=seed,
        days=days,
        inventory=InventorySpec(racks=4, nodes_per_rack=3, ml_racks=[3], gateway_racks=[]),
        series=[
            SeriesSpec("*", "node_load1", "sinusoid", mean=8.0, scale=4.0, periods=[86400.0], amplitudes=[1.0],
                       ar_weight=0.3, phi=0.995, noise=0.05, quantum=0.01, clip_min=0.0),
            SeriesSpec("*", "node_sockstat_sockets_used", "ar1", mean=300.0, scale=20.0, phi=0.99, quantum=1.0),
            SeriesSpec("*", "server_power_watts", "ar1", mean=350.0, scale=15.0, phi=0.99, quantum=0.1),
            SeriesSpec("*", "server_temperature_celsius", "ar1", mean=45.0, scale=3.0, phi=0.995, quantum=0.1),
            SeriesSpec("*", "node_boot_time_seconds", "constant", mean=1.5e9),
        ],
        couplings=[
            Coupling(["r00n00", "node_load1"], ["r00n00", "node_sockstat_sockets_used"], 0.98),
        ],
        jobs=JobSpec(hourly_rates=list(DEFAULT_HOURLY_RATES), users=20),
    )


def persistence_spec(seed=0, days=10, always=5, rotating=60, coefficient=0.99):
    """Planted always-strong pairs among pairs that are only strong on some days.

    Every coupled series appears in exactly one pair, so no pair inherits
    strength from a shared partner.  Rotating pairs are active on between one
    and ``days - 1`` randomly chosen days.
    """
    metrics = ["node_load1", "node_sockstat_sockets_used", "server_power_watts", "node_memory_active_bytes"]
    n_series = 2 * (always + rotating)
    nodes_needed = -(-n_series // len(metrics)) + 2
    per_rack = 6
    inv = InventorySpec(racks=-(-nodes_needed // per_rack), nodes_per_rack=per_rack)
    keys = [[n, m] for n in inv.node_names() for m in metrics]
    order = _rng(seed, "persistence", "order").permutation(len(keys))
    pool = [keys[i] for i in order]
    sched = _rng(seed, "persistence", "days")
    couplings = []
    for i in range(always + rotating):
        src, tgt = pool[2 * i], pool[2 * i + 1]
        if i < always:
            couplings.append(Coupling(src, tgt, coefficient))
        else:
            k = int(sched.integers(1, days))
            active = sorted(int(d) for d in sched.choice(days, size=k, replace=False))
            couplings.append(Coupling(src, tgt, coefficient, active))
    return GeneratorSpec(
        seed=seed, days=days, base_interval=60, inventory=inv,
        series=[SeriesSpec("*", m, "ar1", mean=10.0 * (j + 1), scale=1.0, phi=0.95) for j, m in enumerate(metrics)],
        couplings=couplings,
    )


def workload_spec(seed=0, days=31, rate_scale=10.0):
    """Large job trace (about 10^5 jobs at the defaults) with a light metric set."""
    return GeneratorSpec(
        seed=seed, days=days, base_interval=300,
        inventory=InventorySpec(racks=4, nodes_per_rack=4, cores_per_node=32, ml_racks=[3]),
        series=[SeriesSpec("*", "node_load1", "sinusoid", mean=16.0, scale=8.0, periods=[86400.0],
                           amplitudes=[1.0], ar_weight=0.3, phi=0.9, noise=0.05, quantum=0.01, clip_min=0.0)],
        jobs=JobSpec(hourly_rates=[r * rate_scale for r in DEFAULT_HOURLY_RATES], users=200),
    )


def study_spec(seed=0, days=20, nodes=2):
    """Load signal whose predictable part lives below the 10-minute scale.

    A 10-minute and a 45-second oscillation (both with slowly wandering phase)
    ride on a slow AR(1) drift plus white noise.  Averaging into 600 s bins
    erases both oscillations, while 15 s and 60 s inputs keep them.
    """
    return GeneratorSpec(
        seed=seed, days=days, base_interval=15,
        inventory=InventorySpec(racks=1, nodes_per_rack=nodes),
        series=[SeriesSpec("*", "node_load1", "sinusoid", mean=0.0, scale=1.0, periods=[600.0, 45.0],
                           amplitudes=[1.0, 0.3], phase_drift=0.03, ar_weight=0.5, phi=math.exp(-15 / 1800),
                           noise=0.1)],
    )


def storage_spec(seed=0, days=2, iid=False):
    """Counter-like AR(1) corpus (autocorrelation 0.99, integer quantum) or an i.i.d. control."""
    phi = 0.0 if iid else 0.99
    return GeneratorSpec(
        seed=seed, days=days, base_interval=15,
        inventory=InventorySpec(racks=2, nodes_per_rack=2),
        series=[SeriesSpec("*", "node_sockstat_sockets_used", "ar1", mean=100.0, scale=20.0, phi=phi,
                           quantum=0.0 if iid else 1.0)],
    )


PRESETS = {
    "default": default_spec,
    "persistence": persistence_spec,
    "workload": workload_spec,
    "study": study_spec,
    "storage": storage_spec,
}
