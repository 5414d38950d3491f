"""End-to-end acceptance checks, one test per criterion.

A summary line per criterion is printed at the end of the pytest run.
"""

import json
import math
import time

import numpy as np
import pytest

import oracles
from holistat import characterize as ch
from holistat import predictor as pr
from holistat.anomaly import detect_anomalies, zscores
from holistat.cli import main
from holistat.correlation import kendall, pearson, spearman
from holistat.model import MetricSeries, resample
from holistat.predictor import TrainConfig, granularity_study
from holistat.storage import compression_study
from holistat.synth import gen_bundle, storage_spec, study_spec
from holistat.traceio import read_bundle

TOL = 1e-12


def _cli(*argv):
    code = main([str(a) for a in argv])
    assert code == 0, f"holistat {' '.join(map(str, argv))} exited {code}"


def _random_pair(rng):
    n = int(rng.integers(3, 51))
    if rng.random() < 0.5:
        x, y = rng.normal(size=n), rng.normal(size=n)
        y = y + rng.uniform(-1, 1) * x
    else:
        x = rng.integers(0, 6, n).astype(float)
        y = rng.integers(0, 6, n).astype(float) + rng.integers(0, 2) * x
    if np.all(x == x[0]) or np.all(y == y[0]):
        return _random_pair(rng)
    return x, y


# 1 ------------------------------------------------------------------------------

def test_criterion_01_correlation_oracle_equivalence():
    rng = np.random.default_rng(1)
    start = time.perf_counter()
    worst = 0.0
    for _ in range(500):
        x, y = _random_pair(rng)
        xl, yl = x.tolist(), y.tolist()
        worst = max(worst,
                    abs(pearson(x, y).coefficient - oracles.pearson(xl, yl)),
                    abs(spearman(x, y).coefficient - oracles.spearman(xl, yl)),
                    abs(kendall(x, y).coefficient - oracles.kendall_tau_b(xl, yl)))
    elapsed = time.perf_counter() - start
    print(f"\n[criterion 1] worst |diff| = {worst:.3e}, {elapsed:.2f} s")
    assert worst <= TOL
    assert elapsed < 5.0


# 2 ------------------------------------------------------------------------------

MONOTONE = [
    lambda v: np.exp(v / 4.0),
    lambda v: v ** 3 + v,
    lambda v: np.arctan(v / 3.0),
    lambda v: 5.0 * v - 11.0,
]


def test_criterion_02_invariance_suite():
    rng = np.random.default_rng(2)
    violations = 0
    for trial in range(10_000):
        x, y = _random_pair(rng)
        f = MONOTONE[trial % len(MONOTONE)]
        g = MONOTONE[(trial // len(MONOTONE)) % len(MONOTONE)]
        fx, gy = f(x), g(y)
        a, c = rng.uniform(0.1, 10, 2)
        b, d = rng.uniform(-100, 100, 2)
        base = {m.__name__: m(x, y).coefficient for m in (pearson, spearman, kendall)}
        checks = [
            abs(spearman(fx, gy).coefficient - base["spearman"]),
            abs(kendall(fx, gy).coefficient - base["kendall"]),
            abs(pearson(a * x + b, c * y + d).coefficient - base["pearson"]),
            abs(pearson(y, x).coefficient - base["pearson"]),
            abs(spearman(y, x).coefficient - base["spearman"]),
            abs(kendall(y, x).coefficient - base["kendall"]),
        ]
        violations += sum(1 for v in checks if v > TOL)
    print(f"\n[criterion 2] violations = {violations} / 60000 checks")
    assert violations == 0


# 3 ------------------------------------------------------------------------------

@pytest.mark.slow
def test_criterion_03_persistence_recovery(tmp_path):
    _cli("--seed", 3, "synth", "--preset", "persistence", "--out", tmp_path / "b")
    truth = json.loads((tmp_path / "b" / "ground_truth.json").read_text())
    rotating = [c for c in truth["spec"]["couplings"] if c["days"] is not None]
    assert truth["spec"]["days"] == 10
    assert len(truth["always_coupled"]) == 5
    assert len(rotating) >= 50
    assert all(len(c["days"]) < 10 for c in rotating)
    start = time.perf_counter()
    _cli("correlate", "-i", tmp_path / "b", "-o", tmp_path / "c")
    elapsed = time.perf_counter() - start
    report = json.loads((tmp_path / "c" / "persistence.json").read_text())
    planted = sorted(sorted(f"{n}:{m}" for n, m in pair) for pair in truth["always_coupled"])
    print(f"\n[criterion 3] per-day strong pairs {list(report['per_day_counts'].values())}, "
          f"persistent {report['persistent_count']}, {elapsed:.1f} s")
    assert sorted(report["persistent_pairs"]) == planted
    assert elapsed < 60.0


# 4 ------------------------------------------------------------------------------

def test_criterion_04_moving_zscore():
    assert zscores([1.0, 2.0, 3.0, 4.0], 3).tolist() == [2.0]

    rng = np.random.default_rng(4)
    worst = 0.0
    for _ in range(50):
        v = rng.normal(size=500) * rng.uniform(0.1, 10)
        a, b = rng.uniform(0.01, 100), rng.uniform(-1e3, 1e3)
        worst = max(worst, float(np.max(np.abs(zscores(v, 12) - zscores(a * v + b, 12)))))
    assert worst <= 1e-9

    n = 10_000
    for values in (rng.normal(size=n), rng.poisson(3, n).astype(float), rng.standard_t(2, n)):
        rep = detect_anomalies(MetricSeries.from_values("n", "m", values), 12, 97)
        absz = np.abs(zscores(values, 12))
        ties = int(np.sum(absz == rep.threshold_value))
        allowed = math.ceil(0.03 * rep.total_points) + ties
        assert len(rep.flagged) <= allowed, (len(rep.flagged), allowed)

    missed = 0
    for seed in range(20):
        r = np.random.default_rng(100 + seed)
        v = r.normal(size=n)
        k = int(r.integers(100, n - 100))
        v[k] += 10 * v.std()
        rep = detect_anomalies(MetricSeries.from_values("n", "m", v), 12, 97)
        missed += (15 * k) not in rep.flagged
    print(f"\n[criterion 4] affine worst {worst:.2e}, missed spikes {missed}/20")
    assert missed == 0


# 5 ------------------------------------------------------------------------------

def test_criterion_05_lstm_gradient_check():
    start = time.perf_counter()
    rng = np.random.default_rng(5)
    model = pr.LstmModel.init(2, 3, 5, seed=0)
    for k in model.params:
        model.params[k] = rng.normal(0, 0.5, model.params[k].shape)
    assert model.n_params() <= 200
    X = rng.normal(size=(6, 2))
    y = rng.normal(size=5)
    backends = (True, False) if pr._lstm_kernel.AVAILABLE else (False,)
    worst = 0.0
    try:
        for use in backends:
            pr.USE_KERNEL = use
            _, grads = pr.loss_and_gradient(model, X, y)
            for name, p in model.params.items():
                for idx in np.ndindex(p.shape):
                    old = p[idx]
                    p[idx] = old + 1e-5
                    up = pr.huber(pr.lstm_forward(model, X), y)
                    p[idx] = old - 1e-5
                    down = pr.huber(pr.lstm_forward(model, X), y)
                    p[idx] = old
                    fd = (up - down) / 2e-5
                    a = grads[name][idx]
                    worst = max(worst, abs(a - fd) / max(abs(a), abs(fd), 1e-12))
    finally:
        pr.USE_KERNEL = pr._lstm_kernel.AVAILABLE
    elapsed = time.perf_counter() - start
    print(f"\n[criterion 5] {model.n_params()} params, worst relative error {worst:.2e}, {elapsed:.2f} s")
    assert worst < 1e-4
    assert elapsed < 10.0


# 6 ------------------------------------------------------------------------------

STUDY_CONFIG = TrainConfig(hidden_size=16, max_epochs=60, patience=8)


@pytest.mark.slow
def test_criterion_06_granularity_study():
    winners_600 = 0
    for seed in range(5):
        start = time.perf_counter()
        bundle, _ = gen_bundle(study_spec(seed=seed))
        inputs = {s.node_id: [s] for s in bundle.metric("node_load1")}
        table = granularity_study(inputs, (15, 60, 300, 600), STUDY_CONFIG)
        elapsed = time.perf_counter() - start
        for node, losses, best in table.rows():
            print(f"\n[criterion 6] seed {seed} {node} " + " ".join(f"{x:.5f}" for x in losses)
                  + f" best={best} ({elapsed:.0f} s)", end="")
            winners_600 += 600 in best
        assert elapsed < 300.0
    print()
    assert winners_600 == 0


# 7 ------------------------------------------------------------------------------

def test_criterion_07_storage_sublinearity():
    ar, _ = gen_bundle(storage_spec(seed=7))
    iid, _ = gen_bundle(storage_spec(seed=7, iid=True))
    r_ar = compression_study(ar.series.values())
    r_iid = compression_study(iid.series.values())
    print(f"\n[criterion 7] AR(1): samples x{r_ar.sample_ratio:.0f}, compressed x{r_ar.compressed_ratio:.2f}; "
          f"iid: compressed x{r_iid.compressed_ratio:.2f}")
    assert r_ar.sample_ratio == 40.0
    assert r_ar.compressed_ratio < 40.0
    assert r_ar.compressed_ratio < 0.6 * r_ar.sample_ratio
    assert abs(r_iid.compressed_ratio - r_iid.sample_ratio) <= 0.2 * r_iid.sample_ratio


# 8 and 9 share one large job trace ------------------------------------------------------

@pytest.fixture(scope="module")
def workload(tmp_path_factory):
    d = tmp_path_factory.mktemp("workload")
    _cli("--seed", 8, "synth", "--preset", "workload", "--out", d / "b")
    return d


@pytest.mark.slow
def test_criterion_08_workload_recovery(workload):
    _cli("characterize", "-i", workload / "b", "-o", workload / "c")
    summary = json.loads((workload / "c" / "summary.json").read_text())
    truth = json.loads((workload / "b" / "ground_truth.json").read_text())
    print(f"\n[criterion 8] {truth['jobs']['count']} jobs, below300 {summary['completed_fraction_below_300s']:.4f}, "
          f"mode {summary['core_mode']}, states {summary['state_fractions']}")
    assert truth["jobs"]["count"] >= 95_000
    assert abs(summary["completed_fraction_below_300s"] - 0.889) <= 0.01
    assert summary["core_mode"] == 16
    for state, target in {"COMPLETED": 0.92, "FAILED": 0.06, "CANCELLED": 0.01, "TIMEOUT": 0.01}.items():
        assert abs(summary["state_fractions"][state] - target) <= 0.005


@pytest.mark.slow
def test_criterion_09_conservation(workload):
    bundle = read_bundle(workload / "b")
    jobs = bundle.jobs
    cpu = math.fsum(v for _, v in ch.cpu_hours_per_day(jobs))
    expected = math.fsum(oracles.core_hours_per_job(j) for j in jobs)
    assert abs(cpu - expected) <= 1e-9 * expected

    _, table = ch.runtime_by_length_and_state(jobs)
    total = sum(sum(row.values()) for row in table)
    assert abs(total - sum(j.runtime for j in jobs)) <= 1e-9 * total

    worst = 0.0
    for s in bundle.series.values():
        raw = math.fsum(s.present_values().tolist())
        for width in (600, 3600):
            r = resample(s, width)
            slot = (s.present_timestamps() // width) * width
            counts = np.searchsorted(slot, r.timestamps, side="right") - np.searchsorted(slot, r.timestamps)
            mass = math.fsum((r.values[r.present] * counts[r.present]).tolist())
            worst = max(worst, abs(mass - raw) / abs(raw))
    assert worst <= 1e-12

    fractions = ch.state_fractions(jobs)
    print(f"\n[criterion 9] cpu-hours {cpu:.1f}, resample worst rel {worst:.1e}, "
          f"fractions sum {math.fsum(fractions.values())!r}")
    assert abs(math.fsum(fractions.values()) - 1.0) <= 1e-9


# 10 -----------------------------------------------------------------------------

@pytest.mark.slow
def test_criterion_10_report_determinism(tmp_path):
    _cli("--seed", 10, "synth", "--preset", "default", "--days", 2, "--out", tmp_path / "b")
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"seed": 10, "hidden_size": 4, "max_epochs": 3, "predict_nodes": ["r00n00", "r03n01"],
                               "save_models": True}))
    _cli("--config", cfg, "--workers", 1, "report", "-i", tmp_path / "b", "-o", tmp_path / "w1")
    _cli("--config", cfg, "--workers", 8, "report", "-i", tmp_path / "b", "-o", tmp_path / "w8")
    index = json.loads((tmp_path / "w1" / "index.json").read_text())
    assert all(stage["status"] == "ok" for stage in index["stages"].values())
    files = sorted(p.relative_to(tmp_path / "w1") for p in (tmp_path / "w1").rglob("*")
                   if p.suffix in (".csv", ".json"))
    other = sorted(p.relative_to(tmp_path / "w8") for p in (tmp_path / "w8").rglob("*")
                   if p.suffix in (".csv", ".json"))
    assert files == other and len(files) > 20
    differing = [str(f) for f in files if (tmp_path / "w1" / f).read_bytes() != (tmp_path / "w8" / f).read_bytes()]
    print(f"\n[criterion 10] compared {len(files)} CSV/JSON artifacts, {len(differing)} differ")
    assert differing == []
    for svg in (tmp_path / "w8").rglob("*.svg"):
        assert svg.read_text().lstrip().startswith("<?xml")
