import math
from datetime import date, datetime, timezone

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

import oracles
from holistat import characterize as ch
from holistat.errors import InvalidInput
from holistat.model import DAY, JobRecord, JobState, MetricSeries, NodeInfo, TraceBundle
from holistat.synth import GeneratorSpec, InventorySpec, JobSpec, LevelShift, SeriesSpec, gen_bundle

T0 = int(datetime(2020, 1, 6, tzinfo=timezone.utc).timestamp())  # a Monday


def job(runtime=60, cores=1, state=JobState.COMPLETED, user="u", submit=T0, start=None, jid="j"):
    start = submit if start is None else start
    return JobRecord(jid, user, submit, start, start + runtime, cores, state)


jobs_strategy = st.lists(st.tuples(st.integers(0, 3 * DAY), st.integers(0, 2 * DAY), st.integers(1, 64),
                                   st.sampled_from(list(JobState))), min_size=1, max_size=40)


def _jobs(raw):
    return [job(runtime=r, cores=c, state=s, start=T0 + t, jid=f"j{i}") for i, (t, r, c, s) in enumerate(raw)]


# -- ECDF and durations ------------------------------------------------------

def test_ecdf_examples():
    assert ch.ecdf([1, 2, 3])(2) == pytest.approx(2 / 3)
    assert ch.ecdf([5])(5) == 1.0
    assert ch.ecdf([1, 1, 2])(1) == pytest.approx(2 / 3)
    assert ch.ecdf([1, 2])(0.5) == 0.0


@given(st.lists(st.integers(-50, 50), min_size=1, max_size=80), st.integers(-60, 60))
def test_ecdf_counts(values, probe):
    expected = sum(1 for v in values if v <= probe) / len(values)
    assert ch.ecdf(values)(probe) == pytest.approx(expected, abs=1e-15)


def test_fraction_below():
    _, below = ch.duration_stats([job(60), job(60)])
    assert below(300) == 1.0
    _, below = ch.duration_stats([job(100), job(400), job(10, state=JobState.FAILED)])
    assert below(300) == 0.5


def test_duration_state_filter_empty():
    with pytest.raises(InvalidInput):
        ch.duration_stats([job(state=JobState.FAILED)])


# -- cores, arrivals, CoV ------------------------------------------------------

def test_core_mode_and_empty():
    assert ch.core_histogram([job(cores=16), job(cores=16), job(cores=32)]).mode() == 16
    with pytest.raises(InvalidInput):
        ch.core_histogram([])


def test_arrivals_hour_and_weekday():
    nine = [job(submit=T0 + 9 * 3600 + 60 * k) for k in range(5)]
    rows = ch.arrivals_grouped(nine, ch.GroupKey.HOUR_OF_DAY)
    assert rows[9][1] == 5 and sum(r[1] for r in rows) == 5
    week = [job(submit=T0 + d * DAY + 100) for d in range(7)]
    rows = ch.arrivals_grouped(week, ch.GroupKey.DAY_OF_WEEK)
    assert [r[2] for r in rows] == [1.0] * 7


def test_arrivals_tz_offset_shifts_hour():
    rows = ch.arrivals_grouped([job(submit=T0 + 23 * 3600)], ch.GroupKey.HOUR_OF_DAY, tz_offset=3600)
    assert rows[0][1] == 1


def test_cov_examples():
    rows = dict((u, c) for u, c, _ in ch.cov_per_user(
        [job(cores=16, user="a"), job(cores=16, user="a"), job(cores=1, user="b"), job(cores=3, user="b")]))
    assert rows["a"] == 0.0
    assert rows["b"] == pytest.approx(math.sqrt(2) / 2, abs=1e-15)


def test_cov_singleton_flagged():
    assert ch.cov_per_user([job(user="solo")]) == [("solo", 0.0, True)]


# -- states and runtime tables -------------------------------------------------

def test_state_fractions():
    assert ch.state_fractions([job(), job()]) == {JobState.COMPLETED: 1.0}
    fr = ch.state_fractions([job(), job(state=JobState.FAILED)])
    assert fr == {JobState.COMPLETED: 0.5, JobState.FAILED: 0.5}


@given(jobs_strategy)
def test_state_fractions_sum_to_one(raw):
    assert math.fsum(ch.state_fractions(_jobs(raw)).values()) == pytest.approx(1.0, abs=1e-9)


def test_runtime_bins_single_job_each():
    jobs = [job(10, jid="a"), job(1000, jid="b", state=JobState.FAILED), job(90000, jid="c")]
    labels, table = ch.runtime_by_length_and_state(jobs)
    assert labels == ["<300", "[300,3600)", "[3600,21600)", "[21600,86400)", ">=86400"]
    assert table[0] == {JobState.COMPLETED: 10}
    assert table[1] == {JobState.FAILED: 1000}
    assert table[4] == {JobState.COMPLETED: 90000}
    assert ch.unsuccessful_fraction(table[1]) == 1.0


@given(jobs_strategy)
def test_runtime_table_conserves_total(raw):
    jobs = _jobs(raw)
    _, table = ch.runtime_by_length_and_state(jobs)
    assert sum(sum(r.values()) for r in table) == sum(j.runtime for j in jobs)


def test_cpu_hours_examples():
    assert ch.cpu_hours_per_day([job(3600, cores=16)]) == [(date(2020, 1, 6), 16.0)]
    straddle = job(7200, cores=2, start=T0 + DAY - 3600)
    assert ch.cpu_hours_per_day([straddle]) == [(date(2020, 1, 6), 2.0), (date(2020, 1, 7), 2.0)]


@given(jobs_strategy)
def test_cpu_hours_conserve(raw):
    jobs = _jobs(raw)
    total = math.fsum(v for _, v in ch.cpu_hours_per_day(jobs))
    expected = math.fsum(oracles.core_hours_per_job(j) for j in jobs)
    assert total == pytest.approx(expected, rel=1e-9)


def test_long_jobs_fail_more_when_planted():
    spec = GeneratorSpec(seed=4, days=20, jobs=JobSpec(long_failure_boost=0.6, short_fraction=0.5))
    bundle, _ = gen_bundle(spec)
    _, table = ch.runtime_by_length_and_state(bundle.jobs)
    fractions = [ch.unsuccessful_fraction(r) for r in table if r]
    assert fractions == sorted(fractions)
    assert fractions[-1] > fractions[0] + 0.2


# -- racks and periods -----------------------------------------------------------

INV = {"a": NodeInfo("r0", 4), "b": NodeInfo("r0", 4), "c": NodeInfo("r1", 4)}


def test_rack_one_node_equals_node_stat():
    c = MetricSeries.from_values("c", "m", [1.0, 2.0, 6.0])
    assert ch.rack_aggregate([c], INV, "mean") == {"r1": 3.0}


def test_rack_pooled_std_of_identical_nodes():
    v = [1.0, 4.0, 2.0, 8.0]
    a = MetricSeries.from_values("a", "m", v)
    b = MetricSeries.from_values("b", "m", v)
    one = ch.rack_aggregate([a], INV, "std")["r0"]
    two = ch.rack_aggregate([a, b], INV, "std")["r0"]
    pooled = np.std(v + v, ddof=1)
    assert two == pytest.approx(pooled, rel=1e-12)
    assert one == pytest.approx(np.std(v, ddof=1), rel=1e-12)


def test_rack_empty_skipped():
    empty = MetricSeries.from_samples("c", "m", [(0, None)])
    assert ch.rack_aggregate([empty], INV) == {}


def test_boxplot_fields():
    b = ch.boxplot_stats([1, 2, 3, 4, 100])
    assert (b.q1, b.median, b.q3) == (2.0, 3.0, 4.0)
    assert b.outliers == (100.0,)
    assert b.whisker_high == 4.0


def test_period_compare_identical_halves_and_planted_shift():
    v = np.tile([1.0, 2.0], 40)
    s = MetricSeries.from_values("a", "m", v, t0=0)
    rows = ch.period_compare(TraceBundle([s], [], INV), 40 * 15, ["m"])
    assert rows[0].delta == 0.0

    pivot = T0 + 2 * DAY
    spec = GeneratorSpec(seed=9, days=4, base_interval=60,
                         inventory=InventorySpec(racks=3, nodes_per_rack=3, ml_racks=[2]),
                         series=[SeriesSpec("*", "power", "ar1", mean=300.0, scale=5.0, phi=0.5)],
                         shifts=[LevelShift("power", pivot, 50.0, ml_only=True)])
    bundle, _ = gen_bundle(spec)
    rows = {r.rack: r for r in ch.period_compare(bundle, pivot, ["power"])}
    assert rows["r02"].delta == pytest.approx(50.0, abs=1.0)
    assert abs(rows["r00"].delta) < 1.0 and abs(rows["r01"].delta) < 1.0


def test_join_anomalies():
    ok = job(100, state=JobState.COMPLETED, start=T0, jid="ok")
    assert ch.join_anomalies_jobs([T0 + 50], [ok]) == [(T0 + 50, [])]
    bad = job(100, state=JobState.FAILED, start=T0, jid="bad")
    assert ch.join_anomalies_jobs([T0 + 100], [bad])[0][1] == [bad]
    assert ch.join_anomalies_jobs([T0 + 150], [bad], slack=60)[0][1] == [bad]
    assert ch.join_anomalies_jobs([T0 + 161], [bad], slack=60)[0][1] == []
