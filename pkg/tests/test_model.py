import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

import oracles
from holistat.errors import DegenerateInput, InvalidInput
from holistat.model import (IntensityClass, JobRecord, JobState, MetricSeries, NodeInfo, TraceBundle,
                            classify_intensity, cluster_load_utilization, hourly_max_class, normalize_minmax,
                            normalize_p99_clip, percentile, resample)


def series(values, t0=0, base=15, node="n1", metric="m"):
    return MetricSeries.from_values(node, metric, values, t0=t0, base_interval=base)


# -- MetricSeries ---------------------------------------------------------------

def test_series_rejects_unsorted_timestamps():
    with pytest.raises(InvalidInput):
        MetricSeries("n", "m", np.array([0, 30, 15]), np.zeros(3), np.ones(3, bool))


def test_series_rejects_off_grid_gap():
    with pytest.raises(InvalidInput):
        MetricSeries("n", "m", np.array([0, 20]), np.zeros(2), np.ones(2, bool))


def test_series_rejects_nonfinite_present_value():
    with pytest.raises(InvalidInput):
        MetricSeries("n", "m", np.array([0, 15]), np.array([1.0, np.inf]), np.ones(2, bool))


def test_missing_samples_sit_behind_mask():
    s = MetricSeries.from_samples("n", "m", [(0, 1.0), (15, None), (30, 3.0)])
    assert s.present.tolist() == [True, False, True]
    assert s.present_values().tolist() == [1.0, 3.0]
    assert s.present_timestamps().tolist() == [0, 30]


def test_bundle_keys_and_metric_lookup():
    a, b = series([1, 2], node="a"), series([3, 4], node="b")
    bundle = TraceBundle([b, a])
    assert bundle.sorted_keys() == [("a", "m"), ("b", "m")]
    assert [s.node_id for s in bundle.metric("m")] == ["a", "b"]
    assert bundle.time_span() == (0, 15)


def test_job_rejects_end_before_start():
    with pytest.raises(InvalidInput):
        JobRecord("j", "u", 0, 10, 5, 1, JobState.COMPLETED)


# -- resample -----------------------------------------------------------------

def test_resample_two_samples_to_one_bin():
    r = resample(series([2.0, 4.0]), 30)
    assert r.timestamps.tolist() == [0]
    assert r.values.tolist() == [3.0]
    assert r.base_interval == 30


def test_resample_identity_at_base_interval():
    s = series([1.0, 5.0, 2.0], t0=45)
    assert resample(s, 15) == s


def test_resample_constant_block_600s():
    # 40 samples of 7.25 at 15 s -> one 600 s bin of 7.25
    r = resample(series([7.25] * 40, t0=1200), 600)
    assert r.timestamps.tolist() == [1200]
    assert r.values.tolist() == [7.25]


def test_resample_bins_are_epoch_aligned_and_partial_bins_kept():
    s = series(np.arange(6, dtype=float), t0=45)  # 45..120
    r = resample(s, 60)
    assert r.timestamps.tolist() == [0, 60, 120]
    assert r.values.tolist() == [0.0, 2.5, 5.0]
    d = resample(s, 60, drop_partial=True)
    assert d.timestamps.tolist() == [60]


def test_resample_all_missing_bin_is_missing():
    s = MetricSeries.from_samples("n", "m", [(0, None), (15, None), (30, 4.0)])
    r = resample(s, 30)
    assert r.present.tolist() == [False, True]
    assert r.values[1] == 4.0


def test_resample_rejects_non_multiple_width():
    with pytest.raises(InvalidInput):
        resample(series([1.0, 2.0]), 20)


@given(st.lists(st.floats(-1e6, 1e6, allow_nan=False), min_size=1, max_size=200),
       st.sampled_from([30, 60, 300, 600]), st.integers(0, 100))
def test_resample_conserves_mass(values, width, offset):
    s = series(values, t0=15 * offset)
    r = resample(s, width)
    counts = np.bincount(np.searchsorted(r.timestamps, (s.timestamps // width) * width))
    total = math.fsum(v * c for v, c in zip(r.values.tolist(), counts.tolist()))
    assert total == pytest.approx(math.fsum(values), rel=1e-12, abs=1e-6)


# -- normalization -----------------------------------------------------------

def test_minmax_direct_formula():
    assert normalize_minmax(series([2.0, 4.0, 6.0])).values.tolist() == [0.0, 0.5, 1.0]


def test_minmax_unit_range_unchanged():
    vals = [0.0, 0.25, 1.0, 0.5]
    assert normalize_minmax(series(vals)).values.tolist() == vals


def test_minmax_constant_raises_or_zeros():
    with pytest.raises(DegenerateInput):
        normalize_minmax(series([5.0, 5.0, 5.0]))
    assert normalize_minmax(series([5.0, 5.0]), on_constant="zero").values.tolist() == [0.0, 0.0]


@given(st.lists(st.floats(-1e9, 1e9, allow_nan=False), min_size=2, max_size=50))
def test_minmax_lands_in_unit_interval(values):
    if max(values) == min(values):
        return
    out = normalize_minmax(series(values)).values
    assert out.min() == 0.0 and out.max() == 1.0


def test_p99_of_one_to_hundred():
    vals = np.arange(1, 101, dtype=float)
    assert percentile(vals, 99) == pytest.approx(99.01, abs=1e-12)
    assert oracles.percentile_linear(vals.tolist(), 99) == pytest.approx(99.01, abs=1e-12)
    out = normalize_p99_clip(vals)
    assert out[-1] == 1.0
    assert out[0] == pytest.approx(1 / 99.01)


def test_p99_constant_and_zero():
    assert normalize_p99_clip([3.0, 3.0, 3.0]).tolist() == [1.0, 1.0, 1.0]
    assert normalize_p99_clip([0.0, 2.0, 2.0])[0] == 0.0


@given(st.lists(st.floats(-1e6, 1e6, allow_nan=False), min_size=1, max_size=60), st.floats(0, 100))
def test_percentile_matches_oracle(values, q):
    assert percentile(values, q) == pytest.approx(oracles.percentile_linear(values, q), rel=1e-9, abs=1e-6)


# -- intensity ---------------------------------------------------------------

@pytest.mark.parametrize("v, expected", [
    (0.0, IntensityClass.VERY_LOW), (0.2, IntensityClass.LOW), (0.5, IntensityClass.MODERATE),
    (0.8, IntensityClass.VERY_HIGH), (1.0, IntensityClass.VERY_HIGH), (0.79, IntensityClass.HIGH),
])
def test_classify_bands(v, expected):
    assert classify_intensity(v) is expected


def test_classify_rejects_out_of_range():
    with pytest.raises(InvalidInput):
        classify_intensity(1.01)


def test_hourly_max_dominates_and_missing_hour():
    s = MetricSeries.from_samples("n", "m", [(0, 0.1), (15, 0.95), (3600, None), (7200, 0.45)])
    cells = hourly_max_class(s)
    assert cells == [(0, IntensityClass.VERY_HIGH), (3600, None), (7200, IntensityClass.MODERATE)]


def test_hourly_constant_045_is_moderate():
    s = series([0.45] * 240)
    assert [c for _, c in hourly_max_class(s)] == [IntensityClass.MODERATE]


# -- cluster utilization -----------------------------------------------------------

INV = {"a": NodeInfo("r0", 16), "b": NodeInfo("r0", 16)}


def test_utilization_exact_half_and_clip():
    u = cluster_load_utilization([series([8.0], node="a"), series([8.0], node="b")], INV)
    assert u.values.tolist() == [0.5]
    u = cluster_load_utilization([series([40.0], node="a"), series([40.0], node="b")], INV)
    assert u.values.tolist() == [1.0]


def test_utilization_missing_node_drops_its_cores():
    a = series([4.0, 6.0], node="a")
    b = MetricSeries.from_samples("b", "m", [(0, 12.0), (15, None)])
    u = cluster_load_utilization([a, b], INV)
    # second timestamp: only node a reports -> 6 / 16
    assert u.values.tolist() == [16.0 / 32.0, 6.0 / 16.0]
