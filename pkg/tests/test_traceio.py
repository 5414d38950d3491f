import pytest

from holistat.errors import TraceFormatError
from holistat.model import JobState
from holistat.synth import default_spec, gen_bundle
from holistat.traceio import read_bundle, read_inventory, read_jobs, read_metrics, write_bundle

HEADER = "timestamp,node,metric,value\n"


def write(tmp_path, name, text):
    p = tmp_path / name
    p.write_text(text, encoding="utf-8")
    return p


def test_metrics_parse_with_missing_and_gcd_interval(tmp_path):
    p = write(tmp_path, "m.csv", HEADER + "0,a,load,1.5\n60,a,load,\n30,a,load,2\n0,b,load,7\n")
    series = {s.key: s for s in read_metrics(p)}
    a = series[("a", "load")]
    assert a.base_interval == 30
    assert a.timestamps.tolist() == [0, 30, 60]
    assert a.present.tolist() == [True, True, False]


@pytest.mark.parametrize("body, line, column", [
    ("0,a,load,x\n", 2, 4),
    ("zero,a,load,1\n", 2, 1),
    ("0,a,load\n", 2, 4),
    ("0,,load,1\n", 2, 2),
    ("0,a,load,1\n0,a,load,2\n", 3, 1),
    ("0,a,load,inf\n", 2, 4),
])
def test_metrics_errors_carry_position(tmp_path, body, line, column):
    p = write(tmp_path, "m.csv", HEADER + body)
    with pytest.raises(TraceFormatError) as info:
        read_metrics(p)
    err = info.value
    assert (err.line, err.column) == (line, column)
    assert str(p) in str(err)


def test_empty_and_wrong_header(tmp_path):
    with pytest.raises(TraceFormatError, match="empty"):
        read_metrics(write(tmp_path, "e.csv", ""))
    with pytest.raises(TraceFormatError) as info:
        read_metrics(write(tmp_path, "h.csv", "time,node,metric,value\n"))
    assert info.value.line == 1


def test_jobs_and_inventory(tmp_path):
    jobs = write(tmp_path, "j.csv", "job_id,user_id,submit,start,end,cores,state,is_ml,nodes\n"
                                    "1,u,0,5,65,16,completed,0,a;b\n")
    j = read_jobs(jobs)[0]
    assert j.state is JobState.COMPLETED and j.nodes == ("a", "b") and j.runtime == 60
    bad = write(tmp_path, "b.csv", "job_id,user_id,submit,start,end,cores,state,is_ml,nodes\n"
                                   "1,u,0,5,65,16,EXPLODED,0,a\n")
    with pytest.raises(TraceFormatError) as info:
        read_jobs(bad)
    assert info.value.column == 7
    inv = write(tmp_path, "i.csv", "node,rack,cores,is_ml\na,r0,16,yes\n")
    assert read_inventory(inv)["a"].is_ml_node is True


def test_bundle_round_trip(tmp_path):
    bundle, truth = gen_bundle(default_spec(seed=1, days=1))
    write_bundle(tmp_path, bundle, truth)
    back = read_bundle(tmp_path)
    assert back.series == bundle.series
    assert back.jobs == bundle.jobs
    assert back.inventory == bundle.inventory


def test_error_dict_is_machine_readable(tmp_path):
    p = write(tmp_path, "m.csv", HEADER + "0,a,load,x\n")
    with pytest.raises(TraceFormatError) as info:
        read_metrics(p)
    d = info.value.to_dict()
    assert d["error"] == "TraceFormatError" and d["line"] == 2 and d["file"] == str(p)
