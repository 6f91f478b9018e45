import csv
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from greenfront.tracking import (
    RunRecord,
    TrackingError,
    UndefinedCorrelation,
    append_run,
    correlation_report,
    export_csv,
    format_table,
    frontier_report,
    load_runs,
    pearson,
    varying_parameters,
)
from table5 import ROWS, record, seeded_log


def test_roundtrip(tmp_path):
    log = tmp_path / "runs.jsonl"
    records = seeded_log(20)
    for r in records:
        append_run(log, r)
    assert load_runs(log) == records


def test_missing_log_is_empty(tmp_path):
    assert load_runs(tmp_path / "absent.jsonl") == []


def test_missing_directory(tmp_path):
    with pytest.raises(TrackingError):
        append_run(tmp_path / "nope" / "runs.jsonl", record(1, 0.5, 1.0, 1, True, 1, 1))


def test_torn_final_line_ignored(tmp_path):
    log = tmp_path / "runs.jsonl"
    append_run(log, record(1, 0.5, 1.0, 1, True, 1, 1))
    with open(log, "a") as fh:
        fh.write('{"trial_id": 2, "conf')
    assert [r.trial_id for r in load_runs(log)] == [1]


def test_corrupt_middle_line_raises(tmp_path):
    log = tmp_path / "runs.jsonl"
    log.write_text("garbage\n" + record(1, 0.5, 1.0, 1, True, 1, 1).to_json() + "\n")
    with pytest.raises(TrackingError):
        load_runs(log)


def test_nonfinite_values_rejected(tmp_path):
    with pytest.raises(ValueError):
        append_run(tmp_path / "runs.jsonl", record(1, math.nan, 1.0, 1, True, 1, 1))


def test_frontier_reproduces_optimal_rows():
    columns, rows = frontier_report(seeded_log(), parameters=["layers", "max_pool", "filters", "kernel_size"])
    assert columns == ["performance", "efficiency", "layers", "max_pool", "filters", "kernel_size"]
    assert [tuple(r) for r in rows] == ROWS


def test_frontier_ignores_failed_trials():
    records = seeded_log(10) + [record(999, 0.99, 99.0, 1, True, 1, 1, status="oom")]
    _, rows = frontier_report(records, parameters=[])
    assert len(rows) == 7


def test_frontier_default_parameters_vary():
    records = seeded_log(30)
    assert varying_parameters(records) == ["layers", "max_pool", "filters", "kernel_size"]


def test_frontier_minimised_objective():
    records = [record(i, p, e, 1, True, 1, 1) for i, (p, e) in enumerate([(0.5, 1.0), (0.6, 2.0), (0.4, 0.5)])]
    _, rows = frontier_report(records, ["performance:max", "efficiency:min"], parameters=[])
    assert rows == [[0.6, 2.0], [0.5, 1.0], [0.4, 0.5]]


def test_format_table_alignment():
    text = format_table(["performance", "layers", "max_pool"], [[0.7609, 4, True], [0.47, 12, False]])
    lines = text.splitlines()
    assert lines[0].split() == ["performance", "layers", "max_pool"]
    assert len(lines) == 4
    assert lines[2].index("0.7609") + len("0.7609") == lines[3].index("0.47") + len("0.47")


def test_pearson_examples():
    assert pearson([1, 2, 3], [2, 4, 6]) == pytest.approx(1.0)
    assert pearson([1, 2, 3], [3, 2, 1]) == pytest.approx(-1.0)
    with pytest.raises(UndefinedCorrelation):
        pearson([1, 1, 1], [1, 2, 3])


@given(st.lists(st.tuples(st.floats(-1e3, 1e3), st.floats(-1e3, 1e3)), min_size=3, max_size=30),
       st.floats(0.1, 10), st.floats(-5, 5))
def test_pearson_properties(pairs, scale, shift):
    xs, ys = zip(*pairs)
    if np.ptp(xs) < 1e-3 or np.ptp(ys) < 1e-3:
        return
    r = pearson(xs, ys)
    assert -1.0 <= r <= 1.0
    assert pearson(ys, xs) == pytest.approx(r, abs=1e-9)
    assert pearson([scale * x + shift for x in xs], ys) == pytest.approx(r, abs=1e-6)


def test_pearson_matches_numpy():
    rng = np.random.default_rng(0)
    x, y = rng.normal(size=50), rng.normal(size=50)
    assert pearson(x, y) == pytest.approx(np.corrcoef(x, y)[0, 1], abs=1e-12)


def test_correlation_report():
    records = seeded_log(40)
    ((pair, r),) = correlation_report(records, [("params", "total_joules")])
    assert pair == ("params", "total_joules") and -1 <= r <= 1
    constant = [record(i, 0.5, 1.0, 1, True, 1, 1) for i in range(4)]
    assert correlation_report(constant, [("performance", "efficiency")])[0][1] is None
    with pytest.raises(KeyError):
        correlation_report(records, [("params", "nope")])


def test_csv_roundtrip_full_precision(tmp_path):
    records = seeded_log(10)
    records[0].objectives["performance"] = 0.1 + 0.2
    out = tmp_path / "runs.csv"
    export_csv(records, ["trial_id", "performance", "efficiency", "filters", "total_joules"], out)
    with open(out, newline="") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["trial_id", "performance", "efficiency", "filters", "total_joules"]
    for r, row in zip(records, rows[1:]):
        assert int(row[0]) == r.trial_id
        assert float(row[1]) == r.objectives["performance"]
        assert float(row[4]) == r.energy["total_joules"]
    assert rows[1][1] == repr(0.1 + 0.2)


def test_csv_unknown_column(tmp_path):
    with pytest.raises(KeyError):
        export_csv(seeded_log(2), ["bogus"], tmp_path / "x.csv")


def test_metric_lookup():
    r = RunRecord(1, {"lr": 0.1}, {"performance": 0.5}, energy={"total_joules": 2.0,
                  "joules_by_component": {"cpu": 1.5}}, metadata={"params": 9})
    assert r.metric("performance") == 0.5
    assert r.metric("cpu_joules") == 1.5
    assert r.metric("params") == 9
    assert r.metric("lr") == 0.1
    assert r.metric("status") == "ok"
