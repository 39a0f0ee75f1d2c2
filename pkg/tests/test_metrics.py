"""Accounting tests: percentiles, size bins, utilization math, serializers."""

import csv
import json
import math

import pytest

from hoppersim.engine import Engine
from hoppersim.metrics import (
    BaselineTable,
    Counters,
    FlowRecord,
    aggregate_runs,
    bin_index,
    bin_labels,
    bin_slowdowns,
    drop_and_mark_totals,
    fmt_size,
    percentile,
    spine_spread,
    utilization_by_class,
    write_flows_csv,
    write_report_json,
)
from hoppersim.switchnet import Fabric
from hoppersim.topology import build_leaf_spine

GBPS = 10**9


def test_percentile_nearest_rank():
    vals = [10, 20, 30, 40, 50]
    assert percentile(vals, 50) == 30
    assert percentile(vals, 99) == 50
    assert percentile(vals, 1) == 10
    assert percentile([7], 99) == 7
    assert math.isnan(percentile([], 50))


def test_percentile_does_not_mutate_input():
    vals = [3, 1, 2]
    percentile(vals, 50)
    assert vals == [3, 1, 2]


def test_fmt_size_units():
    assert fmt_size(512) == "512B"
    assert fmt_size(1_000) == "1KB"
    assert fmt_size(2_500) == "2.5KB"
    assert fmt_size(2_000_000) == "2MB"
    assert fmt_size(10**9) == "1GB"


def test_bin_labels_and_index():
    edges = [2_000_000, 4_000_000, 8_000_000]
    assert bin_labels(edges) == ["<=2MB", "2MB-4MB", "4MB-8MB", ">8MB"]
    assert bin_index(2_000_000, edges) == 0    # boundary goes to the lower bin
    assert bin_index(2_000_001, edges) == 1
    assert bin_index(8_000_001, edges) == 3
    assert bin_labels([]) == ["all"]
    assert bin_index(123, []) == 0


def test_bin_labels_reject_unsorted_edges():
    with pytest.raises(ValueError, match="strictly increasing"):
        bin_labels([5, 3])
    with pytest.raises(ValueError, match="strictly increasing"):
        bin_labels([3, 3])


def rec(fid, size, start, finish, baseline, **kw):
    return FlowRecord(fid, "h0", "h4", size, "cross", start, finish,
                      baseline_ns=baseline, **kw)


def test_flow_record_derived_fields():
    r = rec(0, 1_000, 100, 600, 250)
    assert r.fct_ns == 500
    assert r.slowdown == 2.0
    assert math.isnan(rec(1, 1_000, 0, 500, 0).slowdown)


def test_bin_slowdowns_excludes_unfinished_and_baselineless():
    edges = [10_000]
    records = [
        rec(0, 1_000, 0, 200, 100),       # slowdown 2
        rec(1, 1_000, 0, 400, 100),       # slowdown 4
        rec(2, 1_000, 0, 0, 100),         # never finished
        rec(3, 1_000, 0, 300, 0),         # no baseline
        rec(4, 50_000, 0, 900, 300),      # slowdown 3, upper bin
    ]
    out = bin_slowdowns(records, edges)
    assert out["<=10KB"]["n"] == 2
    assert out["<=10KB"]["avg"] == pytest.approx(3.0)
    assert out["<=10KB"]["p50"] == 2
    assert out["<=10KB"]["max"] == 4
    assert out[">10KB"] == {"n": 1, "avg": 3.0, "p50": 3.0, "p99": 3.0, "max": 3.0}


def test_bin_slowdowns_empty_bin_is_none_filled():
    out = bin_slowdowns([], [100])
    assert out["<=100B"] == {"n": 0, "avg": None, "p50": None, "p99": None,
                             "max": None}


def test_counters_start_at_zero_and_serialize():
    c = Counters()
    d = c.as_dict()
    assert set(d) == set(Counters.NAMES)
    assert all(v == 0 for v in d.values())
    c.switches += 3
    assert c.as_dict()["switches"] == 3


def test_baseline_table_memoizes():
    calls = []

    def compute(size, chunk, pc):
        calls.append((size, chunk, pc))
        return size * 2

    t = BaselineTable(compute)
    assert t.get(100, 0, "cross") == 200
    assert t.get(100, 0, "cross") == 200
    assert t.get(100, 0, "intra") == 200
    assert len(calls) == 2


# ---------------------------------------------------------------------------
# fabric-coupled accounting


@pytest.fixture()
def loaded_fabric():
    topo = build_leaf_spine(4, 2, 2, host_bw_bps=100 * GBPS,
                            fabric_bw_bps=100 * GBPS)
    eng = Engine(0)
    fab = Fabric(topo, eng, lambda pkt: None, eng.rng("ecn"))
    return topo, fab


def test_utilization_by_class_math(loaded_fabric):
    topo, fab = loaded_fabric
    # hand-crafted carried bytes: one host link and one up link
    fab.links[("h0", "l0")].bytes_out = 125_000     # 1 ms at 1 Gb/s -> util .01
    fab.links[("l0", "s0")].bytes_out = 1_250_000
    u = utilization_by_class(fab, 1_000_000)
    assert u["host-100g"]["links"] == 8
    assert u["host-100g"]["bytes"] == 125_000
    assert u["host-100g"]["max_util"] == pytest.approx(0.01)
    assert u["host-100g"]["avg_util"] == pytest.approx(0.01 / 8)
    assert u["fabric-100g"]["max_util"] == pytest.approx(0.1)


def test_spine_spread_and_imbalance(loaded_fabric):
    topo, fab = loaded_fabric
    fab.links[("l0", "s0")].bytes_out = 3_000
    fab.links[("l1", "s0")].bytes_out = 1_000
    fab.links[("l0", "s1")].bytes_out = 2_000
    s = spine_spread(fab)
    assert s["per_spine"] == {"s0": 4_000, "s1": 2_000}
    assert s["imbalance"] == pytest.approx(4_000 / 3_000)


def test_drop_and_mark_totals(loaded_fabric):
    topo, fab = loaded_fabric
    fab.links[("h0", "l0")].drops = 2
    fab.links[("l0", "s1")].ecn_marks = 5
    fab.links[("s1", "l1")].lost = 1
    assert drop_and_mark_totals(fab) == {
        "queue_drops": 2, "ecn_marks": 5, "injected_losses": 1}


# ---------------------------------------------------------------------------
# aggregation and serialization


def fake_report(seed, avg):
    return {
        "meta": {"seed": seed},
        "slowdown": {"all": {"n": 5, "avg": avg, "p50": avg, "p99": avg * 2,
                             "max": avg * 3}},
        "utilization": {"host-100g": {"links": 4, "bytes": 10,
                                      "avg_util": avg / 10, "max_util": avg / 5}},
    }


def test_aggregate_runs_mean_and_std():
    agg = aggregate_runs([fake_report(1, 2.0), fake_report(2, 4.0)])
    assert agg["seeds"] == [1, 2]
    assert agg["slowdown"]["all"]["avg"] == {"mean": 3.0, "std": pytest.approx(
        2.0 ** 0.5), "n": 2}
    assert agg["utilization"]["host-100g"]["max_util"]["mean"] == pytest.approx(0.6)


def test_aggregate_runs_skips_empty_bins():
    a = fake_report(1, 2.0)
    b = fake_report(2, 4.0)
    b["slowdown"]["all"]["avg"] = None
    agg = aggregate_runs([a, b])
    assert agg["slowdown"]["all"]["avg"] == {"mean": 2.0, "std": 0.0, "n": 1}


def test_single_run_aggregate_has_zero_std():
    agg = aggregate_runs([fake_report(7, 3.0)])
    assert agg["slowdown"]["all"]["avg"]["std"] == 0.0


def test_write_report_json_roundtrip(tmp_path):
    p = tmp_path / "r.json"
    report = {"meta": {"seed": 3}, "slowdown": {}}
    write_report_json(p, report)
    assert json.loads(p.read_text()) == report
    assert p.read_text().endswith("\n")


def test_write_flows_csv_sorted_by_start(tmp_path):
    p = tmp_path / "f.csv"
    records = [rec(2, 1_000, 500, 900, 100), rec(1, 1_000, 100, 450, 100)]
    write_flows_csv(p, records)
    rows = list(csv.reader(p.open()))
    assert rows[0] == list(FlowRecord.CSV_FIELDS)
    assert [r[0] for r in rows[1:]] == ["1", "2"]
    assert rows[1][rows[0].index("slowdown")] == "3.5000"
