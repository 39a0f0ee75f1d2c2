"""Run accounting: event counters, per-flow records, slowdown bins, link utilization."""

import csv
import json
import math
import statistics
from dataclasses import dataclass


class Counters:
    """Flat event tallies, one attribute per kind so hot paths stay cheap."""

    NAMES = (
        "flows_started", "flows_completed",
        "data_sent", "retx_sent", "acks_sent", "nacks_sent",
        "dup_delivered", "ooo_buffered", "rto_fires",
        "probes_sent", "probe_replies",
        "switches", "migrations_scheduled",
        "qps_created", "qps_released",
    )
    __slots__ = NAMES

    def __init__(self):
        for n in self.NAMES:
            setattr(self, n, 0)

    def as_dict(self):
        return {n: getattr(self, n) for n in self.NAMES}


@dataclass
class FlowRecord:
    fid: int
    src: str
    dst: str
    size: int
    pair_class: str           # "intra" (same leaf) or "cross"
    start_ns: int
    finish_ns: int
    chunk: int = 0
    baseline_ns: int = 0      # unloaded FCT for the same size and pair class
    switches: int = 0
    retx: int = 0

    @property
    def fct_ns(self) -> int:
        return self.finish_ns - self.start_ns

    @property
    def slowdown(self) -> float:
        return self.fct_ns / self.baseline_ns if self.baseline_ns else math.nan

    CSV_FIELDS = ("fid", "src", "dst", "size", "chunk", "pair_class",
                  "start_ns", "finish_ns", "fct_ns", "baseline_ns", "slowdown",
                  "switches", "retx")

    def csv_row(self):
        return [self.fid, self.src, self.dst, self.size, self.chunk,
                self.pair_class, self.start_ns, self.finish_ns, self.fct_ns,
                self.baseline_ns, f"{self.slowdown:.4f}", self.switches,
                self.retx]


def percentile(values, p: float):
    """Nearest-rank percentile; values need not be sorted."""
    if not values:
        return math.nan
    vs = sorted(values)
    k = max(1, math.ceil(p / 100.0 * len(vs)))
    return vs[min(k, len(vs)) - 1]


def fmt_size(n: int) -> str:
    for unit, div in (("GB", 10**9), ("MB", 10**6), ("KB", 10**3)):
        if n >= div:
            q = n / div
            return f"{q:g}{unit}"
    return f"{n}B"


def bin_labels(edges):
    """Human labels for size bins split at the given byte edges."""
    if list(edges) != sorted(edges) or len(set(edges)) != len(edges):
        raise ValueError("bin edges must be strictly increasing")
    labels = []
    lo = None
    for e in edges:
        labels.append(f"<={fmt_size(e)}" if lo is None
                      else f"{fmt_size(lo)}-{fmt_size(e)}")
        lo = e
    labels.append(f">{fmt_size(lo)}" if lo is not None else "all")
    return labels


def bin_index(size: int, edges) -> int:
    for i, e in enumerate(edges):
        if size <= e:
            return i
    return len(edges)


def bin_slowdowns(records, edges):
    """Per-size-bin slowdown stats over completed flows with a baseline."""
    labels = bin_labels(edges)
    groups = [[] for _ in labels]
    for r in records:
        if r.finish_ns and r.baseline_ns:
            groups[bin_index(r.size, edges)].append(r.slowdown)
    out = {}
    for label, vals in zip(labels, groups):
        if vals:
            out[label] = {
                "n": len(vals),
                "avg": statistics.fmean(vals),
                "p50": percentile(vals, 50),
                "p99": percentile(vals, 99),
                "max": max(vals),
            }
        else:
            out[label] = {"n": 0, "avg": None, "p50": None, "p99": None, "max": None}
    return out


def utilization_by_class(fabric, duration_ns: int):
    """Mean and peak carried-load fraction per link class over the run window."""
    acc = {}
    for (src, dst), ls in fabric.links.items():
        link = fabric.topo.links[(src, dst)]
        util = ls.bytes_out * 8.0 * 1e9 / (link.bandwidth_bps * duration_ns)
        a = acc.setdefault(link.cls, {"links": 0, "bytes": 0, "_utils": []})
        a["links"] += 1
        a["bytes"] += ls.bytes_out
        a["_utils"].append(util)
    out = {}
    for cls in sorted(acc):
        a = acc[cls]
        us = a.pop("_utils")
        a["avg_util"] = statistics.fmean(us)
        a["max_util"] = max(us)
        out[cls] = a
    return out


def spine_spread(fabric):
    """Bytes carried upward through each spine plus a max/mean imbalance ratio."""
    per = fabric.per_spine_bytes()
    vals = list(per.values())
    mean = statistics.fmean(vals) if vals else 0.0
    return {
        "per_spine": per,
        "imbalance": (max(vals) / mean) if mean > 0 else 1.0,
    }


class BaselineTable:
    """Memo of unloaded completion times keyed by (size, chunk, pair class)."""

    def __init__(self, compute_fn):
        self._compute = compute_fn
        self._memo = {}

    def get(self, size: int, chunk: int, pair_class: str) -> int:
        key = (size, chunk, pair_class)
        t = self._memo.get(key)
        if t is None:
            t = self._compute(size, chunk, pair_class)
            self._memo[key] = t
        return t


def drop_and_mark_totals(fabric):
    drops = marks = lost = 0
    for ls in fabric.links.values():
        drops += ls.drops
        marks += ls.ecn_marks
        lost += ls.lost
    return {"queue_drops": drops, "ecn_marks": marks, "injected_losses": lost}


def aggregate_runs(reports):
    """Mean and sample-std of slowdown bins and utilization across seed runs."""

    def stats(vals):
        vals = [v for v in vals if v is not None]
        if not vals:
            return {"mean": None, "std": None, "n": 0}
        return {
            "mean": statistics.fmean(vals),
            "std": statistics.stdev(vals) if len(vals) > 1 else 0.0,
            "n": len(vals),
        }

    agg = {"seeds": [r["meta"]["seed"] for r in reports], "slowdown": {}, "utilization": {}}
    bins = reports[0]["slowdown"].keys()
    for b in bins:
        agg["slowdown"][b] = {
            stat: stats([r["slowdown"][b][stat] for r in reports])
            for stat in ("avg", "p50", "p99")
        }
    classes = reports[0]["utilization"].keys()
    for cls in classes:
        agg["utilization"][cls] = {
            stat: stats([r["utilization"][cls][stat] for r in reports])
            for stat in ("avg_util", "max_util")
        }
    return agg


def write_report_json(path, report):
    with open(path, "w") as f:
        json.dump(report, f, indent=2)
        f.write("\n")


def write_flows_csv(path, records):
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(FlowRecord.CSV_FIELDS)
        for r in sorted(records, key=lambda r: (r.start_ns, r.fid)):
            w.writerow(r.csv_row())
