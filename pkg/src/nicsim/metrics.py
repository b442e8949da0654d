"""Metric aggregation and report emission (JSON / CSV, byte-stable).

Serializers take the report's dict form so a report fetched from the
service and one produced in-process emit identical bytes.
"""

import csv
import io
import json
from dataclasses import dataclass, field


class LatencyHist:
    """Power-of-two bucket histogram over integer nanoseconds."""

    def __init__(self):
        self.buckets = {}
        self.count = 0
        self.total = 0
        self.min = None
        self.max = None

    def record(self, ns):
        b = 0 if ns <= 0 else ns.bit_length()
        self.buckets[b] = self.buckets.get(b, 0) + 1
        self.count += 1
        self.total += ns
        self.min = ns if self.min is None else min(self.min, ns)
        self.max = ns if self.max is None else max(self.max, ns)

    @property
    def mean(self):
        return self.total // self.count if self.count else 0

    def to_dict(self):
        return {
            "count": self.count,
            "min_ns": self.min if self.min is not None else 0,
            "max_ns": self.max if self.max is not None else 0,
            "mean_ns": self.mean,
            "buckets": {str(b): self.buckets[b] for b in sorted(self.buckets)},
        }


HIST_PATHS = ("read_fast", "read_slow", "read_blocked", "write")

_SCALAR_FIELDS = (
    "net_sent", "net_recv", "pcie_msgs", "pcie_payload_bytes",
    "cache_size", "cache_evictions", "cache_overflow", "flush_batches",
    "log_len",
)


@dataclass
class ReplicaReport:
    rid: int
    counters: dict = field(default_factory=dict)
    net_sent: int = 0
    net_recv: int = 0
    pcie_msgs: int = 0
    pcie_payload_bytes: int = 0
    cache_size: int = 0
    cache_evictions: int = 0
    cache_overflow: int = 0
    flush_batches: int = 0
    log_floor: int = 0
    log_len: int = 0
    crashed: bool = False
    hists: dict = field(default_factory=dict)

    def to_dict(self):
        d = {"rid": self.rid, "crashed": self.crashed, "log_floor": self.log_floor}
        for f in _SCALAR_FIELDS:
            d[f] = getattr(self, f)
        d.update(self.counters)
        d["latency"] = {p: h.to_dict() for p, h in self.hists.items()}
        return d


@dataclass
class MetricsReport:
    seed: int
    replicas: list = field(default_factory=list)
    run: dict = field(default_factory=dict)

    def to_dict(self):
        rows = [r.to_dict() for r in self.replicas]
        agg = {}
        for f in _SCALAR_FIELDS:
            agg[f] = sum(row[f] for row in rows)
        counter_keys = sorted(self.replicas[0].counters) if self.replicas else []
        for k in counter_keys:
            agg[k] = sum(row.get(k, 0) for row in rows)
        return {
            "seed": self.seed,
            "run": self.run,
            "aggregate": agg,
            "replicas": rows,
        }

    def to_json_bytes(self):
        return report_json_bytes(self.to_dict())

    def to_csv_bytes(self):
        return report_csv_bytes(self.to_dict())


def report_json_bytes(report_dict):
    return (json.dumps(report_dict, sort_keys=True, indent=2) + "\n").encode()


def report_csv_bytes(report_dict):
    rows = report_dict["replicas"]
    out = io.StringIO()
    columns = [k for k in rows[0] if k != "latency"]
    for path in HIST_PATHS:
        columns += [f"lat_{path}_count", f"lat_{path}_mean_ns", f"lat_{path}_max_ns"]
    writer = csv.DictWriter(out, fieldnames=columns, extrasaction="ignore")
    writer.writeheader()
    for row in rows:
        flat = {k: v for k, v in row.items() if k != "latency"}
        for path in HIST_PATHS:
            h = row["latency"].get(path, {"count": 0, "mean_ns": 0, "max_ns": 0})
            flat[f"lat_{path}_count"] = h["count"]
            flat[f"lat_{path}_mean_ns"] = h["mean_ns"]
            flat[f"lat_{path}_max_ns"] = h["max_ns"]
        writer.writerow(flat)
    agg_row = {"rid": "aggregate"}
    agg_row.update(report_dict["aggregate"])
    writer.writerow(agg_row)
    return out.getvalue().encode()


def serialize_report(report_dict, fmt):
    if fmt == "json":
        return report_json_bytes(report_dict)
    if fmt == "csv":
        return report_csv_bytes(report_dict)
    raise ValueError(f"unknown report format {fmt!r}")


def emit_report(report, fmt, path):
    d = report.to_dict() if isinstance(report, MetricsReport) else report
    data = serialize_report(d, fmt)
    try:
        with open(path, "wb") as f:
            f.write(data)
    except OSError as e:
        raise OSError(f"cannot write report to {path}: {e}") from e
