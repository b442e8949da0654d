"""Acceptance suite: one test per criterion, one pass/fail line each.

Run with `pytest tests/test_acceptance.py -v -s` to see the per-criterion
lines as they pass.
"""

import math
import time

from nicsim.checker import HistoryEvent, check_history, check_key_linearizable
from nicsim.cli import main as cli_main
from nicsim.experiment import Cluster, ClusterConfig, run_experiment
from nicsim.oplog import COMMITTED, UpdateLog
from nicsim.workload import (
    Op,
    READ,
    SessionTrace,
    WRITE,
    WorkloadConfig,
    format_key,
    initial_fn,
    write_value,
)
import random


def ok_line(n, label):
    print(f"[acceptance] criterion {n} ({label}): PASS")


def with_final_reads(history, cluster):
    """Append one post-quiescence read per touched key from survivor state."""
    states = cluster.survivor_states()
    if not states:
        return list(history)
    base = states[min(states)]
    t = cluster.net.now + 1_000
    events = list(history)
    for i, key in enumerate(sorted(base)):
        value, _ts = base[key]
        events.append(HistoryEvent(
            session=1_000_000 + i, request_id=1, op="read", key=key, value=None,
            invoke_ns=t + 2 * i, response_ns=t + 2 * i + 1, outcome="ok",
            result_value=value,
        ))
    return events


# -- criterion 1: linearizability sweep ---------------------------------------


def test_criterion_1_linearizability_sweep():
    start = time.monotonic()
    for seed in range(1, 101):
        w = WorkloadConfig(replicas=3, key_count=16, key_size=8, value_size=16,
                           op_count=2_000, write_ratio=0.2, seed=seed)
        c = ClusterConfig(cache_capacity=64, net_jitter_ns=500)
        _, history, _ = run_experiment(w, c)
        result = check_history(
            history, initial_fn(w.key_count, w.key_size, w.value_size, w.seed)
        )
        assert result.ok, f"seed {seed}: {result.summary()}"
        assert not result.unchecked(), f"seed {seed} exceeded the op cap"

    # the checker must also detect planted violations, not just pass clean runs
    def ev(session, rq, op, key, invoke, response, **kw):
        return HistoryEvent(session=session, request_id=rq, op=op, key=key,
                            value=kw.get("value"), invoke_ns=invoke,
                            response_ns=response, outcome=kw.get("outcome", "ok"),
                            result_value=kw.get("result"))

    stale = [
        ev(0, 1, "write", "k", 0, 10, value="v1"),
        ev(1, 1, "read", "k", 20, 30, result="init"),
    ]
    assert check_key_linearizable(stale, initial="init").status == "violation"
    lost = [
        ev(0, 1, "write", "k", 0, 10, value="v1"),
        ev(0, 2, "write", "k", 20, 30, value="v2"),
        ev(1, 1, "read", "k", 40, 50, result="v1"),
    ]
    assert check_key_linearizable(lost, initial="init").status == "violation"
    flip = [
        ev(0, 1, "write", "k", 0, 100, value="v1"),
        ev(1, 1, "write", "k", 0, 100, value="v2"),
        ev(2, 1, "read", "k", 110, 120, result="v2"),
        ev(2, 2, "read", "k", 130, 140, result="v1"),
        ev(2, 3, "read", "k", 150, 160, result="v2"),
    ]
    assert check_key_linearizable(flip, initial="init").status == "violation"

    elapsed = time.monotonic() - start
    assert elapsed < 120, f"sweep took {elapsed:.0f}s, budget is 2 minutes"
    ok_line(1, f"100-seed linearizability sweep in {elapsed:.0f}s")


# -- criterion 2: crash convergence --------------------------------------------


def crash_workload(seed):
    return WorkloadConfig(replicas=3, key_count=24, key_size=8, value_size=16,
                          op_count=1_200, write_ratio=0.25, seed=seed)


def crash_cluster_cfg():
    return ClusterConfig(cache_capacity=64, net_jitter_ns=300)


def find_mid_write_crash_time(w, c, victim=0):
    """Probe run: first moment after warmup when the victim coordinates a write."""
    cluster = Cluster(w, c)
    probe = []
    cluster.replicas[victim].pending_probe = probe
    report, _ = cluster.run()
    final = report.to_dict()["run"]["final_time_ns"]
    warmup = final // 5
    for t, _key, _ts in probe:
        if t >= warmup:
            return t + c.net_latency_ns // 2  # invalidations in flight, no acks yet
    return probe[0][0] + c.net_latency_ns // 2 if probe else None


def test_criterion_2_crash_convergence():
    for seed in range(1, 51):
        w = crash_workload(seed)
        c = crash_cluster_cfg()
        crash_at = find_mid_write_crash_time(w, c)
        assert crash_at is not None, f"seed {seed}: no write to interrupt"
        cluster = Cluster(w, c, crashes=[(0, crash_at)])
        _, history = cluster.run()
        states = cluster.survivor_states()
        assert sorted(states) == [1, 2]
        assert states[1] == states[2], f"seed {seed}: survivors diverged"
        result = check_history(with_final_reads(history, cluster),
                               cluster.initial_value_fn())
        assert result.ok, f"seed {seed}: {result.summary()}"
        # every acked write remains readable: the checker (with final reads)
        # proves no acked write vanished, and a key with any acked write must
        # end on some written value, never back on its initial one
        acked_keys = {e.key for e in history if e.op == "write" and e.outcome == "ok"}
        written = {e.value for e in history if e.op == "write"}
        base = cluster.survivor_states()[1]
        for key in acked_keys:
            assert base[key][0] in written, f"seed {seed}: {key} reverted"
        # sessions on the dead node end unresolved, not wrong
        for e in history:
            if e.response_ns is None:
                assert e.session % 3 == 0
    ok_line(2, "50-seed mid-write coordinator crash convergence")


# -- criterion 3: message-count closed form --------------------------------------


def test_criterion_3_message_count_closed_form():
    n, n_sessions, writes_each = 5, 10, 100
    rng = random.Random(99)
    sessions = []
    for sid in range(n_sessions):
        ops = []
        for i in range(writes_each):
            key = format_key(sid * writes_each + i, 8)  # disjoint write keysets
            ops.append(Op(WRITE, key, write_value(sid * 1_000 + i, 16, 1)))
            ops.append(Op(READ, format_key(rng.randrange(1_000), 8)))
        sessions.append(SessionTrace(sid, sid % n, ops))
    w = WorkloadConfig(replicas=n, key_count=1_000, key_size=8, value_size=16,
                       op_count=0, seed=1)
    report, history, _ = run_experiment(w, ClusterConfig(cache_capacity=1_000),
                                        trace=sessions)
    d = report.to_dict()
    committed = d["aggregate"]["writes_ok"]
    assert committed == n_sessions * writes_each == 1_000
    assert d["aggregate"]["writes_superseded"] == 0
    net = d["run"]["net"]
    assert net["sent"] == 3 * (n - 1) * committed == 12_000
    assert net["by_type"] == {"Ack": 4_000, "Commit": 4_000, "Inv": 4_000}
    assert d["aggregate"]["replays"] == 0  # failure-free: no timer ever fires
    reads = [e for e in history if e.op == "read"]
    assert len(reads) == 1_000 and all(e.response_ns is not None for e in reads)
    ok_line(3, "3(N-1)W = 12000 protocol messages, reads use none")


# -- criterion 4: dual-path accounting --------------------------------------------


def test_criterion_4_dual_path_accounting():
    w = WorkloadConfig(replicas=3, key_count=1_000, key_size=8, value_size=16,
                       op_count=4_000, write_ratio=0.2, seed=6)

    # capacity >= key count: everything is fast path, PCIe carries only flushes
    big = run_experiment(w, ClusterConfig(cache_capacity=1_000))[0].to_dict()
    assert big["aggregate"]["reads_slow"] == 0
    pcie_types = big["run"]["pcie"]["by_type"]
    assert set(pcie_types) == {"FlushBatch", "DurableAck"}
    assert pcie_types["FlushBatch"] == pcie_types["DurableAck"]
    assert pcie_types["FlushBatch"] == big["aggregate"]["flush_batches"]

    # capacity at 10% of the keyspace: every miss costs exactly two PCIe
    # messages and at least the full PCIe round trip
    small = run_experiment(w, ClusterConfig(cache_capacity=100))[0].to_dict()
    slow = small["aggregate"]["reads_slow"]
    assert slow > 0
    pcie_types = small["run"]["pcie"]["by_type"]
    assert pcie_types["FetchRequest"] == slow
    assert pcie_types["FetchResponse"] == slow
    assert small["run"]["pcie"]["sent"] == 2 * slow + 2 * small["aggregate"]["flush_batches"]
    for rep in small["replicas"]:
        hist = rep["latency"]["read_slow"]
        if hist["count"]:
            assert hist["min_ns"] >= 500
    ok_line(4, "dual-path: warm cache 0 slow reads; 2 PCIe msgs and >=500ns per miss")


# -- criterion 5: batching ------------------------------------------------------------


def test_criterion_5_batching_closed_form():
    writes = 256
    key_size, value_size = 8, 16
    per_entry = 8 + key_size + value_size + 12
    trace = [SessionTrace(0, 0, [
        Op(WRITE, format_key(i, key_size), write_value(i, value_size, 1))
        for i in range(writes)
    ])]
    w = WorkloadConfig(replicas=1, key_count=writes, key_size=key_size,
                       value_size=value_size, op_count=0, seed=1)
    for batch in (1, 4, 16, 64):
        c = ClusterConfig(cache_capacity=writes, batch_size=batch, flush_timer_ns=0)
        report, _, _ = run_experiment(w, c, trace=trace)
        d = report.to_dict()
        batches = d["aggregate"]["flush_batches"]
        assert batches == math.ceil(writes / batch)
        pcie = d["run"]["pcie"]
        assert pcie["by_type"] == {"FlushBatch": batches, "DurableAck": batches}
        expected_payload = writes * per_entry + batches * 1 + batches * 9
        assert pcie["payload_bytes"] == expected_payload
        assert pcie["bytes"] == expected_payload + 32 * pcie["sent"]
    ok_line(5, "ceil(W/B) batches and exact 32B-header byte accounting")


# -- criterion 6: log safety -----------------------------------------------------------


class AuditedLog(UpdateLog):
    """Re-verifies the compaction contract independently on every call."""

    audit_compactions = 0

    def compact(self, up_to_index):
        for i in range(self.floor, up_to_index + 1):
            e = self.entry(i)
            assert e.status == COMMITTED, f"compaction would drop proposed entry {i}"
            assert e.commit_index <= self.durable_commit_index, (
                f"compaction would pass the durable mark at entry {i}"
            )
        AuditedLog.audit_compactions += 1
        return super().compact(up_to_index)


def test_criterion_6_log_safety():
    AuditedLog.audit_compactions = 0
    for seed in range(1, 101):
        w = WorkloadConfig(replicas=3, key_count=24, key_size=8, value_size=16,
                           op_count=800, write_ratio=0.3, seed=seed)
        c = ClusterConfig(cache_capacity=16, batch_size=4, flush_timer_ns=1_000,
                          net_jitter_ns=400)
        crashes = [(seed % 3, 15_000)] if seed % 2 == 0 else []
        cluster = Cluster(w, c, crashes=crashes)
        for rep in cluster.replicas:
            rep.log = AuditedLog()
        _, history = cluster.run()
        states = cluster.survivor_states()
        baseline = states[min(states)]
        for rid, state in states.items():
            assert state == baseline, f"seed {seed}: replica {rid} diverged"
        result = check_history(with_final_reads(history, cluster),
                               cluster.initial_value_fn())
        assert result.ok, f"seed {seed}: {result.summary()}"
    assert AuditedLog.audit_compactions > 1_000  # compaction was actually exercised
    ok_line(6, f"log safety over 100 seeds ({AuditedLog.audit_compactions} audited compactions)")


# -- criterion 7: determinism -------------------------------------------------------------


def test_criterion_7_cli_determinism(tmp_path):
    flags = ["run", "--replicas", "4", "--keys", "128", "--ops", "1500",
             "--value-size", "16", "--write-ratio", "0.3", "--seed", "23",
             "--net-jitter-ns", "700", "--cache-capacity", "32",
             "--crash", "1@30000"]
    outputs = []
    for tag in ("a", "b"):
        out = tmp_path / f"report-{tag}.json"
        hist = tmp_path / f"history-{tag}.jsonl"
        code = cli_main([*flags, "--out", str(out), "--history-out", str(hist)])
        assert code == 0
        outputs.append((out.read_bytes(), hist.read_bytes()))
    assert outputs[0][0] == outputs[1][0], "reports differ between identical runs"
    assert outputs[0][1] == outputs[1][1], "histories differ between identical runs"
    ok_line(7, "byte-identical report and history across repeated runs")


# -- criterion 8: scale sanity ---------------------------------------------------------------


def test_criterion_8_scale_sanity():
    w = WorkloadConfig()   # 5 replicas, 1M pre-populated 8B/32B pairs, uniform
    c = ClusterConfig()
    start = time.monotonic()
    report, history, _ = run_experiment(w, c)
    elapsed = time.monotonic() - start
    d = report.to_dict()
    assert len(history) == 100_000
    assert all(e.response_ns is not None for e in history)
    assert d["aggregate"]["writes_ok"] > 15_000
    assert elapsed < 300, f"scale run took {elapsed:.0f}s, budget is 5 minutes"
    ok_line(8, f"1M-key / 100k-op profile completed in {elapsed:.0f}s")
