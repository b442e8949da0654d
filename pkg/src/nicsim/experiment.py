"""Experiment driver: builds a cluster, runs the trace, collects results.

One Cluster instance owns one simulation: the overlay, the event core,
one replica (consensus unit + cache + log) and one host interface per
node, and the closed-loop client sessions pinned to their home replicas.
"""

from dataclasses import dataclass, field, asdict

from . import workload as wl
from .cache import NicCache
from .checker import HistoryEvent
from .datastore import HostInterface, make_in_memory_backend
from .effects import CancelTimer, PcieSend, Reply, Send, SetTimer
from .metrics import HIST_PATHS, LatencyHist, MetricsReport, ReplicaReport
from .oplog import UpdateLog
from .overlay import build as build_overlay
from .replica import Replica
from .simnet import Category, Delivery, HOST, NIC, Network, TimerFire
from .workload import ConfigError, WorkloadConfig


@dataclass
class ClusterConfig:
    overlay: str = "mesh"
    backend: str = "memory"      # host datastore kind; the adapter seam
    cache_capacity: int = 65536
    batch_size: int = 16
    flush_timer_ns: int = 2_000
    net_latency_ns: int = 2_000
    net_jitter_ns: int = 0
    pcie_rtt_ns: int = 500
    net_header_bytes: int = 0
    proc_delay_ns: int = 0
    replay_timeout_ns: int = 0   # 0 = default of 4x network round trips
    preload_cache: bool = True
    max_events: int = 50_000_000
    max_key_bytes: int = 64
    max_value_bytes: int = 4096

    def resolved_replay_timeout(self):
        if self.replay_timeout_ns > 0:
            return self.replay_timeout_ns
        return 4 * 2 * (self.net_latency_ns + self.net_jitter_ns)

    def validate(self):
        if self.cache_capacity < 1:
            raise ConfigError("cache_capacity must be >= 1")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if self.flush_timer_ns < 0:
            raise ConfigError("flush_timer_ns must be >= 0 (0 disables)")
        if self.net_latency_ns < 1:
            raise ConfigError("net_latency_ns must be >= 1")
        if self.net_jitter_ns < 0:
            raise ConfigError("net_jitter_ns must be >= 0")
        if self.pcie_rtt_ns < 1:
            raise ConfigError("pcie_rtt_ns must be >= 1")
        if self.overlay not in ("mesh", "chain", "star"):
            raise ConfigError(f"unknown overlay {self.overlay!r}")
        if self.backend != "memory":
            raise ConfigError(f"unknown datastore backend {self.backend!r}")
        return self


SESSION_OP = "session_op"


@dataclass
class _SessionRun:
    sid: int
    home: int
    ops: list
    next_idx: int = 0
    outstanding: dict = field(default_factory=dict)  # request_id -> history index


class Cluster:
    def __init__(self, workload_cfg: WorkloadConfig, cluster_cfg: ClusterConfig,
                 crashes=(), trace=None):
        workload_cfg.validate()
        cluster_cfg.validate()
        self.wcfg = workload_cfg
        self.ccfg = cluster_cfg

        n = workload_cfg.replicas
        self.overlay = build_overlay(cluster_cfg.overlay, n)
        if not self.overlay.is_full_mesh():
            raise ConfigError(
                "the leaderless engine requires the full-mesh overlay; "
                f"{cluster_cfg.overlay!r} is provided as a preset only"
            )
        self.overlay.validate()

        self.net = Network(
            n,
            net_latency_ns=cluster_cfg.net_latency_ns,
            net_jitter_ns=cluster_cfg.net_jitter_ns,
            pcie_rtt_ns=cluster_cfg.pcie_rtt_ns,
            net_header_bytes=cluster_cfg.net_header_bytes,
            proc_delay_ns=cluster_cfg.proc_delay_ns,
            seed=workload_cfg.seed,
        )

        self.backends = []
        self.hosts = []
        self.replicas = []
        timeout = cluster_cfg.resolved_replay_timeout()
        for rid in range(n):
            backend = make_in_memory_backend(
                workload_cfg.key_count, workload_cfg.key_size,
                workload_cfg.value_size, workload_cfg.seed,
            )
            cache = NicCache(cluster_cfg.cache_capacity, cluster_cfg.batch_size,
                             cluster_cfg.flush_timer_ns)
            if cluster_cfg.preload_cache:
                n_pre = min(cluster_cfg.cache_capacity, workload_cfg.key_count)
                cache.preload(
                    (wl.format_key(i, workload_cfg.key_size),
                     wl.initial_value(i, workload_cfg.value_size, workload_cfg.seed))
                    for i in range(n_pre)
                )
            replica = Replica(
                rid,
                self.overlay.multicast_targets(rid),
                cache,
                UpdateLog(),
                self.net.live,
                timeout,
                max_key_bytes=cluster_cfg.max_key_bytes,
                max_value_bytes=cluster_cfg.max_value_bytes,
            )
            self.backends.append(backend)
            self.hosts.append(HostInterface(rid, backend))
            self.replicas.append(replica)

        self.sessions = {}
        trace = trace if trace is not None else wl.generate_trace(workload_cfg)
        for st in trace:
            self.sessions[st.session_id] = _SessionRun(st.session_id, st.home_replica,
                                                       st.ops)
        self.history = []
        self.hists = [
            {p: LatencyHist() for p in HIST_PATHS} for _ in range(n)
        ]
        self._timers = [dict() for _ in range(n)]  # token -> timer id

        for sess in self.sessions.values():
            if sess.ops:
                self.net.schedule(sess.ops[0].gap_ns, (NIC, sess.home),
                                  (SESSION_OP, sess.sid), Category.REST)
        for rid, at in crashes:
            if not 0 <= rid < n:
                raise ConfigError(f"crash target {rid} out of range")
            self.net.crash(rid, at)

    # -- dispatch -------------------------------------------------------------

    def dispatch(self, target, payload, now):
        kind, rid = target
        if isinstance(payload, tuple) and payload and payload[0] == SESSION_OP:
            self._issue_next(self.sessions[payload[1]], now)
            return
        if isinstance(payload, TimerFire):
            replica = self.replicas[rid]
            self._timers[rid].pop(payload.token, None)
            self._apply(rid, replica.on_timer(payload.token, now), now)
            return
        if isinstance(payload, Delivery):
            if kind == HOST:
                effects = self.hosts[rid].on_message(payload.msg, now)
                self._apply_host(rid, effects, now)
            else:
                effects = self.replicas[rid].on_message(payload.src, payload.msg, now)
                self._apply(rid, effects, now)
            return
        raise RuntimeError(f"unroutable event {target} {payload!r}")

    def _issue_next(self, sess, now):
        op = sess.ops[sess.next_idx]
        sess.next_idx += 1
        request_id = sess.next_idx
        event = HistoryEvent(
            session=sess.sid, request_id=request_id, op=op.kind, key=op.key,
            value=op.value, invoke_ns=now, response_ns=None, outcome=None,
        )
        self.history.append(event)
        sess.outstanding[request_id] = len(self.history) - 1
        replica = self.replicas[sess.home]
        if op.kind == wl.WRITE:
            effects = replica.client_write(sess.sid, request_id, op.key, op.value, now)
        else:
            effects = replica.client_read(sess.sid, request_id, op.key, now)
        self._apply(sess.home, effects, now)

    # -- effect application -----------------------------------------------------

    def _apply(self, rid, effects, now):
        for eff in effects:
            if isinstance(eff, Send):
                self.net.send_net(rid, eff.dst, eff.msg)
            elif isinstance(eff, PcieSend):
                self.net.send_pcie(rid, True, eff.msg)
            elif isinstance(eff, Reply):
                self._deliver_reply(rid, eff, now)
            elif isinstance(eff, SetTimer):
                category = Category.NETWORK if eff.token[0] == "flush" else Category.PROTOCOL
                tid = self.net.set_timer(rid, eff.delay_ns, eff.token, category)
                self._timers[rid][eff.token] = tid
            elif isinstance(eff, CancelTimer):
                tid = self._timers[rid].pop(eff.token, None)
                if tid is not None:
                    self.net.cancel_timer(tid)
            else:
                raise RuntimeError(f"unknown effect {eff!r}")

    def _apply_host(self, rid, effects, now):
        for eff in effects:
            if isinstance(eff, PcieSend):
                self.net.send_pcie(rid, False, eff.msg)
            else:
                raise RuntimeError(f"unknown host effect {eff!r}")

    def _deliver_reply(self, rid, eff, now):
        sess = self.sessions[eff.session]
        idx = sess.outstanding.pop(eff.request_id, None)
        if idx is None:
            raise RuntimeError(
                f"duplicate reply for session {eff.session} request {eff.request_id}"
            )
        event = self.history[idx]
        event.response_ns = now
        event.outcome = eff.outcome
        if event.op == wl.READ:
            event.result_value = eff.value
        self.hists[rid][eff.path].record(now - event.invoke_ns)
        if sess.next_idx < len(sess.ops):
            # a client cannot issue at the very instant it saw the response;
            # the 1ns floor keeps per-instant concurrency bounded by sessions
            gap = max(sess.ops[sess.next_idx].gap_ns, 1)
            self.net.schedule(now + gap, (NIC, sess.home),
                              (SESSION_OP, sess.sid), Category.REST)

    # -- running ---------------------------------------------------------------

    def run(self, until=None):
        run_report = self.net.run(self.dispatch, until=until,
                                  max_events=self.ccfg.max_events)
        return self.build_report(run_report), self.history

    def build_report(self, run_report):
        replicas = []
        for rid, rep in enumerate(self.replicas):
            replicas.append(ReplicaReport(
                rid=rid,
                counters=rep.counters.to_dict(),
                net_sent=self.net.replica_net_sent[rid],
                net_recv=self.net.replica_net_recv[rid],
                pcie_msgs=self.net.replica_pcie_msgs[rid],
                pcie_payload_bytes=self.net.replica_pcie_payload[rid],
                cache_size=len(rep.cache),
                cache_evictions=rep.cache.evicted_count,
                cache_overflow=rep.cache.overflow_count,
                flush_batches=rep.cache.flush_batches,
                log_floor=rep.log.floor,
                log_len=len(rep.log),
                crashed=self.net.is_crashed(rid),
                hists=self.hists[rid],
            ))
        return MetricsReport(seed=self.wcfg.seed, replicas=replicas,
                             run=run_report.to_dict())

    # -- inspection --------------------------------------------------------------

    def touched_keys(self):
        keys = set()
        for rep in self.replicas:
            keys.update(rep.committed_ts)
        return sorted(keys)

    def survivor_states(self):
        """Per-survivor {key: (value, ts)} over every key any survivor committed."""
        keys = self.touched_keys()
        out = {}
        for rid, rep in enumerate(self.replicas):
            if self.net.is_crashed(rid):
                continue
            out[rid] = rep.committed_state(self.backends[rid], keys)
        return out

    def initial_value_fn(self):
        return wl.initial_fn(self.wcfg.key_count, self.wcfg.key_size,
                             self.wcfg.value_size, self.wcfg.seed)

    def dump_logs(self):
        """Debugging view of every replica's update log."""
        return {rid: rep.log.dump() for rid, rep in enumerate(self.replicas)}


def parse_crashes(specs):
    """Parse repeatable "replica@time_ns" crash flags."""
    crashes = []
    for spec in specs:
        try:
            rid_s, at_s = spec.split("@", 1)
            crashes.append((int(rid_s), int(at_s)))
        except ValueError as e:
            raise ConfigError(f"bad crash spec {spec!r} (want replica@time_ns)") from e
    return crashes


def run_experiment(workload_cfg: WorkloadConfig, cluster_cfg: ClusterConfig,
                   crashes=(), trace=None):
    """Build, run to quiescence, and report one experiment."""
    cluster = Cluster(workload_cfg, cluster_cfg, crashes=crashes, trace=trace)
    report, history = cluster.run()
    meta = history_meta(workload_cfg, cluster_cfg, crashes)
    return report, history, meta


def history_meta(workload_cfg, cluster_cfg, crashes):
    return {
        "workload": asdict(workload_cfg),
        "cluster": asdict(cluster_cfg),
        "crashes": [list(c) for c in crashes],
    }
