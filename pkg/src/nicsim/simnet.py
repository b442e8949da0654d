"""Deterministic discrete-event core: virtual clock, links, timers, crashes.

All time is integer nanoseconds. Events are dispatched in strict
(fire_time, seq) order where seq is a global scheduling counter, so a
(seed, config) pair fully determines the run.
"""

import heapq
import random
from dataclasses import dataclass, field
from enum import Enum

from .messages import PCIE_HEADER_BYTES


class SimError(RuntimeError):
    pass


class EventLimitError(SimError):
    """Livelock guard tripped: the event budget was exhausted."""


class Category(str, Enum):
    PROTOCOL = "protocol"
    NETWORK = "network"
    REST = "rest"


NIC = "nic"
HOST = "host"


@dataclass(frozen=True)
class Delivery:
    src: object
    msg: object


@dataclass(frozen=True)
class TimerFire:
    timer_id: int
    token: object


@dataclass
class LinkStats:
    sent: int = 0
    delivered: int = 0
    dropped: int = 0
    payload_bytes: int = 0
    header_bytes: int = 0
    by_type: dict = field(default_factory=dict)

    def count(self, msg, header_bytes):
        self.sent += 1
        self.payload_bytes += msg.payload_bytes()
        self.header_bytes += header_bytes
        name = type(msg).__name__
        self.by_type[name] = self.by_type.get(name, 0) + 1

    @property
    def bytes(self):
        return self.payload_bytes + self.header_bytes

    def to_dict(self):
        return {
            "sent": self.sent,
            "delivered": self.delivered,
            "dropped": self.dropped,
            "payload_bytes": self.payload_bytes,
            "header_bytes": self.header_bytes,
            "bytes": self.bytes,
            "by_type": {k: self.by_type[k] for k in sorted(self.by_type)},
        }


@dataclass
class RunReport:
    final_time_ns: int = 0
    dispatched: int = 0
    cancelled_timers: int = 0
    categories: dict = field(default_factory=dict)
    net: LinkStats = field(default_factory=LinkStats)
    pcie: LinkStats = field(default_factory=LinkStats)

    def to_dict(self):
        return {
            "final_time_ns": self.final_time_ns,
            "dispatched": self.dispatched,
            "cancelled_timers": self.cancelled_timers,
            "categories": {c.value: self.categories.get(c, 0) for c in Category},
            "net": self.net.to_dict(),
            "pcie": self.pcie.to_dict(),
        }


class Network:
    """Event queue plus the network and PCIe link models for one cluster.

    The network link applies a constant one-way latency plus optional
    seeded uniform jitter. The PCIe link is FIFO with a configured
    round-trip latency split across the two directions.
    """

    def __init__(
        self,
        n_replicas,
        net_latency_ns=2_000,
        net_jitter_ns=0,
        pcie_rtt_ns=500,
        net_header_bytes=0,
        proc_delay_ns=0,
        seed=0,
    ):
        if pcie_rtt_ns < 1:
            raise SimError("pcie_rtt_ns must be >= 1")
        if net_latency_ns < 1:
            raise SimError("net_latency_ns must be >= 1")
        self.n = n_replicas
        self.net_latency_ns = net_latency_ns
        self.net_jitter_ns = net_jitter_ns
        self.pcie_to_host_ns = pcie_rtt_ns // 2
        self.pcie_to_nic_ns = pcie_rtt_ns - pcie_rtt_ns // 2
        self.net_header_bytes = net_header_bytes
        self.proc_delay_ns = proc_delay_ns
        self.rng = random.Random(seed ^ 0x5EED_11AB)

        self.now = 0
        self._seq = 0
        self._heap = []
        self._crashed = set()
        self._timer_seq = 0
        self._cancelled = set()
        self._fired = set()
        # Per-direction FIFO floor for the PCIe link of each replica.
        self._pcie_floor = {}

        self.report = RunReport()
        # Per-replica message attribution, filled in by send/deliver paths.
        self.replica_net_sent = [0] * n_replicas
        self.replica_net_recv = [0] * n_replicas
        self.replica_pcie_msgs = [0] * n_replicas
        self.replica_pcie_payload = [0] * n_replicas

    # -- scheduling ---------------------------------------------------------

    def schedule(self, at, target, payload, category):
        if at < self.now:
            raise SimError(f"cannot schedule into the past ({at} < {self.now})")
        self._seq += 1
        heapq.heappush(self._heap, (at, self._seq, target, payload, category))

    def network_delay(self):
        d = self.net_latency_ns
        if self.net_jitter_ns:
            d += self.rng.randrange(self.net_jitter_ns + 1)
        return d

    def send_net(self, src, dst, msg):
        if not (0 <= src < self.n and 0 <= dst < self.n):
            raise SimError(f"unknown network endpoint {src}->{dst}")
        self.report.net.count(msg, self.net_header_bytes)
        self.replica_net_sent[src] += 1
        at = self.now + self.proc_delay_ns + self.network_delay()
        self.schedule(at, (NIC, dst), Delivery(src, msg), Category.PROTOCOL)

    def send_pcie(self, rid, to_host, msg):
        """One hop on the replica's PCIe link; FIFO per direction."""
        if not 0 <= rid < self.n:
            raise SimError(f"unknown pcie endpoint {rid}")
        self.report.pcie.count(msg, PCIE_HEADER_BYTES)
        self.replica_pcie_msgs[rid] += 1
        self.replica_pcie_payload[rid] += msg.payload_bytes()
        lat = self.pcie_to_host_ns if to_host else self.pcie_to_nic_ns
        at = self.now + self.proc_delay_ns + lat
        floor_key = (rid, to_host)
        at = max(at, self._pcie_floor.get(floor_key, 0))
        self._pcie_floor[floor_key] = at
        target = (HOST, rid) if to_host else (NIC, rid)
        self.schedule(at, target, Delivery((NIC if to_host else HOST, rid), msg),
                      Category.NETWORK)

    # -- timers -------------------------------------------------------------

    def set_timer(self, rid, delay, token, category=Category.PROTOCOL):
        if delay <= 0:
            raise SimError("timer delay must be > 0")
        self._timer_seq += 1
        tid = self._timer_seq
        self.schedule(self.now + delay, (NIC, rid), TimerFire(tid, token), category)
        return tid

    def cancel_timer(self, tid):
        if tid in self._fired:
            return
        self._cancelled.add(tid)

    # -- crashes ------------------------------------------------------------

    def crash(self, rid, at_time):
        """Schedule a crash-stop: the replica processes nothing from at_time on."""
        if at_time < self.now:
            raise SimError("crash time is in the past")
        self.schedule(at_time, ("crash", rid), None, Category.REST)

    def live(self):
        return [r for r in range(self.n) if r not in self._crashed]

    def is_crashed(self, rid):
        return rid in self._crashed

    # -- main loop ----------------------------------------------------------

    def run(self, dispatch, until=None, max_events=10_000_000):
        """Dispatch events in order until quiescence or the time bound.

        dispatch(target, payload, now) is invoked for every live event.
        """
        while self._heap:
            at, _seq, target, payload, category = self._heap[0]
            if until is not None and at > until:
                break
            heapq.heappop(self._heap)
            if isinstance(payload, TimerFire):
                if payload.timer_id in self._cancelled:
                    # lazy deletion: drop without advancing the clock
                    self._cancelled.discard(payload.timer_id)
                    self.report.cancelled_timers += 1
                    continue
                self._fired.add(payload.timer_id)
            self.now = at
            kind = target[0]
            if kind == "crash":
                self._crashed.add(target[1])
                self.report.dispatched += 1
                self.report.categories[category] = self.report.categories.get(category, 0) + 1
                continue
            rid = target[1]
            # NIC deliveries with a bare replica-id source came over the
            # network; everything else rode the PCIe link.
            is_net = kind == NIC and isinstance(payload, Delivery) and isinstance(payload.src, int)
            if rid in self._crashed:
                if isinstance(payload, Delivery):
                    stats = self.report.net if is_net else self.report.pcie
                    stats.dropped += 1
                continue
            if isinstance(payload, Delivery):
                if is_net:
                    self.report.net.delivered += 1
                    self.replica_net_recv[rid] += 1
                else:
                    self.report.pcie.delivered += 1
            self.report.dispatched += 1
            self.report.categories[category] = self.report.categories.get(category, 0) + 1
            if self.report.dispatched > max_events:
                raise EventLimitError(f"exceeded event budget of {max_events}")
            dispatch(target, payload, self.now)
        self.report.final_time_ns = self.now
        return self.report
