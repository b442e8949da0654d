"""Per-replica consensus unit: leaderless 2-phase invalidation protocol.

Any replica coordinates writes for its clients: phase 1 multicasts the
new value (Inv) and collects acks from every live peer, phase 2
multicasts Commit. Reads are served locally; a key with an uncommitted
staged or pending write blocks its reads until the commit lands.
Handlers mutate replica-owned state (cache, log, tables) directly and
return everything outward-bound as effects.

Concurrency control is per-key timestamp order: (version, origin)
lexicographic, higher wins. A lower-timestamped pending write is
superseded by a higher incoming invalidation; staged entries are only
applied by the commit matching their timestamp. Replay timers make every
staged-but-uncommitted write eventually commit: whoever holds it
re-multicasts the original invalidation as the new coordinator.
"""

from dataclasses import dataclass

from .effects import (
    OK,
    NOT_FOUND,
    REJECTED,
    SUPERSEDED,
    CancelTimer,
    PcieSend,
    Reply,
    Send,
    SetTimer,
)
from .cache import FLUSH_TOKEN
from .messages import (
    Ack,
    BatchRejected,
    Commit,
    DurableAck,
    FetchRequest,
    FetchResponse,
    Inv,
    Timestamp,
    TS_ZERO,
)


class ProtocolBugError(RuntimeError):
    pass


REPLAY = "replay"


@dataclass
class Staged:
    value: str
    ts: Timestamp
    coordinator: int


@dataclass
class PendingWrite:
    key: str
    value: str
    ts: Timestamp
    acks_needed: set
    client: tuple | None  # (session, request_id) or None for replayed writes
    issued_at: int
    log_index: int


@dataclass
class FetchCtx:
    session: int
    request_id: int
    key: str
    fill_ts: Timestamp
    issued_at: int


@dataclass
class Counters:
    reads_fast: int = 0
    reads_slow: int = 0
    reads_blocked: int = 0
    reads_blocked_resolved: int = 0
    writes_ok: int = 0
    writes_superseded: int = 0
    writes_rejected: int = 0
    replays: int = 0
    stale_acks: int = 0
    stale_invs: int = 0
    dup_commits: int = 0
    commits_applied: int = 0

    def to_dict(self):
        return dict(vars(self))


class Replica:
    def __init__(
        self,
        rid,
        targets,
        cache,
        log,
        live_view,
        replay_timeout_ns,
        max_key_bytes=64,
        max_value_bytes=4096,
    ):
        self.rid = rid
        self.targets = list(targets)
        self.cache = cache
        self.log = log
        self.live_view = live_view
        self.replay_timeout_ns = replay_timeout_ns
        self.max_key_bytes = max_key_bytes
        self.max_value_bytes = max_value_bytes

        self.committed_ts = {}
        self.staged = {}
        self.pending = {}
        self.blocked = {}
        self.fetches = {}
        self.suspected = set()
        self.commit_seq = 0
        self._fetch_seq = 0
        self.counters = Counters()
        # Test hook: when set, (now, key, ts) is appended on pending creation.
        self.pending_probe = None

    # -- client operations -----------------------------------------------

    def client_write(self, session, request_id, key, value, now):
        if len(key) > self.max_key_bytes or len(value) > self.max_value_bytes:
            self.counters.writes_rejected += 1
            return [Reply(session, request_id, REJECTED, path="write")]
        ts = Timestamp(self._known_version(key) + 1, self.rid)
        effects = self._displace(key, now)
        log_index = self.log.append(key, value, ts)
        live = [t for t in self.targets if t not in self.suspected]
        pend = PendingWrite(key, value, ts, set(live), (session, request_id), now, log_index)
        self.pending[key] = pend
        if self.pending_probe is not None:
            self.pending_probe.append((now, key, ts))
        effects += [Send(t, Inv(key, value, ts, log_index)) for t in self.targets]
        if pend.acks_needed:
            effects.append(SetTimer((REPLAY, key, ts), self.replay_timeout_ns))
        else:
            effects += self._complete_pending(key, now)
        return effects

    def client_read(self, session, request_id, key, now):
        if key in self.pending or key in self.staged:
            self.blocked.setdefault(key, []).append((session, request_id))
            self.counters.reads_blocked += 1
            return []
        entry = self.cache.lookup(key, now)
        if entry is not None:
            self.counters.reads_fast += 1
            return [Reply(session, request_id, OK, entry.value, path="read_fast")]
        self.counters.reads_slow += 1
        self._fetch_seq += 1
        fid = self._fetch_seq
        self.fetches[fid] = FetchCtx(
            session, request_id, key, self.committed_ts.get(key, TS_ZERO), now
        )
        return [PcieSend(FetchRequest(fid, key))]

    # -- protocol message handlers -----------------------------------------

    def on_message(self, src, msg, now):
        if isinstance(msg, Inv):
            return self.on_inv(src, msg, now)
        if isinstance(msg, Ack):
            return self.on_ack(msg, now)
        if isinstance(msg, Commit):
            return self.on_commit(msg, now)
        if isinstance(msg, FetchResponse):
            return self.on_fetch_response(msg, now)
        if isinstance(msg, DurableAck):
            return self.on_durable_ack(msg, now)
        if isinstance(msg, BatchRejected):
            raise ProtocolBugError(
                f"replica {self.rid}: host rejected a batch ({msg.reason})"
            )
        raise ProtocolBugError(f"replica {self.rid}: unexpected message {msg!r}")

    def on_inv(self, src, msg, now):
        """Stage a newer write and ack; stale or duplicate Invs only re-ack."""
        effects = []
        if msg.ts > self._known_ts(msg.key):
            effects += self._displace(msg.key, now)
            self.staged[msg.key] = Staged(msg.value, msg.ts, msg.ts.origin)
            if self.log.index_of(msg.key, msg.ts) is None:
                self.log.append(msg.key, msg.value, msg.ts)
            effects.append(SetTimer((REPLAY, msg.key, msg.ts), self.replay_timeout_ns))
        else:
            self.counters.stale_invs += 1
        effects.append(Send(src, Ack(msg.key, msg.ts, self.rid)))
        return effects

    def on_ack(self, msg, now):
        pend = self.pending.get(msg.key)
        if pend is None or pend.ts != msg.ts:
            self.counters.stale_acks += 1
            return []
        pend.acks_needed.discard(msg.sender)
        if pend.acks_needed:
            return []
        return self._complete_pending(msg.key, now)

    def on_commit(self, msg, now):
        staged = self.staged.get(msg.key)
        if staged is not None and staged.ts == msg.ts:
            del self.staged[msg.key]
            effects = [CancelTimer((REPLAY, msg.key, msg.ts))]
            effects += self._apply_commit(msg.key, staged.value, msg.ts, now)
            return effects
        pend = self.pending.get(msg.key)
        if pend is not None and pend.ts == msg.ts:
            # Another replica replayed our write to completion.
            return self._complete_pending(msg.key, now, send_commits=False)
        self.counters.dup_commits += 1
        return []

    # -- timers ----------------------------------------------------------

    def on_timer(self, token, now):
        if token == FLUSH_TOKEN:
            return self.cache.on_flush_timer()
        if token[0] == REPLAY:
            return self.on_replay_timeout(token[1], token[2], now)
        raise ProtocolBugError(f"replica {self.rid}: unknown timer token {token!r}")

    def on_replay_timeout(self, key, ts, now):
        """Re-coordinate an uncommitted write with its original timestamp."""
        live = set(self.live_view())
        self.suspected |= set(self.targets) - live
        pend = self.pending.get(key)
        if pend is not None and pend.ts == ts:
            pend.acks_needed = set(t for t in self.targets if t in live)
            self.counters.replays += 1
            if not pend.acks_needed:
                return self._complete_pending(key, now)
            effects = [
                Send(t, Inv(key, pend.value, ts, pend.log_index))
                for t in self.targets
                if t in live
            ]
            effects.append(SetTimer((REPLAY, key, ts), self.replay_timeout_ns))
            return effects
        staged = self.staged.get(key)
        if staged is not None and staged.ts == ts:
            del self.staged[key]
            log_index = self.log.index_of(key, ts)
            pend = PendingWrite(
                key, staged.value, ts,
                set(t for t in self.targets if t in live),
                None, now, log_index,
            )
            self.pending[key] = pend
            self.counters.replays += 1
            if not pend.acks_needed:
                return self._complete_pending(key, now)
            effects = [
                Send(t, Inv(key, staged.value, ts, log_index))
                for t in self.targets
                if t in live
            ]
            effects.append(SetTimer((REPLAY, key, ts), self.replay_timeout_ns))
            return effects
        return []  # committed in the meantime

    # -- PCIe handlers ------------------------------------------------------

    def on_fetch_response(self, msg, now):
        ctx = self.fetches.pop(msg.fetch_id, None)
        if ctx is None:
            raise ProtocolBugError(f"replica {self.rid}: unknown fetch {msg.fetch_id}")
        key = ctx.key
        entry = self.cache.lookup(key, now)
        if entry is not None:
            # A write committed while the fetch was in flight; its value is newer.
            return [Reply(ctx.session, ctx.request_id, OK, entry.value, path="read_slow")]
        if (
            msg.value is not None
            and key not in self.staged
            and key not in self.pending
            and self.committed_ts.get(key, TS_ZERO) == ctx.fill_ts
        ):
            self.cache.fill(key, msg.value, ctx.fill_ts, now)
        if msg.value is None:
            return [Reply(ctx.session, ctx.request_id, NOT_FOUND, None, path="read_slow")]
        return [Reply(ctx.session, ctx.request_id, OK, msg.value, path="read_slow")]

    def on_durable_ack(self, msg, now):
        self.cache.mark_durable(msg.last_applied)
        self.log.note_durable(msg.last_applied)
        prefix = self.log.compactable_prefix()
        if prefix >= self.log.floor:
            self.log.compact(prefix)
        return []

    # -- internals ---------------------------------------------------------

    def _known_ts(self, key):
        ts = self.committed_ts.get(key, TS_ZERO)
        staged = self.staged.get(key)
        if staged is not None and staged.ts > ts:
            ts = staged.ts
        pend = self.pending.get(key)
        if pend is not None and pend.ts > ts:
            ts = pend.ts
        return ts

    def _known_version(self, key):
        return self._known_ts(key).version

    def _displace(self, key, now):
        """Drop any lower-timestamped staged/pending write for the key."""
        effects = []
        pend = self.pending.pop(key, None)
        if pend is not None:
            effects.append(CancelTimer((REPLAY, key, pend.ts)))
            if pend.client is not None:
                self.counters.writes_superseded += 1
                effects.append(Reply(pend.client[0], pend.client[1], SUPERSEDED, path="write"))
        staged = self.staged.pop(key, None)
        if staged is not None:
            effects.append(CancelTimer((REPLAY, key, staged.ts)))
        return effects

    def _complete_pending(self, key, now, send_commits=True):
        pend = self.pending.pop(key)
        effects = [CancelTimer((REPLAY, key, pend.ts))]
        effects += self._apply_commit(key, pend.value, pend.ts, now)
        if send_commits:
            effects += [Send(t, Commit(key, pend.ts)) for t in self.targets]
        if pend.client is not None:
            self.counters.writes_ok += 1
            effects.append(Reply(pend.client[0], pend.client[1], OK, path="write"))
        return effects

    def _apply_commit(self, key, value, ts, now):
        self.committed_ts[key] = ts
        self.commit_seq += 1
        self.log.mark_committed(key, ts, self.commit_seq)
        self.counters.commits_applied += 1
        effects = self.cache.commit(key, value, ts, self.commit_seq, now)
        for session, request_id in self.blocked.pop(key, []):
            self.counters.reads_blocked_resolved += 1
            effects.append(Reply(session, request_id, OK, value, path="read_blocked"))
        return effects

    # -- inspection helpers (tests, convergence checks) ---------------------

    def current_value(self, key, backend):
        entry = self.cache.entries.get(key)
        if entry is not None:
            return entry.value
        return backend.get(key)

    def committed_state(self, backend, keys):
        return {k: (self.current_value(k, backend), self.committed_ts.get(k, TS_ZERO))
                for k in keys}
