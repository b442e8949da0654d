"""SmartNIC-resident software cache with write-back batching.

Committed writes enter the cache pinned (non-durable) and join the write
buffer; the buffer drains over PCIe in batches of ``batch_size`` or when
the flush timer fires. Host acks unpin entries, making them evictable.
Eviction is LRU over unpinned entries only, which is what keeps the
slow path safe: any key whose latest write the host has not applied yet
is guaranteed to still be in the cache.
"""

from collections import OrderedDict
from dataclasses import dataclass

from .effects import CancelTimer, PcieSend, SetTimer
from .messages import BufferedWrite, FlushBatch, TS_ZERO

FLUSH_TOKEN = ("flush",)


class CacheConfigError(ValueError):
    pass


class DurableMarkError(RuntimeError):
    """A durable ack regressed below the high-water mark."""


@dataclass
class CacheEntry:
    value: str
    ts: tuple
    durable: bool
    last_touch: int
    commit_index: int  # commit index of the latest write, 0 for fills


class NicCache:
    def __init__(self, capacity, batch_size, flush_timer_ns):
        if capacity < 1:
            raise CacheConfigError("cache capacity must be >= 1")
        if batch_size < 1:
            raise CacheConfigError("batch size must be >= 1")
        if flush_timer_ns < 0:
            raise CacheConfigError("flush timer must be >= 0 (0 disables it)")
        self.capacity = capacity
        self.batch_size = batch_size
        self.flush_timer_ns = flush_timer_ns
        self.entries = OrderedDict()
        self.buffer = []
        self.timer_armed = False
        self.durable_mark = 0
        self.overflow_count = 0
        self.evicted_count = 0
        self.flush_batches = 0
        # pinned keys in commit order; the front always holds the lowest
        # outstanding commit index, so acks unpin in O(acked) time
        self._pinned = {}

    def __len__(self):
        return len(self.entries)

    # -- commit path ---------------------------------------------------------

    def commit(self, key, value, ts, commit_index, now):
        """Install a committed write (pinned) and buffer it for write-back."""
        entry = self.entries.get(key)
        if entry is None:
            self.entries[key] = CacheEntry(value, ts, False, now, commit_index)
        else:
            entry.value = value
            entry.ts = ts
            entry.durable = False
            entry.last_touch = now
            entry.commit_index = commit_index
            self.entries.move_to_end(key)
        self._pinned.pop(key, None)
        self._pinned[key] = commit_index
        effects = []
        self._evict_if_needed()
        self.buffer.append(BufferedWrite(commit_index, key, value, ts))
        if len(self.buffer) >= self.batch_size:
            effects += self._flush()
        elif not self.timer_armed and self.flush_timer_ns > 0:
            self.timer_armed = True
            effects.append(SetTimer(FLUSH_TOKEN, self.flush_timer_ns))
        return effects

    def _flush(self):
        batch = FlushBatch(tuple(self.buffer))
        self.buffer = []
        self.flush_batches += 1
        effects = [PcieSend(batch)]
        if self.timer_armed:
            self.timer_armed = False
            effects.append(CancelTimer(FLUSH_TOKEN))
        return effects

    def on_flush_timer(self):
        self.timer_armed = False
        if not self.buffer:
            return []
        batch = FlushBatch(tuple(self.buffer))
        self.buffer = []
        self.flush_batches += 1
        return [PcieSend(batch)]

    # -- read path ------------------------------------------------------------

    def lookup(self, key, now):
        entry = self.entries.get(key)
        if entry is None:
            return None
        entry.last_touch = now
        self.entries.move_to_end(key)
        return entry

    def fill(self, key, value, ts, now):
        """Slow-path fill: durable insert, discarded if a newer commit raced it."""
        entry = self.entries.get(key)
        if entry is not None:
            if entry.ts >= ts:
                return False
            # Cannot happen through the replica (its commits lead the host),
            # but keep the cache safe standalone.
            entry.value = value
            entry.ts = ts
            entry.last_touch = now
            self.entries.move_to_end(key)
            return True
        self.entries[key] = CacheEntry(value, ts, True, now, 0)
        self.entries.move_to_end(key)
        self._evict_if_needed()
        return True

    def preload(self, pairs, now=0):
        """Warm start: install durable entries, oldest-touched first."""
        for key, value in pairs:
            if len(self.entries) >= self.capacity:
                break
            self.entries[key] = CacheEntry(value, TS_ZERO, True, now, 0)

    # -- durability and eviction ----------------------------------------------

    def mark_durable(self, up_to_commit_index):
        if up_to_commit_index < self.durable_mark:
            raise DurableMarkError(
                f"durable ack regressed: {up_to_commit_index} < {self.durable_mark}"
            )
        if up_to_commit_index == self.durable_mark:
            return
        self.durable_mark = up_to_commit_index
        while self._pinned:
            key = next(iter(self._pinned))
            if self._pinned[key] > up_to_commit_index:
                break
            del self._pinned[key]
            entry = self.entries.get(key)
            if entry is not None:
                entry.durable = True

    def _evict_if_needed(self):
        evicted = []
        while len(self.entries) > self.capacity:
            victim = None
            for key, entry in self.entries.items():  # iteration order == LRU order
                if entry.durable:
                    victim = key
                    break
            if victim is None:
                self.overflow_count += 1
                break
            del self.entries[victim]
            evicted.append(victim)
            self.evicted_count += 1
        return evicted

    def pinned_keys(self):
        return [k for k, e in self.entries.items() if not e.durable]

    def pinned_count(self):
        return len(self._pinned)
