"""Per-replica append-only update log with compaction.

Entries are appended as Proposed when a write is first seen and flipped
to Committed when it commits; the flip also records the replica-local
commit index so compaction can follow the host's durable ack watermark
even when commits complete out of proposal order.

Storage is a dict keyed by index so compaction frees entries in O(freed)
and the compactable-prefix scan can resume where it last stopped (an
entry that qualifies once stays qualified: status and the durable mark
only move forward).
"""

from dataclasses import dataclass


class LogError(RuntimeError):
    pass


class CompactionError(LogError):
    """Compaction tried to cross a Proposed entry or the durable mark."""


PROPOSED = "proposed"
COMMITTED = "committed"


@dataclass
class LogEntry:
    index: int
    key: str
    value: str
    ts: tuple
    status: str = PROPOSED
    commit_index: int | None = None

    def to_dict(self):
        return {
            "index": self.index,
            "key": self.key,
            "value": self.value,
            "ts": list(self.ts),
            "status": self.status,
            "commit_index": self.commit_index,
        }


class UpdateLog:
    def __init__(self):
        self.floor = 0            # first retained index
        self.next_index = 0
        self._entries = {}        # index -> LogEntry
        self._by_write = {}       # (key, ts) -> index
        self.durable_commit_index = 0
        self._scan = 0            # first index not yet known compactable
        self.compactions = 0
        self.freed_total = 0

    def __len__(self):
        return self.next_index - self.floor

    def append(self, key, value, ts):
        index = self.next_index
        self.next_index += 1
        self._entries[index] = LogEntry(index, key, value, ts)
        self._by_write[(key, ts)] = index
        return index

    def entry(self, index):
        entry = self._entries.get(index)
        if entry is None:
            raise LogError(f"index {index} outside retained range")
        return entry

    def index_of(self, key, ts):
        return self._by_write.get((key, ts))

    def mark_committed(self, key, ts, commit_index):
        index = self._by_write.get((key, ts))
        if index is None:
            raise LogError(f"commit for unknown write ({key!r}, {ts})")
        entry = self._entries[index]
        if entry.status == COMMITTED:
            return
        entry.status = COMMITTED
        entry.commit_index = commit_index

    def note_durable(self, commit_index):
        if commit_index < self.durable_commit_index:
            raise LogError(
                f"durable mark regressed: {commit_index} < {self.durable_commit_index}"
            )
        self.durable_commit_index = commit_index

    def compactable_prefix(self):
        """Largest index whose whole prefix is committed and durably applied."""
        i = max(self._scan, self.floor)
        while i < self.next_index:
            e = self._entries[i]
            if e.status != COMMITTED or e.commit_index > self.durable_commit_index:
                break
            i += 1
        self._scan = i
        return i - 1

    def compact(self, up_to_index):
        if up_to_index < self.floor:
            return 0
        limit = self.compactable_prefix()
        if up_to_index > limit:
            raise CompactionError(
                f"cannot compact to {up_to_index}: prefix only safe to {limit} "
                f"(durable mark {self.durable_commit_index})"
            )
        freed = up_to_index - self.floor + 1
        for i in range(self.floor, up_to_index + 1):
            entry = self._entries.pop(i)
            del self._by_write[(entry.key, entry.ts)]
        self.floor = up_to_index + 1
        self.compactions += 1
        self.freed_total += freed
        return freed

    def uncommitted_entries(self):
        return [self._entries[i] for i in range(self.floor, self.next_index)
                if self._entries[i].status == PROPOSED]

    def entries_in_order(self):
        return [self._entries[i] for i in range(self.floor, self.next_index)]

    def dump(self):
        return {
            "floor": self.floor,
            "durable_commit_index": self.durable_commit_index,
            "entries": [e.to_dict() for e in self.entries_in_order()],
        }
