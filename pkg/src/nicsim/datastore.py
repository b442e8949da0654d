"""Host-side datastore: pluggable backend plus the PCIe-facing interface.

The in-memory backend derives initial values on demand from the seed, so
pre-populating a million-key store costs nothing until keys are written.
"""

from .effects import PcieSend
from .messages import BatchRejected, DurableAck, FetchRequest, FetchResponse, FlushBatch
from .workload import initial_fn


class DatastoreError(RuntimeError):
    pass


class InMemoryBackend:
    """Map-backed store; unwritten keys fall back to the seeded initializer."""

    def __init__(self, initial_fn=None, initial_count=0):
        self._initial_fn = initial_fn or (lambda key: None)
        self._initial_count = initial_count
        self._writes = {}
        self._new_keys = 0

    def get(self, key):
        if key in self._writes:
            return self._writes[key]
        return self._initial_fn(key)

    def apply_batch(self, writes):
        for _, key, value, _ in writes:
            if key not in self._writes and self._initial_fn(key) is None:
                self._new_keys += 1
            self._writes[key] = value

    def __len__(self):
        return self._initial_count + self._new_keys


def make_in_memory_backend(key_count, key_size, value_size, seed):
    if key_count == 0:
        return InMemoryBackend()
    return InMemoryBackend(initial_fn(key_count, key_size, value_size, seed), key_count)


class HostInterface:
    """Applies flush batches in order and serves slow-path fetches."""

    def __init__(self, rid, backend):
        self.rid = rid
        self.backend = backend
        self.last_applied = 0
        self.batches_applied = 0
        self.fetches_served = 0

    def on_message(self, msg, now):
        if isinstance(msg, FlushBatch):
            return self._apply(msg)
        if isinstance(msg, FetchRequest):
            self.fetches_served += 1
            value = self.backend.get(msg.key)
            return [PcieSend(FetchResponse(msg.fetch_id, msg.key, value))]
        raise DatastoreError(f"unexpected message at host {self.rid}: {msg!r}")

    def _apply(self, batch):
        prev = self.last_applied
        for entry in batch.entries:
            if entry.commit_index <= prev:
                return [PcieSend(BatchRejected(self.last_applied, "out-of-order batch"))]
            prev = entry.commit_index
        self.backend.apply_batch(batch.entries)
        self.last_applied = prev
        self.batches_applied += 1
        return [PcieSend(DurableAck(self.last_applied))]
