"""Wire-level message types shared by the replica protocol and the PCIe path.

Every message knows its own payload size so the link layer can do byte
accounting without understanding message semantics.
"""

from dataclasses import dataclass
from typing import NamedTuple


class Timestamp(NamedTuple):
    """Per-key write version: (logical version, origin replica id).

    Tuple comparison gives the lexicographic total order the protocol
    relies on for supersession and idempotent re-delivery.
    """

    version: int
    origin: int


# Version tag for never-written (pre-populated) keys.
TS_ZERO = Timestamp(0, -1)

# Field size constants used for payload accounting (bytes).
TS_BYTES = 12        # 8-byte version + 4-byte origin
SEQ_BYTES = 8        # log/commit indices, fetch ids
SENDER_BYTES = 4
TAG_BYTES = 1        # message discriminator

PCIE_HEADER_BYTES = 32


@dataclass(frozen=True)
class Inv:
    """Phase-1 invalidation carrying the new value."""

    key: str
    value: str
    ts: Timestamp
    log_index: int

    def payload_bytes(self):
        return TAG_BYTES + len(self.key) + len(self.value) + TS_BYTES + SEQ_BYTES


@dataclass(frozen=True)
class Ack:
    key: str
    ts: Timestamp
    sender: int

    def payload_bytes(self):
        return TAG_BYTES + len(self.key) + TS_BYTES + SENDER_BYTES


@dataclass(frozen=True)
class Commit:
    """Phase-2 commit; carries no value (phase 1 already shipped it)."""

    key: str
    ts: Timestamp

    def payload_bytes(self):
        return TAG_BYTES + len(self.key) + TS_BYTES


class BufferedWrite(NamedTuple):
    """One write-buffer slot: commit_index orders host application."""

    commit_index: int
    key: str
    value: str
    ts: Timestamp


@dataclass(frozen=True)
class FlushBatch:
    """NIC -> host: batched write-back of committed entries."""

    entries: tuple

    def payload_bytes(self):
        per_entry = sum(
            SEQ_BYTES + len(e.key) + len(e.value) + TS_BYTES for e in self.entries
        )
        return TAG_BYTES + per_entry


@dataclass(frozen=True)
class DurableAck:
    """Host -> NIC: everything up to commit_index is durably applied."""

    last_applied: int

    def payload_bytes(self):
        return TAG_BYTES + SEQ_BYTES


@dataclass(frozen=True)
class BatchRejected:
    """Host -> NIC: out-of-order batch. Only reachable through a link bug."""

    last_applied: int
    reason: str

    def payload_bytes(self):
        return TAG_BYTES + SEQ_BYTES + len(self.reason)


@dataclass(frozen=True)
class FetchRequest:
    """NIC -> host: slow-path read for a key missing from the cache."""

    fetch_id: int
    key: str

    def payload_bytes(self):
        return TAG_BYTES + SEQ_BYTES + len(self.key)


@dataclass(frozen=True)
class FetchResponse:
    fetch_id: int
    key: str
    value: str | None

    def payload_bytes(self):
        return TAG_BYTES + SEQ_BYTES + TAG_BYTES + (len(self.value) if self.value else 0)


PROTOCOL_MESSAGES = (Inv, Ack, Commit)
PCIE_MESSAGES = (FlushBatch, DurableAck, BatchRejected, FetchRequest, FetchResponse)
