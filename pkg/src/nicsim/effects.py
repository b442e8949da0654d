"""Effect commands returned by replica/cache/host handlers.

Handlers are synchronous state transformations; anything that must leave
the node (messages, timers, client replies) is returned as an effect and
applied by the experiment driver. This keeps the protocol core directly
testable without a network.
"""

from dataclasses import dataclass


@dataclass(frozen=True)
class Send:
    """Inter-replica protocol message."""

    dst: int
    msg: object


@dataclass(frozen=True)
class PcieSend:
    """Message for the other end of this replica's PCIe link."""

    msg: object


@dataclass(frozen=True)
class Reply:
    """Client reply; path tags the latency histogram bucket."""

    session: int
    request_id: int
    outcome: str
    value: str | None = None
    path: str = "write"


@dataclass(frozen=True)
class SetTimer:
    token: tuple
    delay_ns: int


@dataclass(frozen=True)
class CancelTimer:
    token: tuple


OK = "ok"
NOT_FOUND = "not_found"
SUPERSEDED = "superseded"
REJECTED = "rejected"
