"""History recording and per-key linearizability checking.

The per-key check is a bounded Wing&Gong-style search: try every total
order consistent with real-time precedence, requiring each read to
return the latest preceding write (or the initial value). Failed writes
(superseded / unresolved) are "maybe" operations: the search may place
them anywhere after their invocation or drop them entirely.
"""

import json
from dataclasses import dataclass, field

from .effects import NOT_FOUND, OK, SUPERSEDED

UNRESOLVED = "unresolved"

OK_STATUS = "ok"
VIOLATION = "violation"
UNCHECKED = "unchecked"

DEFAULT_OP_CAP = 200
NODE_BUDGET = 500_000


@dataclass
class HistoryEvent:
    session: int
    request_id: int
    op: str                      # "read" | "write"
    key: str
    value: str | None            # written value (writes only)
    invoke_ns: int
    response_ns: int | None
    outcome: str | None          # ok | not_found | superseded | rejected | None
    result_value: str | None = None  # value a read returned

    def to_dict(self):
        return {
            "session": self.session,
            "request_id": self.request_id,
            "op": self.op,
            "key": self.key,
            "value": self.value,
            "invoke_ns": self.invoke_ns,
            "response_ns": self.response_ns,
            "outcome": self.outcome,
            "result_value": self.result_value,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            session=d["session"],
            request_id=d["request_id"],
            op=d["op"],
            key=d["key"],
            value=d.get("value"),
            invoke_ns=d["invoke_ns"],
            response_ns=d.get("response_ns"),
            outcome=d.get("outcome"),
            result_value=d.get("result_value"),
        )


@dataclass
class Verdict:
    status: str
    witness: dict | None = None
    order: list | None = None

    @property
    def ok(self):
        return self.status == OK_STATUS


@dataclass
class HistoryCheck:
    per_key: dict = field(default_factory=dict)
    session: Verdict = field(default_factory=lambda: Verdict(OK_STATUS))
    checked_ops: int = 0

    @property
    def ok(self):
        return self.session.ok and all(v.ok for v in self.per_key.values())

    def violations(self):
        bad = {k: v for k, v in self.per_key.items() if v.status == VIOLATION}
        if self.session.status == VIOLATION:
            bad["__session__"] = self.session
        return bad

    def unchecked(self):
        return [k for k, v in self.per_key.items() if v.status == UNCHECKED]

    def summary(self):
        return {
            "ok": self.ok,
            "keys_checked": len(self.per_key),
            "ops_checked": self.checked_ops,
            "violations": {
                k: v.witness for k, v in self.violations().items()
            },
            "unchecked_keys": self.unchecked(),
        }


class _SearchOp:
    __slots__ = ("idx", "kind", "invoke", "response", "value", "maybe", "event")

    def __init__(self, idx, kind, invoke, response, value, maybe, event):
        self.idx = idx
        self.kind = kind
        self.invoke = invoke
        self.response = response
        self.value = value
        self.maybe = maybe
        self.event = event


class _BudgetExceeded(Exception):
    pass


def check_key_linearizable(events, initial=None, cap=DEFAULT_OP_CAP):
    """Verdict for one key's operations.

    events: HistoryEvents all touching the same key.
    initial: the key's value before the run (None = absent).
    """
    read_values = {e.result_value for e in events
                   if e.op == "read" and e.outcome == OK}
    ops = []
    for e in events:
        if e.op == "write":
            if e.outcome == OK:
                ops.append(_SearchOp(len(ops), "write", e.invoke_ns, e.response_ns,
                                     e.value, False, e))
            elif e.outcome in (SUPERSEDED, UNRESOLVED, None):
                # a maybe-write nobody ever read can always be linearized as
                # "never took effect"; dropping it up front shrinks the search
                if e.value in read_values:
                    ops.append(_SearchOp(len(ops), "write", e.invoke_ns,
                                         float("inf"), e.value, True, e))
            # rejected writes never entered the protocol
        elif e.op == "read":
            if e.outcome == OK:
                ops.append(_SearchOp(len(ops), "read", e.invoke_ns, e.response_ns,
                                     e.result_value, False, e))
            elif e.outcome == NOT_FOUND:
                ops.append(_SearchOp(len(ops), "read", e.invoke_ns, e.response_ns,
                                     None, False, e))
            # unresolved reads constrain nothing
    if len(ops) > cap:
        return Verdict(UNCHECKED, witness={"ops": len(ops), "cap": cap})

    definite = frozenset(op.idx for op in ops if not op.maybe)
    if not definite:
        return Verdict(OK_STATUS, order=[])

    memo = set()
    budget = [NODE_BUDGET]
    order = []

    def candidates(remaining):
        out = []
        for i in remaining:
            inv = ops[i].invoke
            if all(ops[j].response >= inv for j in remaining if j != i):
                out.append(i)
        return out

    def dfs(remaining, value):
        if not (remaining & definite):
            return True
        state = (remaining, value)
        if state in memo:
            return False
        memo.add(state)
        budget[0] -= 1
        if budget[0] < 0:
            raise _BudgetExceeded
        for i in candidates(remaining):
            op = ops[i]
            if op.kind == "read":
                if op.value != value:
                    continue
                order.append(i)
                if dfs(remaining - {i}, value):
                    return True
                order.pop()
            else:
                order.append(i)
                if dfs(remaining - {i}, op.value):
                    return True
                order.pop()
        return False

    try:
        if dfs(frozenset(range(len(ops))), initial):
            return Verdict(OK_STATUS, order=[ops[i].event for i in order])
    except _BudgetExceeded:
        return Verdict(UNCHECKED, witness={"reason": "search budget exhausted"})
    return Verdict(VIOLATION, witness=_diagnose(ops, initial))


def _diagnose(ops, initial):
    """Best-effort witness: a read vs. the completed write it contradicts."""
    reads = sorted((o for o in ops if o.kind == "read"), key=lambda o: o.invoke)
    writes = [o for o in ops if o.kind == "write"]
    for r in reads:
        preceding = [w for w in writes if not w.maybe and w.response <= r.invoke]
        if preceding:
            last = max(preceding, key=lambda w: w.response)
            if r.value != last.value:
                return {
                    "read": r.event.to_dict(),
                    "conflicting_write": last.event.to_dict(),
                    "reason": "read missed a write that completed before it",
                }
        known = {w.value for w in writes}
        if r.value != initial and r.value not in known:
            return {"read": r.event.to_dict(), "reason": "read returned an unknown value"}
    return {"reason": "no order consistent with real time satisfies all reads"}


def check_session_order(events, initial_fn=None):
    """Read-your-writes within each session, using value uniqueness."""
    writers = {}
    for e in events:
        if e.op == "write" and e.value is not None:
            writers.setdefault(e.value, e)
    sessions = {}
    for e in events:
        sessions.setdefault(e.session, []).append(e)
    for sid in sorted(sessions):
        last_write = {}
        for e in sorted(sessions[sid], key=lambda x: (x.invoke_ns, x.request_id)):
            if e.op == "write" and e.outcome == OK:
                last_write[e.key] = e
            elif e.op == "read" and e.outcome in (OK, NOT_FOUND):
                w = last_write.get(e.key)
                if w is None or e.invoke_ns < w.response_ns:
                    continue
                if e.outcome == NOT_FOUND:
                    return Verdict(VIOLATION, witness={
                        "read": e.to_dict(), "write": w.to_dict(),
                        "reason": "not-found after the session's acked write",
                    })
                if e.result_value == w.value:
                    continue
                producer = writers.get(e.result_value)
                if producer is None:
                    return Verdict(VIOLATION, witness={
                        "read": e.to_dict(), "write": w.to_dict(),
                        "reason": "session read went back to a pre-write value",
                    })
                if producer.response_ns is not None and producer.response_ns < w.invoke_ns:
                    return Verdict(VIOLATION, witness={
                        "read": e.to_dict(), "write": w.to_dict(),
                        "older_write": producer.to_dict(),
                        "reason": "session read returned an older write",
                    })
    return Verdict(OK_STATUS)


def check_history(events, initial_fn=None, cap=DEFAULT_OP_CAP):
    """Per-key linearizability plus session order for a whole history."""
    by_key = {}
    for e in events:
        by_key.setdefault(e.key, []).append(e)
    result = HistoryCheck()
    for key in sorted(by_key):
        initial = initial_fn(key) if initial_fn else None
        result.per_key[key] = check_key_linearizable(by_key[key], initial, cap)
        result.checked_ops += len(by_key[key])
    result.session = check_session_order(events, initial_fn)
    return result


# -- JSON-lines history format ------------------------------------------------

def dumps_history(events, meta):
    lines = [json.dumps({"meta": meta}, sort_keys=True)]
    lines += [json.dumps(e.to_dict(), sort_keys=True) for e in events]
    return ("\n".join(lines) + "\n").encode()


def dump_history(events, meta, path):
    with open(path, "wb") as f:
        f.write(dumps_history(events, meta))


def loads_history(data):
    meta = {}
    events = []
    for line in data.decode().splitlines():
        line = line.strip()
        if not line:
            continue
        d = json.loads(line)
        if "meta" in d and "op" not in d:
            meta = d["meta"]
        else:
            events.append(HistoryEvent.from_dict(d))
    return meta, events


def load_history(path):
    with open(path, "rb") as f:
        return loads_history(f.read())
