import pytest

from nicsim.messages import Timestamp
from nicsim.oplog import CompactionError, LogError, PROPOSED, UpdateLog


def ts(v, o=0):
    return Timestamp(v, o)


def test_append_indices_from_zero():
    log = UpdateLog()
    assert log.append("a", "v", ts(1)) == 0
    assert log.append("b", "v", ts(1, 1)) == 1


def test_append_after_compaction_continues_from_floor():
    log = UpdateLog()
    for i in range(5):
        log.append(f"k{i}", "v", ts(i + 1))
        log.mark_committed(f"k{i}", ts(i + 1), i + 1)
    log.note_durable(5)
    assert log.compact(4) == 5
    assert log.floor == 5
    assert log.append("x", "v", ts(9)) == 5
    log.append("y", "v", ts(9, 1))
    assert log.append("z", "v", ts(9, 2)) == 5 + 2


def test_mark_committed_flips_status():
    log = UpdateLog()
    log.append("k", "v", ts(1, 0))
    log.mark_committed("k", ts(1, 0), 1)
    assert log.entry(0).status == "committed"


def test_mark_committed_idempotent():
    log = UpdateLog()
    log.append("k", "v", ts(1, 0))
    log.mark_committed("k", ts(1, 0), 1)
    log.mark_committed("k", ts(1, 0), 2)  # no-op, keeps the first commit index
    assert log.entry(0).commit_index == 1


def test_mark_committed_unknown_write_errors():
    log = UpdateLog()
    with pytest.raises(LogError):
        log.mark_committed("k", ts(3, 1), 1)


def test_compact_requires_committed_prefix():
    log = UpdateLog()
    for i in range(4):
        log.append(f"k{i}", "v", ts(i + 1))
    for i in (0, 1, 3):
        log.mark_committed(f"k{i}", ts(i + 1), i + 1)
    log.note_durable(4)
    with pytest.raises(CompactionError):
        log.compact(3)  # entry 2 is still proposed
    assert log.compact(1) == 2


def test_compact_cannot_pass_durable_mark():
    log = UpdateLog()
    for i in range(3):
        log.append(f"k{i}", "v", ts(i + 1))
        log.mark_committed(f"k{i}", ts(i + 1), i + 1)
    log.note_durable(2)
    with pytest.raises(CompactionError):
        log.compact(2)  # entry 2 committed at index 3 > durable mark 2
    assert log.compact(1) == 2


def test_compact_prefixes_accumulate():
    log = UpdateLog()
    for i in range(4):
        log.append(f"k{i}", "v", ts(i + 1))
        log.mark_committed(f"k{i}", ts(i + 1), i + 1)
    log.note_durable(4)
    assert log.compact(1) == 2
    assert log.compact(3) == 2
    assert len(log) == 0


def test_compact_below_floor_is_noop():
    log = UpdateLog()
    log.append("k", "v", ts(1))
    log.mark_committed("k", ts(1), 1)
    log.note_durable(1)
    log.compact(0)
    assert log.compact(0) == 0


def test_durable_mark_monotone():
    log = UpdateLog()
    log.note_durable(5)
    with pytest.raises(LogError):
        log.note_durable(4)


def test_uncommitted_entries_in_index_order():
    log = UpdateLog()
    for i in range(8):
        log.append(f"k{i}", "v", ts(i + 1))
    for i in (0, 1, 2, 3, 5, 6):
        log.mark_committed(f"k{i}", ts(i + 1), i + 1)
    assert [e.index for e in log.uncommitted_entries()] == [4, 7]
    for i in range(8):
        log.mark_committed(f"k{i}", ts(i + 1), 10 + i)
    assert log.uncommitted_entries() == []


def test_compactable_prefix_respects_out_of_order_commits():
    log = UpdateLog()
    log.append("a", "v", ts(1, 0))   # index 0
    log.append("b", "v", ts(1, 1))   # index 1
    log.mark_committed("b", ts(1, 1), 1)   # b commits first
    log.mark_committed("a", ts(1, 0), 2)
    log.note_durable(1)
    assert log.compactable_prefix() == -1  # entry 0 committed at 2 > durable 1
    log.note_durable(2)
    assert log.compactable_prefix() == 1


def test_entry_outside_retained_range_errors():
    log = UpdateLog()
    log.append("k", "v", ts(1))
    log.mark_committed("k", ts(1), 1)
    log.note_durable(1)
    log.compact(0)
    with pytest.raises(LogError):
        log.entry(0)
    with pytest.raises(LogError):
        log.entry(5)


def test_dump_is_json_friendly():
    log = UpdateLog()
    log.append("k", "v", ts(2, 1))
    d = log.dump()
    assert d["entries"][0]["ts"] == [2, 1]
    assert d["entries"][0]["status"] == PROPOSED
