import random

import pytest

from nicsim.cache import CacheConfigError, DurableMarkError, FLUSH_TOKEN, NicCache
from nicsim.effects import CancelTimer, PcieSend, SetTimer
from nicsim.messages import Timestamp


def make(capacity=8, batch=4, timer=1_000):
    return NicCache(capacity, batch, timer)


def ts(v, o=0):
    return Timestamp(v, o)


def batches_in(effects):
    return [e.msg for e in effects if isinstance(e, PcieSend)]


def test_capacity_zero_rejected():
    with pytest.raises(CacheConfigError):
        NicCache(0, 4, 0)


def test_commit_batches_exactly_at_batch_size():
    c = make(batch=4, timer=0)
    effects = []
    for i in range(4):
        effects += c.commit(f"k{i}", "v", ts(1), i + 1, now=i)
    batches = batches_in(effects)
    assert len(batches) == 1
    assert len(batches[0].entries) == 4
    assert [e.commit_index for e in batches[0].entries] == [1, 2, 3, 4]


def test_flush_timer_path_single_entry():
    c = make(batch=4, timer=1_000)
    effects = c.commit("k", "v", ts(1), 1, now=0)
    assert any(isinstance(e, SetTimer) and e.token == FLUSH_TOKEN for e in effects)
    flush = c.on_flush_timer()
    assert len(batches_in(flush)) == 1
    assert len(batches_in(flush)[0].entries) == 1


def test_ten_commits_then_timer_gives_4_4_2():
    c = make(capacity=32, batch=4, timer=1_000)
    effects = []
    for i in range(10):
        effects += c.commit(f"k{i}", "v", ts(1), i + 1, now=i)
    effects += c.on_flush_timer()
    sizes = [len(b.entries) for b in batches_in(effects)]
    assert sizes == [4, 4, 2]


def test_size_flush_cancels_armed_timer():
    c = make(batch=2, timer=1_000)
    effects = c.commit("a", "v", ts(1), 1, now=0)
    assert any(isinstance(e, SetTimer) for e in effects)
    effects = c.commit("b", "v", ts(1), 2, now=1)
    assert any(isinstance(e, CancelTimer) for e in effects)
    assert len(batches_in(effects)) == 1


def test_timer_disabled_means_no_arm():
    c = make(batch=4, timer=0)
    effects = c.commit("a", "v", ts(1), 1, now=0)
    assert not any(isinstance(e, SetTimer) for e in effects)


def test_lookup_hit_and_miss():
    c = make()
    assert c.lookup("k", 0) is None
    c.commit("k", "v", ts(1), 1, now=0)
    entry = c.lookup("k", 5)
    assert entry.value == "v"
    assert entry.last_touch == 5


def test_fill_then_lookup():
    c = make()
    assert c.fill("k", "v", ts(0, -1), now=0)
    assert c.lookup("k", 1).value == "v"
    assert c.lookup("k", 1).durable


def test_fill_discarded_when_newer_committed():
    c = make()
    c.commit("k", "new", ts(3, 1), 1, now=0)
    assert not c.fill("k", "old", ts(2, 0), now=1)
    assert c.lookup("k", 2).value == "new"


def test_fill_into_full_cache_evicts_lru_unpinned():
    c = make(capacity=2, batch=64, timer=0)
    c.fill("a", "v", ts(0, -1), now=0)
    c.fill("b", "v", ts(0, -1), now=1)
    c.lookup("a", 2)  # b is now least recently touched
    c.fill("d", "v", ts(0, -1), now=3)
    assert c.lookup("b", 4) is None
    assert c.lookup("a", 4) is not None and c.lookup("d", 4) is not None


def test_eviction_skips_pinned_entries():
    c = make(capacity=2, batch=64, timer=0)
    c.commit("a", "v", ts(1), 1, now=0)   # pinned, never acked
    c.fill("b", "v", ts(0, -1), now=1)
    c.fill("d", "v", ts(0, -1), now=2)    # b is the only evictable entry
    assert c.lookup("b", 3) is None
    assert c.lookup("a", 3) is not None


def test_all_pinned_overflows_instead_of_evicting():
    c = make(capacity=2, batch=64, timer=0)
    for i, k in enumerate("abd"):
        c.commit(k, "v", ts(1), i + 1, now=i)
    assert len(c) == 3
    assert c.overflow_count == 1
    assert c.evicted_count == 0


def test_mark_durable_unpins_and_respects_rewrites():
    c = make(capacity=8, batch=64, timer=0)
    c.commit("a", "v1", ts(1), 1, now=0)
    c.commit("b", "v1", ts(1, 1), 2, now=1)
    c.commit("a", "v2", ts(2), 9, now=2)   # rewrite at a later index
    c.mark_durable(7)
    assert set(c.pinned_keys()) == {"a"}   # ack covers index 2 but not 9
    c.mark_durable(9)
    assert c.pinned_keys() == []


def test_mark_durable_duplicate_noop_and_regress_error():
    c = make()
    c.commit("a", "v", ts(1), 1, now=0)
    c.mark_durable(1)
    c.mark_durable(1)  # duplicate ack
    with pytest.raises(DurableMarkError):
        c.mark_durable(0)


def test_ceil_batching_property():
    for batch in (1, 4, 16, 64):
        for writes in (1, 5, 64, 100):
            c = NicCache(10_000, batch, 0)
            effects = []
            for i in range(writes):
                effects += c.commit(f"k{i}", "v", ts(1), i + 1, now=i)
            effects += c.on_flush_timer()
            full = writes // batch
            expected = full + (1 if writes % batch else 0)
            assert len(batches_in(effects)) == expected, (batch, writes)


class LruOracle:
    """Reference model: list ordered oldest-touch first, unpinned evictable."""

    def __init__(self, capacity):
        self.capacity = capacity
        self.order = []          # keys, LRU first
        self.pinned = set()

    def touch(self, key):
        if key in self.order:
            self.order.remove(key)
        self.order.append(key)

    def insert(self, key, pinned):
        self.touch(key)
        if pinned:
            self.pinned.add(key)
        else:
            self.pinned.discard(key)
        evicted = []
        while len(self.order) > self.capacity:
            victim = next((k for k in self.order if k not in self.pinned), None)
            if victim is None:
                break
            self.order.remove(victim)
            evicted.append(victim)
        return evicted

    def unpin_all(self):
        self.pinned.clear()


def test_lru_against_oracle_replay():
    rng = random.Random(7)
    cache = NicCache(6, 1_000, 0)
    oracle = LruOracle(6)
    commit_index = 0
    for step in range(600):
        key = f"k{rng.randrange(12)}"
        action = rng.random()
        if action < 0.4:
            commit_index += 1
            cache.commit(key, "v", ts(commit_index), commit_index, now=step)
            oracle.insert(key, pinned=True)
        elif action < 0.7:
            got = cache.lookup(key, now=step)
            if got is not None:
                oracle.touch(key)
            assert (got is not None) == (key in oracle.order)
        elif action < 0.9:
            if cache.fill(key, "v", ts(0, -1), now=step):
                oracle.insert(key, pinned=False)
        else:
            cache.mark_durable(commit_index)
            oracle.unpin_all()
        assert set(cache.entries) == set(oracle.order), step
        assert list(cache.entries) == oracle.order, step


def test_fill_overwrites_only_older_entries():
    c = make()
    c.fill("k", "v0", ts(0, -1), now=0)
    assert c.fill("k", "v1", ts(2, 1), now=1)   # newer wins
    assert c.lookup("k", 2).value == "v1"
    assert not c.fill("k", "v0", ts(1, 0), now=3)  # older discarded


def test_buffer_entries_in_commit_index_order():
    c = make(capacity=64, batch=64, timer=0)
    for i in (1, 2, 3, 7, 9):
        c.commit(f"k{i}", "v", ts(i), i, now=i)
    assert [b.commit_index for b in c.buffer] == [1, 2, 3, 7, 9]
