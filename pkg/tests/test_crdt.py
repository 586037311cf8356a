"""Tests for the CRDT facade and the reference counter and map."""

import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from exceptions import DecodeError
from rbss.crdt import GrowOnlyCounter, ObservedRemoveMap, Semantics


def _concurrent_set_delete(semantics: Semantics) -> tuple[ObservedRemoveMap, ...]:
    """R1 deletes k1 while R2 overwrites it, then both exchange states."""
    r1 = ObservedRemoveMap("r1", semantics)
    r2 = ObservedRemoveMap("r2", semantics)
    r1.put("k1", "x")
    r2.merge_serialized_state(r1.get_serialized_state())
    r1.delete("k1")
    r2.put("k1", "y")
    r2.put("k2", "w")
    blob1, blob2 = r1.get_serialized_state(), r2.get_serialized_state()
    r1.merge_serialized_state(blob2)
    r2.merge_serialized_state(blob1)
    return r1, r2


def test_map_set_and_read() -> None:
    """A set is visible locally."""
    m = ObservedRemoveMap("r1")
    m.put("k1", "v")
    assert m.get("k1") == "v"
    assert m.items() == {"k1": "v"}


def test_map_sequential_delete() -> None:
    """A delete after a set removes the key; deleting an absent key is a no-op."""
    m = ObservedRemoveMap("r1")
    before = m.get_serialized_state()
    m.delete("nothing")
    assert m.get_serialized_state() == before
    m.put("k", 1)
    m.delete("k")
    assert m.get("k") is None


def test_map_set_wins() -> None:
    """Concurrent set and delete keep the set under set-wins."""
    r1, r2 = _concurrent_set_delete(Semantics.SET_WINS)
    assert r1.items() == {"k1": "y", "k2": "w"}
    assert r1 == r2


def test_map_del_wins() -> None:
    """Concurrent set and delete drop the key under del-wins."""
    r1, r2 = _concurrent_set_delete(Semantics.DEL_WINS)
    assert r1.items() == {"k2": "w"}
    assert r1 == r2


def test_map_concurrent_sets_pick_one_value() -> None:
    """Concurrent sets of one key resolve to the same value everywhere."""
    a, b = ObservedRemoveMap("a"), ObservedRemoveMap("b")
    a.put("k", "apple")
    b.put("k", "banana")
    blob_a = a.get_serialized_state()
    a.merge_serialized_state(b.get_serialized_state())
    b.merge_serialized_state(blob_a)
    assert a.get("k") == b.get("k") == "banana"


def test_map_merge_unions_entries() -> None:
    """Merging disjoint maps keeps both entries."""
    a, b = ObservedRemoveMap("a"), ObservedRemoveMap("b")
    a.put("k1", "v")
    b.put("k2", "w")
    a.merge_serialized_state(b.get_serialized_state())
    assert a.to_json() == '{"k1":"v","k2":"w"}'


def test_map_semantics_mismatch() -> None:
    """Maps with different semantics do not merge."""
    a = ObservedRemoveMap("a", Semantics.SET_WINS)
    b = ObservedRemoveMap("b", Semantics.DEL_WINS)
    with pytest.raises(DecodeError):
        a.merge_serialized_state(b.get_serialized_state())


def test_map_fresh_tags_after_merge() -> None:
    """A replica re-learning its own tags never reuses a sequence number."""
    a = ObservedRemoveMap("a")
    a.put("k", 1)
    a.put("k", 2)
    restarted = ObservedRemoveMap("a")
    restarted.merge_serialized_state(a.get_serialized_state())
    restarted.put("k", 3)
    a.merge_serialized_state(restarted.get_serialized_state())
    assert a.get("k") == 3


@pytest.mark.parametrize(
    "blob",
    [
        b"",
        b"XXXX",
        b"ORM1",
        b"ORM1\x07",
        b"GCT1\x00\x00\x00\x05",
        b"ORM1\x00" + b"\x00" * 13,
    ],
)
def test_decode_errors(blob: bytes) -> None:
    """Truncated, foreign or padded blobs raise DecodeError."""
    with pytest.raises(DecodeError):
        ObservedRemoveMap("r").merge_serialized_state(blob)


def test_counter_merge_is_pointwise_max() -> None:
    """Counter value sums contributions; merge keeps the max per replica."""
    a = GrowOnlyCounter.from_counts("a", {"a": 3, "b": 1})
    b = GrowOnlyCounter.from_counts("b", {"b": 4})
    a.merge_serialized_state(b.get_serialized_state())
    assert a.counts == {"a": 3, "b": 4}
    assert a.value == 7


def test_counter_rejects_non_positive_increment() -> None:
    """Increments must be positive."""
    with pytest.raises(ValueError, match="positive"):
        GrowOnlyCounter("a").increment(0)


def test_update_notification() -> None:
    """Subscribers hear every local update, but not merges."""
    calls = []
    counter = GrowOnlyCounter("a")
    counter.subscribe(lambda: calls.append("update"))
    counter.increment()
    counter.merge_serialized_state(
        GrowOnlyCounter.from_counts("b", {"b": 2}).get_serialized_state()
    )
    assert calls == ["update"]


def _random_maps(seed: int, ops: int = 20) -> list[ObservedRemoveMap]:
    rng = random.Random(seed)
    maps = [ObservedRemoveMap(f"r{i}") for i in range(3)]
    for _ in range(ops):
        m = rng.choice(maps)
        key = rng.choice(["k1", "k2", "k3"])
        if rng.random() < 0.3:  # noqa: PLR2004
            m.delete(key)
        else:
            m.put(key, rng.randint(0, 9))
        if rng.random() < 0.2:  # noqa: PLR2004
            other = rng.choice(maps)
            m.merge_serialized_state(other.get_serialized_state())
    return maps


def _merged(replica: str, *blobs: bytes) -> ObservedRemoveMap:
    m = ObservedRemoveMap(replica)
    for blob in blobs:
        m.merge_serialized_state(blob)
    return m


@settings(max_examples=50)
@given(st.integers(min_value=0, max_value=10_000))
def test_map_merge_laws(seed: int) -> None:
    """Merge is commutative, associative and idempotent on random histories."""
    a, b, c = (m.get_serialized_state() for m in _random_maps(seed))
    assert _merged("x", a, b) == _merged("x", b, a)
    assert _merged("x", a, b, c) == _merged("x", c, b, a)
    assert _merged("x", a, a) == _merged("x", a)


@settings(max_examples=50)
@given(st.integers(min_value=0, max_value=10_000))
def test_map_strong_convergence(seed: int) -> None:
    """Replicas that exchanged all states read the same entries."""
    maps = _random_maps(seed)
    blobs = [m.get_serialized_state() for m in maps]
    for m in maps:
        for blob in blobs:
            m.merge_serialized_state(blob)
    assert maps[0].items() == maps[1].items() == maps[2].items()
    assert maps[0] == maps[1] == maps[2]


@settings(max_examples=50)
@given(st.integers(min_value=0, max_value=10_000))
def test_map_merge_is_inflationary(seed: int) -> None:
    """A merged state absorbs both inputs."""
    a, b, _ = _random_maps(seed)
    blob_a = a.get_serialized_state()
    a.merge_serialized_state(b.get_serialized_state())
    assert _merged("x", a.get_serialized_state(), blob_a) == _merged(
        "x", a.get_serialized_state()
    )


counter_histories = st.lists(
    st.tuples(st.sampled_from("abcd"), st.integers(min_value=1, max_value=20)),
    max_size=12,
)


def _counter(history: list[tuple[str, int]]) -> bytes:
    """Serialized state after each replica in `history` merged, then incremented."""
    counter = GrowOnlyCounter("x")
    for rid, amount in history:
        local = GrowOnlyCounter(rid)
        local.merge_serialized_state(counter.get_serialized_state())
        local.increment(amount)
        counter.merge_serialized_state(local.get_serialized_state())
    return counter.get_serialized_state()


def _merged_counter(*blobs: bytes) -> bytes:
    counter = GrowOnlyCounter("y")
    for blob in blobs:
        counter.merge_serialized_state(blob)
    return counter.get_serialized_state()


@settings(max_examples=200)
@given(counter_histories, counter_histories, counter_histories)
def test_counter_merge_laws(
    first: list[tuple[str, int]],
    second: list[tuple[str, int]],
    third: list[tuple[str, int]],
) -> None:
    """Counter merge is commutative, associative and idempotent."""
    a, b, c = _counter(first), _counter(second), _counter(third)
    assert _merged_counter(a, b) == _merged_counter(b, a)
    assert _merged_counter(_merged_counter(a, b), c) == _merged_counter(
        a, _merged_counter(b, c)
    )
    assert _merged_counter(a, a) == _merged_counter(a) == a
