import json
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import FixedCognition
from forgesim.errors import InsufficientData, InvalidInput, StorageFailure
from forgesim.memory import MemoryKind, MemoryStore

F, E = MemoryKind.FACTUAL, MemoryKind.EVALUATIVE


def test_sequence_numbers_start_at_one():
    store = MemoryStore()
    assert store.write("a", F, {"x": 1}) == 1
    assert store.write("a", F, {"x": 2}) == 2
    assert store.write("b", E, {"x": 3}) == 1


def test_interleaved_writes_are_contiguous_per_agent():
    store = MemoryStore()
    rng = random.Random(0)
    order = ["a"] * 500 + ["b"] * 500
    rng.shuffle(order)
    for i, agent in enumerate(order):
        store.write(agent, rng.choice([F, E]), {"i": i})
    for agent in ("a", "b"):
        assert [r.seq for r in store.records(agent)] == list(range(1, 501))


def test_retrieve_filters_and_orders():
    store = MemoryStore()
    assert store.retrieve("a") == []
    kinds = [F, E, F, F, E, F, E, F]
    for i, k in enumerate(kinds):
        store.write("a", k, {"i": i})
    newest_eval = store.retrieve("a", E, last_n=2)
    assert [r.payload["i"] for r in newest_eval] == [6, 4]
    assert len(store.retrieve("a", last_n=100)) == 8
    assert store.retrieve("a", last_n=3) == store.retrieve("a", last_n=3)


def test_payload_must_be_json_and_non_empty():
    store = MemoryStore()
    with pytest.raises(InvalidInput):
        store.write("a", F, {})
    with pytest.raises(StorageFailure):
        store.write("a", F, {"bad": object()})
    assert store.records("a") == ()


def test_reflect_window_and_errors():
    store = MemoryStore()
    with pytest.raises(InsufficientData):
        store.reflect("a", 3, FixedCognition())
    for i in range(7):
        store.write("a", F, {"i": i})
    summary = store.reflect("a", 3, FixedCognition("be bolder"), tick=7)
    assert summary.covering_range == (5, 7)
    assert store.latest_guidance("a") == "be bolder"
    with pytest.raises(InsufficientData):
        store.reflect("a", 0, FixedCognition())


def test_reflect_with_stub(cognition):
    store = MemoryStore()
    for i in range(4):
        store.write("a", E, {"decision": "accept" if i % 2 else "reject"})
    s1 = store.reflect("a", 4, cognition)
    assert "4 records" in s1.guidance_text


@settings(max_examples=40, deadline=None)
@given(st.lists(st.tuples(st.sampled_from("abc"), st.sampled_from(list(MemoryKind)), st.integers()), max_size=40))
def test_roundtrip_preserves_retrieval(tmp_path_factory, writes):
    store = MemoryStore()
    for agent, kind, v in writes:
        store.write(agent, kind, {"v": v, "nested": [v, {"k": str(v)}]})
    path = tmp_path_factory.mktemp("mem") / "memory.jsonl"
    store.save(path)
    again = MemoryStore.load(path)
    for agent in "abc":
        for kind in (None, *MemoryKind):
            for n in (1, 3, 50):
                assert again.retrieve(agent, kind, n) == store.retrieve(agent, kind, n)
    snap = MemoryStore.from_snapshot(json.loads(json.dumps(store.snapshot())))
    assert snap.snapshot() == store.snapshot()


def test_log_path_appends(tmp_path):
    log = tmp_path / "log.jsonl"
    store = MemoryStore(log)
    store.write("a", F, {"x": 1})
    store.write("a", E, {"x": 2})
    assert len(log.read_text().splitlines()) == 2


def test_storage_failure(tmp_path):
    store = MemoryStore(tmp_path / "missing" / "log.jsonl")
    with pytest.raises(StorageFailure):
        store.write("a", F, {"x": 1})
    assert store.records("a") == ()


def test_load_rejects_gap(tmp_path):
    p = tmp_path / "m.jsonl"
    p.write_text(json.dumps({"seq": 2, "agent_id": "a", "kind": "factual", "tick": 0, "payload": {"x": 1}}) + "\n")
    with pytest.raises(InvalidInput):
        MemoryStore.load(p)
