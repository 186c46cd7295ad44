"""Per-agent append-only memory with factual/evaluative records and reflection.

Log format: one JSON object per line with fields in the order
``seq, agent_id, kind, tick, payload``.
"""

from __future__ import annotations

import json
import threading
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Iterable

from .backends import Backend, CognitionRequest, CognitionTask
from .errors import InsufficientData, InvalidInput, StorageFailure


class MemoryKind(str, Enum):
    FACTUAL = "factual"
    EVALUATIVE = "evaluative"


@dataclass(frozen=True)
class MemoryRecord:
    seq: int
    agent_id: str
    kind: MemoryKind
    tick: int
    payload: dict

    def to_dict(self) -> dict:
        return {"seq": self.seq, "agent_id": self.agent_id, "kind": self.kind.value,
                "tick": self.tick, "payload": self.payload}

    def to_line(self) -> str:
        return json.dumps(self.to_dict(), ensure_ascii=False)

    @classmethod
    def from_dict(cls, d: dict) -> MemoryRecord:
        return cls(int(d["seq"]), str(d["agent_id"]), MemoryKind(d["kind"]), int(d["tick"]), d["payload"])


@dataclass(frozen=True)
class ReflectionSummary:
    agent_id: str
    seq_from: int
    seq_to: int
    guidance_text: str
    produced_at: int

    @property
    def covering_range(self) -> tuple[int, int]:
        return (self.seq_from, self.seq_to)

    def to_dict(self) -> dict:
        return {"agent_id": self.agent_id, "seq_from": self.seq_from, "seq_to": self.seq_to,
                "guidance_text": self.guidance_text, "produced_at": self.produced_at}

    @classmethod
    def from_dict(cls, d: dict) -> ReflectionSummary:
        return cls(str(d["agent_id"]), int(d["seq_from"]), int(d["seq_to"]),
                   str(d["guidance_text"]), int(d["produced_at"]))


def _freeze_payload(payload: dict) -> dict:
    """Deep copy through JSON; rejects anything that would not round-trip."""
    try:
        text = json.dumps(payload, ensure_ascii=False, sort_keys=False)
    except (TypeError, ValueError) as exc:
        raise StorageFailure(f"payload not serializable: {exc}") from exc
    copy = json.loads(text)
    if copy != payload:
        raise StorageFailure("payload does not round-trip losslessly")
    return copy


class MemoryStore:
    """Memory for all agents of a run.

    Writes for one agent must come from a single writer; a lock keeps the
    shared structures consistent when different agents write in parallel.
    If ``log_path`` is given every record is also appended to that file.
    """

    def __init__(self, log_path: str | Path | None = None):
        self._records: dict[str, list[MemoryRecord]] = {}
        self._reflections: dict[str, list[ReflectionSummary]] = {}
        self._lock = threading.Lock()
        self.log_path = Path(log_path) if log_path else None

    def write(self, agent_id: str, kind: MemoryKind | str, payload: dict, tick: int = 0) -> int:
        if not payload:
            raise InvalidInput("memory payload must be non-empty")
        kind = MemoryKind(kind)
        frozen = _freeze_payload(payload)
        with self._lock:
            records = self._records.setdefault(agent_id, [])
            record = MemoryRecord(len(records) + 1, agent_id, kind, tick, frozen)
            if self.log_path is not None:
                try:
                    with open(self.log_path, "a", encoding="utf-8") as fh:
                        fh.write(record.to_line() + "\n")
                except OSError as exc:
                    raise StorageFailure(f"cannot append to {self.log_path}: {exc}") from exc
            records.append(record)
        return record.seq

    def retrieve(self, agent_id: str, kind: MemoryKind | str | None = None, last_n: int = 10) -> list[MemoryRecord]:
        """Up to ``last_n`` records, newest first, optionally filtered by kind."""
        if last_n < 1:
            raise ValueError("last_n must be >= 1")
        kind = MemoryKind(kind) if kind is not None else None
        out = []
        for rec in reversed(self._records.get(agent_id, ())):
            if kind is None or rec.kind is kind:
                out.append(rec)
                if len(out) == last_n:
                    break
        return out

    def records(self, agent_id: str) -> tuple[MemoryRecord, ...]:
        return tuple(self._records.get(agent_id, ()))

    def agents(self) -> list[str]:
        return sorted(self._records)

    def offsets(self) -> dict[str, int]:
        return {a: len(r) for a, r in sorted(self._records.items())}

    def __len__(self) -> int:
        return sum(len(r) for r in self._records.values())

    def reflect(self, agent_id: str, window: int, cognition: Backend, tick: int = 0) -> ReflectionSummary:
        """Summarise the agent's last ``window`` records through the cognition backend."""
        recent = self._records.get(agent_id, [])[-window:] if window > 0 else []
        if not recent:
            raise InsufficientData(f"no records to reflect on for {agent_id!r}")
        response = cognition.call(
            CognitionRequest(
                CognitionTask.REFLECT,
                {"agent_id": agent_id, "records": [r.payload for r in recent]},
            )
        )
        summary = ReflectionSummary(agent_id, recent[0].seq, recent[-1].seq, response.text, tick)
        with self._lock:
            self._reflections.setdefault(agent_id, []).append(summary)
        return summary

    def reflections(self, agent_id: str | None = None) -> list[ReflectionSummary]:
        if agent_id is not None:
            return list(self._reflections.get(agent_id, ()))
        return [s for a in sorted(self._reflections) for s in self._reflections[a]]

    def latest_guidance(self, agent_id: str) -> str | None:
        summaries = self._reflections.get(agent_id)
        return summaries[-1].guidance_text if summaries else None

    # persistence

    def iter_records(self) -> Iterable[MemoryRecord]:
        for agent in sorted(self._records):
            yield from self._records[agent]

    def snapshot(self) -> dict:
        return {
            "offsets": self.offsets(),
            "records": [r.to_dict() for r in self.iter_records()],
            "reflections": [s.to_dict() for s in self.reflections()],
        }

    @classmethod
    def from_snapshot(cls, snap: dict, log_path: str | Path | None = None) -> MemoryStore:
        store = cls()
        offsets = snap.get("offsets", {})
        for d in snap.get("records", ()):
            store._load(MemoryRecord.from_dict(d))
        for agent, n in offsets.items():
            store._records[agent] = store._records.get(agent, [])[:n]
        for d in snap.get("reflections", ()):
            s = ReflectionSummary.from_dict(d)
            store._reflections.setdefault(s.agent_id, []).append(s)
        store.log_path = Path(log_path) if log_path else None
        return store

    def _load(self, rec: MemoryRecord) -> None:
        records = self._records.setdefault(rec.agent_id, [])
        if rec.seq != len(records) + 1:
            raise InvalidInput(f"memory log gap for {rec.agent_id!r}: seq {rec.seq} after {len(records)}")
        records.append(rec)

    def save(self, path: str | Path) -> None:
        try:
            with open(path, "w", encoding="utf-8") as fh:
                for rec in self.iter_records():
                    fh.write(rec.to_line() + "\n")
        except OSError as exc:
            raise StorageFailure(f"cannot write {path}: {exc}") from exc

    def save_reflections(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for s in self.reflections():
                fh.write(json.dumps(s.to_dict(), ensure_ascii=False) + "\n")

    @classmethod
    def load(cls, path: str | Path, reflections_path: str | Path | None = None) -> MemoryStore:
        store = cls()
        try:
            with open(path, encoding="utf-8") as fh:
                for line in fh:
                    if line.strip():
                        store._load(MemoryRecord.from_dict(json.loads(line)))
            if reflections_path and Path(reflections_path).exists():
                with open(reflections_path, encoding="utf-8") as fh:
                    for line in fh:
                        if line.strip():
                            s = ReflectionSummary.from_dict(json.loads(line))
                            store._reflections.setdefault(s.agent_id, []).append(s)
        except (OSError, json.JSONDecodeError, KeyError, ValueError) as exc:
            if isinstance(exc, InvalidInput):
                raise
            raise StorageFailure(f"cannot load memory log {path}: {exc}") from exc
        return store
