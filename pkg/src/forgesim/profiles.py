"""Agent profiles ("forgery genes") computed from forgery metadata tables.

A metadata table has exactly the columns ``record_id, creator_id,
method_id, target_id`` and is read from CSV/TSV (header row required) or
JSON Lines (one object per line with those keys).
"""

from __future__ import annotations

import csv
import json
import re
import statistics
from collections import Counter
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Sequence

from .backends import Backend, CognitionRequest, CognitionTask
from .errors import EmptyToolbox, IndexMismatch, InsufficientData, InvalidInput
from .toolbox import Category, Toolbox, load_lexicon
from .util import derive_rng, frac_str, to_fraction

METADATA_COLUMNS = ("record_id", "creator_id", "method_id", "target_id")

_TOKEN = re.compile(r"[a-z0-9]+(?:-[a-z0-9]+)*")


@dataclass(frozen=True)
class ForgeryRecord:
    record_id: str
    creator_id: str
    method_id: str
    target_id: str

    def __post_init__(self):
        for name in METADATA_COLUMNS:
            value = getattr(self, name)
            if not isinstance(value, str) or not value.strip():
                raise InvalidInput(f"empty {name} in metadata record {self.record_id!r}")

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in METADATA_COLUMNS}


def validate_records(records: Sequence[ForgeryRecord]) -> None:
    seen: set[str] = set()
    for r in records:
        if r.record_id in seen:
            raise InvalidInput(f"duplicate record_id {r.record_id!r}")
        seen.add(r.record_id)


def load_metadata(path: str | Path) -> list[ForgeryRecord]:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as exc:
        raise InvalidInput(f"cannot read metadata table {path}: {exc}") from exc
    rows: list[dict]
    if path.suffix in (".jsonl", ".ndjson"):
        try:
            rows = [json.loads(line) for line in text.splitlines() if line.strip()]
        except json.JSONDecodeError as exc:
            raise InvalidInput(f"{path}: {exc}") from exc
    else:
        dialect = "excel-tab" if path.suffix == ".tsv" else "excel"
        reader = csv.DictReader(text.splitlines(), dialect=dialect)
        if reader.fieldnames is None or set(METADATA_COLUMNS) - set(reader.fieldnames):
            raise InvalidInput(f"{path}: header must contain {', '.join(METADATA_COLUMNS)}")
        rows = list(reader)
    records = []
    for i, row in enumerate(rows, 1):
        try:
            records.append(ForgeryRecord(*(str(row[c]) for c in METADATA_COLUMNS)))
        except (KeyError, TypeError) as exc:
            raise InvalidInput(f"{path}: row {i} missing column {exc}") from exc
    validate_records(records)
    return records


def write_metadata(path: str | Path, records: Iterable[ForgeryRecord]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(METADATA_COLUMNS)
        for r in records:
            writer.writerow([r.record_id, r.creator_id, r.method_id, r.target_id])


class PopularityIndex(dict):
    """target_id -> number of times the target was manipulated in the table."""

    @classmethod
    def from_records(cls, records: Iterable[ForgeryRecord]) -> PopularityIndex:
        return cls(Counter(r.target_id for r in records))

    def popularity(self, target_id: str) -> int:
        try:
            return self[target_id]
        except KeyError:
            raise IndexMismatch(f"target {target_id!r} not in popularity index") from None


def _own(records: Sequence[ForgeryRecord], creator: str) -> list[ForgeryRecord]:
    return [r for r in records if r.creator_id == creator]


def creators(records: Iterable[ForgeryRecord]) -> list[str]:
    return sorted({r.creator_id for r in records})


def compute_frequency(records: Sequence[ForgeryRecord], creator: str) -> int:
    return sum(1 for r in records if r.creator_id == creator)


def compute_diversity(records: Sequence[ForgeryRecord], creator: str) -> int:
    own = _own(records, creator)
    if not own:
        raise InsufficientData(f"creator {creator!r} has no records")
    return len({r.method_id for r in own})


def compute_conformity(records: Sequence[ForgeryRecord], index: PopularityIndex, creator: str) -> Fraction:
    """Mean popularity of the creator's targets, as an exact rational."""
    own = _own(records, creator)
    if not own:
        raise InsufficientData(f"creator {creator!r} has no records")
    return Fraction(sum(index.popularity(r.target_id) for r in own), len(own))


@dataclass(frozen=True)
class ProfileConfig:
    style_sample_size: int = 5
    rng_seed: int = 0

    def __post_init__(self):
        if self.style_sample_size < 1:
            raise InvalidInput("style_sample_size must be >= 1")


@dataclass(frozen=True)
class AgentProfile:
    agent_id: str
    freq: int
    diversity: int
    conformity: Fraction
    style_text: str
    # Median diversity over the table the profile came from; None = unknown.
    diversity_median: Fraction | None = None

    @property
    def trait_vector(self) -> tuple[int, int, Fraction]:
        return (self.freq, self.diversity, self.conformity)

    def to_dict(self) -> dict:
        return {
            "agent_id": self.agent_id,
            "freq": self.freq,
            "diversity": self.diversity,
            "conformity": frac_str(self.conformity),
            "style_text": self.style_text,
            "diversity_median": None if self.diversity_median is None else frac_str(self.diversity_median),
        }

    @classmethod
    def from_dict(cls, d: dict) -> AgentProfile:
        try:
            med = d.get("diversity_median")
            return cls(
                agent_id=str(d["agent_id"]),
                freq=int(d["freq"]),
                diversity=int(d["diversity"]),
                conformity=to_fraction(d["conformity"]),
                style_text=str(d["style_text"]),
                diversity_median=None if med is None else to_fraction(med),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise InvalidInput(f"malformed profile record: {exc}") from exc


def style_sample(records: Sequence[ForgeryRecord], creator: str, cfg: ProfileConfig) -> list[ForgeryRecord]:
    own = sorted(_own(records, creator), key=lambda r: r.record_id)
    k = min(cfg.style_sample_size, len(own))
    rng = derive_rng(cfg.rng_seed, "style-sample", creator)
    return sorted(rng.sample(own, k), key=lambda r: r.record_id)


def build_profile(
    records: Sequence[ForgeryRecord],
    creator: str,
    cfg: ProfileConfig,
    cognition: Backend,
    *,
    index: PopularityIndex | None = None,
    diversity_median: Fraction | None = None,
) -> AgentProfile:
    freq = compute_frequency(records, creator)
    if freq == 0:
        raise InsufficientData(f"creator {creator!r} has no records")
    index = index if index is not None else PopularityIndex.from_records(records)
    sample = style_sample(records, creator, cfg)
    response = cognition.call(
        CognitionRequest(
            CognitionTask.STYLE_DESCRIPTION,
            {"agent_id": creator, "records": [r.to_dict() for r in sample]},
        )
    )
    text = response.text.strip()
    if not text:
        raise InvalidInput(f"empty style description for {creator!r}")
    return AgentProfile(
        agent_id=creator,
        freq=freq,
        diversity=compute_diversity(records, creator),
        conformity=compute_conformity(records, index, creator),
        style_text=text,
        diversity_median=diversity_median,
    )


def build_profiles(
    records: Sequence[ForgeryRecord], cfg: ProfileConfig, cognition: Backend
) -> list[AgentProfile]:
    """Profiles for every creator in the table, sorted by creator id."""
    validate_records(records)
    index = PopularityIndex.from_records(records)
    ids = creators(records)
    if not ids:
        return []
    median = Fraction(statistics.median(compute_diversity(records, c) for c in ids))
    return [build_profile(records, c, cfg, cognition, index=index, diversity_median=median) for c in ids]


def save_profiles(path: str | Path, profiles: Iterable[AgentProfile]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for p in profiles:
            fh.write(json.dumps(p.to_dict(), ensure_ascii=False) + "\n")


def load_profiles(path: str | Path) -> list[AgentProfile]:
    try:
        lines = Path(path).read_text(encoding="utf-8").splitlines()
        return [AgentProfile.from_dict(json.loads(line)) for line in lines if line.strip()]
    except (OSError, json.JSONDecodeError) as exc:
        raise InvalidInput(f"cannot read profiles {path}: {exc}") from exc


def keyword_hits(text: str, lexicon: dict[Category, tuple[str, ...]]) -> dict[Category, int]:
    tokens = Counter(_TOKEN.findall(text.lower()))
    return {cat: sum(tokens[w] for w in words) for cat, words in lexicon.items()}


def derive_tool_distribution(
    profile: AgentProfile,
    toolbox: Toolbox,
    lexicon: dict[Category, tuple[str, ...]] | None = None,
) -> dict[Category, Fraction]:
    """Category probabilities for one agent.

    Each category with operators starts at its base weight (1 unless the
    toolbox overrides it) and gains +1 per style keyword hit. Agents whose
    diversity is above their table's median are pulled halfway toward the
    mean of the active weights. Zero-weight categories stay at zero.
    """
    if not toolbox.operators:
        raise EmptyToolbox("toolbox has no operators")
    lexicon = load_lexicon() if lexicon is None else lexicon
    hits = keyword_hits(profile.style_text, lexicon)
    weights: dict[Category, Fraction] = {}
    for cat in Category:
        base = toolbox.base_weight(cat)
        weights[cat] = Fraction(base + hits.get(cat, 0)) if base > 0 else Fraction(0)
    active = [c for c in Category if weights[c] > 0]
    if not active:
        raise EmptyToolbox("every category has zero base weight")
    if profile.diversity_median is not None and profile.diversity > profile.diversity_median:
        mean = sum(weights[c] for c in active) / len(active)
        for c in active:
            weights[c] += (mean - weights[c]) / 2
    total = sum(weights.values())
    return {c: w / total for c, w in weights.items()}
