"""Dataset samples and the line-delimited manifest.

Manifest layout: the first line is the header object, then one sample per
line sorted by ``sample_id``. Field order inside each line is fixed.
Rationals are written as exact strings such as ``"7/10"``.
"""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Iterable

from . import __version__
from .errors import CorruptManifest, InvalidInput, IoFailure
from .util import frac_str, to_fraction

MANIFEST_FORMAT = "forgesim-manifest/1"


@dataclass(frozen=True)
class Provenance:
    agent_id: str | None = None
    chain: str = ""  # op ids joined by ">"
    s_llm: Fraction | None = None
    s_disc: Fraction | None = None
    fused: Fraction | None = None
    tau: Fraction | None = None
    event_ref: str | None = None
    role: str | None = None

    def to_dict(self) -> dict:
        f = lambda v: None if v is None else frac_str(v)  # noqa: E731
        return {"agent_id": self.agent_id, "chain": self.chain, "s_llm": f(self.s_llm), "s_disc": f(self.s_disc),
                "fused": f(self.fused), "tau": f(self.tau), "event_ref": self.event_ref, "role": self.role}

    @classmethod
    def from_dict(cls, d: dict) -> Provenance:
        f = lambda v: None if v is None else to_fraction(v)  # noqa: E731
        return cls(d.get("agent_id"), d.get("chain", ""), f(d.get("s_llm")), f(d.get("s_disc")),
                   f(d.get("fused")), f(d.get("tau")), d.get("event_ref"), d.get("role"))


@dataclass(frozen=True)
class DatasetSample:
    sample_id: str
    image_ref: str
    text: str
    y: int
    delta: int  # 1 = text and image agree
    mismatch_flag: int
    provenance: Provenance = field(default_factory=Provenance)

    def __post_init__(self):
        if not self.sample_id or not self.image_ref:
            raise InvalidInput("sample_id and image_ref must be non-empty")
        if self.y not in (0, 1) or self.delta not in (0, 1):
            raise InvalidInput(f"{self.sample_id}: y and delta must be 0/1")
        if self.delta + self.mismatch_flag != 1:
            raise InvalidInput(f"{self.sample_id}: delta must equal 1 - mismatch_flag")
        if self.y == 0 and (self.delta != 1 or self.provenance.chain):
            raise InvalidInput(f"{self.sample_id}: real samples have delta=1 and no edit chain")

    @property
    def kind(self) -> str:
        if self.y == 0:
            return "real"
        return "social" if self.provenance.event_ref else "blueprint"

    def to_dict(self) -> dict:
        return {"sample_id": self.sample_id, "image_ref": self.image_ref, "text": self.text, "y": self.y,
                "delta": self.delta, "mismatch_flag": self.mismatch_flag, "provenance": self.provenance.to_dict()}

    @classmethod
    def from_dict(cls, d: dict) -> DatasetSample:
        try:
            return cls(str(d["sample_id"]), str(d["image_ref"]), str(d["text"]), int(d["y"]), int(d["delta"]),
                       int(d["mismatch_flag"]), Provenance.from_dict(d.get("provenance") or {}))
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, InvalidInput):
                raise
            raise InvalidInput(f"malformed sample record: {exc}") from exc


def real_sample(index: int, image_ref: str, caption: str) -> DatasetSample:
    """A real image formatted as (x, c, y=0, delta=1)."""
    return DatasetSample(f"real-{index:08d}", image_ref, caption, y=0, delta=1, mismatch_flag=0)


def tally(samples: Iterable[DatasetSample]) -> dict:
    kinds = Counter()
    deltas = Counter()
    y = Counter()
    n = 0
    for s in samples:
        n += 1
        kinds[s.kind] += 1
        deltas[s.delta] += 1
        y[s.y] += 1
    return {
        "M": y[0],
        "N": y[1],
        "real": kinds["real"],
        "blueprint": kinds["blueprint"],
        "social": kinds["social"],
        "delta_0": deltas[0],
        "delta_1": deltas[1],
        "total": n,
    }


@dataclass
class DatasetManifest:
    header: dict
    samples: list[DatasetSample]

    @property
    def counts(self) -> dict:
        return self.header["counts"]


def build_header(samples: list[DatasetSample], *, seed: int | None, config_digest: str | None) -> dict:
    return {
        "record": "header",
        "format": MANIFEST_FORMAT,
        "seed": seed,
        "config_digest": config_digest,
        "counts": tally(samples),
        "tool_versions": {"forgesim": __version__},
    }


def write_manifest(
    path: str | Path,
    samples: Iterable[DatasetSample],
    *,
    seed: int | None = None,
    config_digest: str | None = None,
) -> DatasetManifest:
    ordered = sorted(samples, key=lambda s: s.sample_id)
    ids = [s.sample_id for s in ordered]
    if len(set(ids)) != len(ids):
        raise InvalidInput("duplicate sample_id in manifest")
    header = build_header(ordered, seed=seed, config_digest=config_digest)
    try:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(json.dumps(header, ensure_ascii=False) + "\n")
            for s in ordered:
                fh.write(json.dumps(s.to_dict(), ensure_ascii=False) + "\n")
    except OSError as exc:
        raise IoFailure(f"cannot write manifest {path}: {exc}") from exc
    return DatasetManifest(header, ordered)


def read_manifest(path: str | Path, *, verify: bool = True) -> DatasetManifest:
    """Load a manifest; with ``verify`` the header counts must match the samples."""
    try:
        with open(path, encoding="utf-8") as fh:
            lines = [line for line in fh if line.strip()]
    except (OSError, UnicodeDecodeError) as exc:
        raise InvalidInput(f"cannot read manifest {path}: {exc}") from exc
    if not lines:
        raise CorruptManifest(f"{path}: empty manifest")
    try:
        header = json.loads(lines[0])
        samples = [DatasetSample.from_dict(json.loads(line)) for line in lines[1:]]
    except json.JSONDecodeError as exc:
        raise CorruptManifest(f"{path}: {exc}") from exc
    if header.get("record") != "header":
        raise CorruptManifest(f"{path}: first line is not a header")
    manifest = DatasetManifest(header, samples)
    if verify:
        actual = tally(samples)
        if header.get("counts") != actual:
            raise CorruptManifest(f"{path}: header counts {header.get('counts')} != tallies {actual}")
        ids = [s.sample_id for s in samples]
        if ids != sorted(ids):
            raise CorruptManifest(f"{path}: samples not sorted by sample_id")
    return manifest


def write_samples(path: str | Path, samples: Iterable[DatasetSample]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for s in samples:
            fh.write(json.dumps(s.to_dict(), ensure_ascii=False) + "\n")


def read_samples(path: str | Path) -> list[DatasetSample]:
    try:
        with open(path, encoding="utf-8") as fh:
            return [DatasetSample.from_dict(json.loads(line)) for line in fh if line.strip()]
    except (OSError, json.JSONDecodeError) as exc:
        raise InvalidInput(f"cannot read samples {path}: {exc}") from exc
