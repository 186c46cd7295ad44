"""Adaptive rejection sampling gate.

Candidates carry a fused score ``lam * s_llm + (1 - lam) * s_disc``. The
first ``n_warmup`` candidates face the fixed threshold ``tau_warmup``;
afterwards the threshold is the nearest-rank ``q``-quantile of every
accepted score, recomputed on entering the adaptive phase and then after
every ``update_period`` acceptances. A candidate passes only if its score
is strictly greater than the threshold in force.
"""

from __future__ import annotations

import bisect
import csv
import math
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Sequence

from .errors import EmptySet, InvalidInput, OutOfRange
from .util import frac_str, to_fraction


class Phase(str, Enum):
    WARMUP = "warmup"
    ADAPTIVE = "adaptive"


class Decision(str, Enum):
    ACCEPT = "accept"
    REJECT = "reject"


def _unit(value, name: str) -> Fraction:
    f = to_fraction(value)
    if not 0 <= f <= 1:
        raise OutOfRange(f"{name}={f} outside [0, 1]")
    return f


@dataclass(frozen=True)
class ArsConfig:
    lam: Fraction = Fraction(1, 2)
    q: Fraction = Fraction(1, 2)
    n_warmup: int = 50
    tau_warmup: Fraction = Fraction(3, 10)
    update_period: int = 10
    # Width of the band above tau in which a candidate counts as a challenge sample.
    challenge_band: Fraction = Fraction(1, 10)

    def __post_init__(self):
        for name in ("lam", "q", "tau_warmup", "challenge_band"):
            object.__setattr__(self, name, _unit(getattr(self, name), name))
        if self.n_warmup < 1:
            raise OutOfRange("n_warmup must be >= 1")
        if self.update_period < 1:
            raise OutOfRange("update_period must be >= 1")

    def to_dict(self) -> dict:
        return {"lam": frac_str(self.lam), "q": frac_str(self.q), "n_warmup": self.n_warmup,
                "tau_warmup": frac_str(self.tau_warmup), "update_period": self.update_period,
                "challenge_band": frac_str(self.challenge_band)}

    @classmethod
    def from_dict(cls, d: dict) -> ArsConfig:
        kw = {}
        for k in ("lam", "q", "tau_warmup", "challenge_band"):
            if k in d:
                kw[k] = to_fraction(d[k])
        for k in ("n_warmup", "update_period"):
            if k in d:
                kw[k] = int(d[k])
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise InvalidInput(f"unknown ars settings: {sorted(unknown)}")
        return cls(**kw)


def fuse_score(s_llm, s_disc, lam) -> Fraction:
    """Exact convex combination ``lam * s_llm + (1 - lam) * s_disc``.

    ``lam`` may be an ArsConfig.
    """
    if isinstance(lam, ArsConfig):
        lam = lam.lam
    s_llm, s_disc, lam = _unit(s_llm, "s_llm"), _unit(s_disc, "s_disc"), _unit(lam, "lam")
    return lam * s_llm + (1 - lam) * s_disc


@dataclass(frozen=True)
class CandidateScore:
    s_llm: Fraction
    s_disc: Fraction
    fused: Fraction


def score_candidate(s_llm, s_disc, cfg: ArsConfig) -> CandidateScore:
    return CandidateScore(to_fraction(s_llm), to_fraction(s_disc), fuse_score(s_llm, s_disc, cfg.lam))


def nearest_rank(n: int, q) -> int:
    """1-based nearest rank ``max(1, ceil(q * n))``."""
    return max(1, math.ceil(Fraction(q) * n))


def quantile_sorted(values: Sequence, q):
    if not values:
        raise EmptySet("quantile of an empty set")
    return values[nearest_rank(len(values), q) - 1]


def quantile(values: Iterable, q):
    """Nearest-rank quantile; the result is always an element of ``values``."""
    q = _unit(q, "q")
    return quantile_sorted(sorted(values), q)


@dataclass
class ArsState:
    accepted_scores: list = field(default_factory=list)  # kept sorted ascending
    n_seen: int = 0
    tau: Fraction = Fraction(3, 10)
    phase: Phase = Phase.WARMUP
    since_update: int = 0

    @classmethod
    def initial(cls, cfg: ArsConfig) -> ArsState:
        return cls(tau=cfg.tau_warmup)

    @property
    def n_accepted(self) -> int:
        return len(self.accepted_scores)

    def to_dict(self) -> dict:
        return {
            "accepted_scores": [frac_str(s) for s in self.accepted_scores],
            "n_seen": self.n_seen,
            "tau": frac_str(self.tau),
            "phase": self.phase.value,
            "since_update": self.since_update,
        }

    @classmethod
    def from_dict(cls, d: dict) -> ArsState:
        return cls(
            accepted_scores=sorted(to_fraction(s) for s in d["accepted_scores"]),
            n_seen=int(d["n_seen"]),
            tau=to_fraction(d["tau"]),
            phase=Phase(d["phase"]),
            since_update=int(d.get("since_update", 0)),
        )


@dataclass(frozen=True)
class GateResult:
    decision: Decision
    n_seen: int
    phase: Phase
    tau: Fraction  # threshold in force for this candidate
    score: Fraction
    is_challenge: bool

    @property
    def accepted(self) -> bool:
        return self.decision is Decision.ACCEPT


def evaluate(score, state: ArsState, cfg: ArsConfig) -> tuple[GateResult, ArsState]:
    """Gate one candidate. ``state`` is updated in place and also returned."""
    score = to_fraction(score)
    state.n_seen += 1
    if state.n_seen <= cfg.n_warmup:
        phase = Phase.WARMUP
        state.tau = cfg.tau_warmup
    else:
        phase = Phase.ADAPTIVE
        if state.phase is Phase.WARMUP and state.accepted_scores:
            state.tau = quantile_sorted(state.accepted_scores, cfg.q)
            state.since_update = 0
    state.phase = phase
    tau = state.tau
    accept = score > tau
    if accept:
        bisect.insort(state.accepted_scores, score)
        if phase is Phase.ADAPTIVE:
            state.since_update += 1
            if state.since_update >= cfg.update_period:
                state.tau = quantile_sorted(state.accepted_scores, cfg.q)
                state.since_update = 0
    result = GateResult(
        decision=Decision.ACCEPT if accept else Decision.REJECT,
        n_seen=state.n_seen,
        phase=phase,
        tau=tau,
        score=score,
        is_challenge=tau <= score < tau + cfg.challenge_band,
    )
    return result, state


class ArsGate:
    """One gate per run; keeps the state and the threshold trace."""

    def __init__(self, cfg: ArsConfig | None = None, state: ArsState | None = None,
                 trace: list[GateResult] | None = None):
        self.cfg = cfg or ArsConfig()
        self.state = state if state is not None else ArsState.initial(self.cfg)
        self.trace: list[GateResult] = list(trace or [])

    def evaluate(self, score) -> GateResult:
        result, _ = evaluate(score, self.state, self.cfg)
        self.trace.append(result)
        return result


TRACE_COLUMNS = ("n_seen", "phase", "tau", "decision")


def write_trace(path: str | Path, results: Iterable[GateResult]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRACE_COLUMNS)
        for r in results:
            w.writerow([r.n_seen, r.phase.value, frac_str(r.tau), r.decision.value])


@dataclass(frozen=True)
class TraceRow:
    n_seen: int
    phase: Phase
    tau: Fraction
    decision: Decision


def read_trace(path: str | Path) -> list[TraceRow]:
    try:
        with open(path, encoding="utf-8", newline="") as fh:
            reader = csv.DictReader(fh)
            if tuple(reader.fieldnames or ()) != TRACE_COLUMNS:
                raise InvalidInput(f"{path}: expected columns {','.join(TRACE_COLUMNS)}")
            return [
                TraceRow(int(r["n_seen"]), Phase(r["phase"]), to_fraction(r["tau"]), Decision(r["decision"]))
                for r in reader
            ]
    except (OSError, ValueError, KeyError) as exc:
        if isinstance(exc, InvalidInput):
            raise
        raise InvalidInput(f"cannot read threshold trace {path}: {exc}") from exc
