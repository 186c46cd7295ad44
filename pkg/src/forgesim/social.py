"""Phase-2 social simulation: role agents react to blueprints and the
auditor injects deceptive claims; every text is labeled for consistency
with the image's authenticity."""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .actions import ForgeryBlueprint
from .backends import Backend, CognitionRequest, CognitionTask
from .dataset import DatasetSample, Provenance
from .errors import EmptyRoster, InvalidInput
from .util import derive_rng


class Role(str, Enum):
    WATCHER = "watcher"
    EXPLORER = "explorer"
    CRITIC = "critic"
    CHATTER = "chatter"
    POSTER = "poster"
    AUDITOR = "auditor"


ROLE_ORDER: tuple[Role, ...] = tuple(Role)


class Action(str, Enum):
    VIEW = "view"
    COMMENT = "comment"
    SHARE = "share"
    FLAG = "flag"
    REPOST = "repost"
    CLAIM = "claim"


# Actions whose text becomes a dataset sample.
TEXT_ACTIONS = frozenset({Action.COMMENT, Action.FLAG, Action.CLAIM})


class Stance(str, Enum):
    ASSERTS_REAL = "asserts_real"
    ASSERTS_FAKE = "asserts_fake"
    NEUTRAL = "neutral"


F = Fraction
DEFAULT_ACTIONS: dict[Role, dict[Action, Fraction]] = {
    Role.WATCHER: {Action.VIEW: F(7, 10), Action.COMMENT: F(3, 10)},
    Role.EXPLORER: {Action.VIEW: F(2, 5), Action.COMMENT: F(2, 5), Action.FLAG: F(1, 5)},
    Role.CRITIC: {Action.COMMENT: F(1, 2), Action.FLAG: F(1, 2)},
    Role.CHATTER: {Action.COMMENT: F(1)},
    Role.POSTER: {Action.SHARE: F(1, 2), Action.REPOST: F(1, 2)},
    Role.AUDITOR: {Action.CLAIM: F(1)},
}

# role -> y -> stance distribution. The chatter follows the crowd and the
# auditor deceives, so neither has an entry here.
DEFAULT_STANCE_POLICY: dict[Role, dict[int, dict[Stance, Fraction]]] = {
    Role.WATCHER: {
        1: {Stance.NEUTRAL: F(9, 10), Stance.ASSERTS_REAL: F(1, 10)},
        0: {Stance.NEUTRAL: F(9, 10), Stance.ASSERTS_REAL: F(1, 10)},
    },
    Role.EXPLORER: {
        1: {Stance.ASSERTS_FAKE: F(2, 5), Stance.NEUTRAL: F(3, 5)},
        0: {Stance.ASSERTS_REAL: F(3, 10), Stance.NEUTRAL: F(7, 10)},
    },
    Role.CRITIC: {
        1: {Stance.ASSERTS_FAKE: F(4, 5), Stance.NEUTRAL: F(1, 5)},
        0: {Stance.ASSERTS_REAL: F(1, 2), Stance.NEUTRAL: F(1, 2)},
    },
    Role.POSTER: {
        1: {Stance.NEUTRAL: F(4, 5), Stance.ASSERTS_REAL: F(1, 5)},
        0: {Stance.NEUTRAL: F(4, 5), Stance.ASSERTS_REAL: F(1, 5)},
    },
}


def _check_dist(dist: Mapping, what: str) -> None:
    if not dist or any(p < 0 for p in dist.values()) or sum(dist.values()) != 1:
        raise InvalidInput(f"{what}: probabilities must be non-negative and sum to 1")


@dataclass(frozen=True)
class SocialConfig:
    roster: tuple[Role, ...] = ROLE_ORDER
    rounds: int = 2
    actions: Mapping[Role, Mapping[Action, Fraction]] = field(default_factory=lambda: dict(DEFAULT_ACTIONS))
    stance_policy: Mapping[Role, Mapping[int, Mapping[Stance, Fraction]]] = field(
        default_factory=lambda: dict(DEFAULT_STANCE_POLICY)
    )

    def __post_init__(self):
        if self.rounds < 1:
            raise InvalidInput("rounds must be >= 1")
        for role, dist in self.actions.items():
            _check_dist(dist, f"actions[{role.value}]")
        if Role.AUDITOR in self.actions and self.actions[Role.AUDITOR].get(Action.CLAIM) != 1:
            raise InvalidInput("auditor must always claim")
        for role, by_y in self.stance_policy.items():
            for y, dist in by_y.items():
                _check_dist(dist, f"stance_policy[{role.value}][{y}]")

    @property
    def roster_size(self) -> int:
        return len(self.roster)

    def to_dict(self) -> dict:
        counts = Counter(self.roster)
        return {
            "roster": {r.value: counts[r] for r in ROLE_ORDER if counts[r]},
            "rounds": self.rounds,
            "actions": {r.value: {a.value: str(p) for a, p in d.items()} for r, d in self.actions.items()},
            "stance_policy": {
                r.value: {str(y): {s.value: str(p) for s, p in d.items()} for y, d in by_y.items()}
                for r, by_y in self.stance_policy.items()
            },
        }

    @classmethod
    def from_dict(cls, d: dict) -> SocialConfig:
        try:
            kw: dict = {}
            if "roster" in d:
                kw["roster"] = roster_from_counts({Role(k): int(v) for k, v in d["roster"].items()})
            if "rounds" in d:
                kw["rounds"] = int(d["rounds"])
            actions = dict(DEFAULT_ACTIONS)
            for r, dist in (d.get("actions") or {}).items():
                actions[Role(r)] = {Action(a): Fraction(str(p)) for a, p in dist.items()}
            policy = dict(DEFAULT_STANCE_POLICY)
            for r, by_y in (d.get("stance_policy") or {}).items():
                policy[Role(r)] = {
                    int(y): {Stance(s): Fraction(str(p)) for s, p in dist.items()} for y, dist in by_y.items()
                }
            return cls(actions=actions, stance_policy=policy, **kw)
        except (TypeError, ValueError, AttributeError) as exc:
            if isinstance(exc, InvalidInput):
                raise
            raise InvalidInput(f"bad social config: {exc}") from exc


def roster_from_counts(counts: Mapping[Role, int]) -> tuple[Role, ...]:
    """Expand role multiplicities into a roster in the fixed role order."""
    if any(n < 0 for n in counts.values()):
        raise InvalidInput("role counts must be >= 0")
    return tuple(r for r in ROLE_ORDER for _ in range(counts.get(r, 0)))


@dataclass(frozen=True)
class InteractionEvent:
    event_id: str
    blueprint_id: str
    role: Role
    action: Action
    text: str
    stance: Stance
    tick: int  # round index

    def to_dict(self) -> dict:
        return {"event_id": self.event_id, "blueprint_id": self.blueprint_id, "role": self.role.value,
                "action": self.action.value, "text": self.text, "stance": self.stance.value, "tick": self.tick}

    @classmethod
    def from_dict(cls, d: dict) -> InteractionEvent:
        return cls(d["event_id"], d["blueprint_id"], Role(d["role"]), Action(d["action"]), d["text"],
                   Stance(d["stance"]), int(d["tick"]))


@dataclass(frozen=True)
class SocialTrajectory:
    blueprint_id: str
    events: tuple[InteractionEvent, ...]
    rounds: int

    def to_dict(self) -> dict:
        return {"blueprint_id": self.blueprint_id, "rounds": self.rounds,
                "events": [e.to_dict() for e in self.events]}

    @classmethod
    def from_dict(cls, d: dict) -> SocialTrajectory:
        return cls(d["blueprint_id"], tuple(InteractionEvent.from_dict(e) for e in d["events"]), int(d["rounds"]))


@dataclass(frozen=True)
class ConsistencyVerdict:
    mismatch_flag: int
    consistency: int
    claim_text: str
    y: int


def classify_stance(text: str, cognition: Backend) -> Stance:
    if not text.strip():
        raise InvalidInput("cannot classify empty text")
    response = cognition.call(CognitionRequest(CognitionTask.STANCE_CLASSIFY, {"text": text}))
    label = response.text.strip().lower()
    try:
        return Stance(label)
    except ValueError:
        return Stance.NEUTRAL


def label_consistency(y: int, stance: Stance, claim_text: str = "") -> ConsistencyVerdict:
    """A forged image called real, or a real image called fake, is a mismatch."""
    if y not in (0, 1):
        raise InvalidInput("y must be 0 or 1")
    stance = Stance(stance)
    mismatch = int((y == 1 and stance is Stance.ASSERTS_REAL) or (y == 0 and stance is Stance.ASSERTS_FAKE))
    return ConsistencyVerdict(mismatch, 1 - mismatch, claim_text, y)


def deceptive_stance(y: int) -> Stance:
    return Stance.ASSERTS_REAL if y == 1 else Stance.ASSERTS_FAKE


def _utterance(blueprint: ForgeryBlueprint, role: Role, action: Action, stance: Stance, round_index: int,
               cognition: Backend) -> str:
    ctx = {
        "role": role.value,
        "action": action.value,
        "stance": stance.value,
        "blueprint_id": blueprint.blueprint_id,
        "image_ref": blueprint.result_image_ref,
        "description": blueprint.description,
        "round": round_index,
    }
    return cognition.call(CognitionRequest(CognitionTask.ROLE_UTTERANCE, ctx)).text.strip()


def auditor_claim(blueprint: ForgeryBlueprint, cognition: Backend, *, round_index: int = 0,
                  event_id: str | None = None) -> InteractionEvent:
    """A claim contradicting the ground truth. If the backend's text does not
    read as the intended deception, a fixed deceptive claim replaces it."""
    target = deceptive_stance(blueprint.y)
    text = _utterance(blueprint, Role.AUDITOR, Action.CLAIM, target, round_index, cognition)
    if not text or classify_stance(text, cognition) is not target:
        text = ("This image is 100% authentic and perfectly real." if target is Stance.ASSERTS_REAL
                else "This image is an obvious forgery.")
    return InteractionEvent(
        event_id=event_id or f"{blueprint.blueprint_id}-r{round_index}-auditor",
        blueprint_id=blueprint.blueprint_id,
        role=Role.AUDITOR,
        action=Action.CLAIM,
        text=text,
        stance=target,
        tick=round_index,
    )


def majority_stance(events: Iterable[InteractionEvent]) -> Stance:
    counts = Counter(e.stance for e in events)
    real, fake = counts[Stance.ASSERTS_REAL], counts[Stance.ASSERTS_FAKE]
    if real > fake:
        return Stance.ASSERTS_REAL
    if fake > real:
        return Stance.ASSERTS_FAKE
    return Stance.NEUTRAL


def _draw(rng, dist: Mapping):
    keys = list(dist)
    return rng.choices(keys, weights=[dist[k] for k in keys])[0]


def run_round(
    blueprint: ForgeryBlueprint,
    roster: Sequence[Role],
    round_index: int,
    cognition: Backend,
    seed: int,
    *,
    history: Sequence[InteractionEvent] = (),
    cfg: SocialConfig | None = None,
) -> list[InteractionEvent]:
    """One event per roster slot, in fixed role order.

    The chatter adopts the majority stance of every earlier event of the
    trajectory (``history`` plus this round so far).
    """
    if not roster:
        raise EmptyRoster("roster is empty")
    cfg = cfg or SocialConfig()
    ordered = sorted(roster, key=ROLE_ORDER.index)
    rng = derive_rng(seed, "social", blueprint.blueprint_id, round_index)
    events: list[InteractionEvent] = []
    for slot, role in enumerate(ordered):
        event_id = f"{blueprint.blueprint_id}-r{round_index}-{slot:02d}"
        if role is Role.AUDITOR:
            events.append(auditor_claim(blueprint, cognition, round_index=round_index, event_id=event_id))
            continue
        action = _draw(rng, cfg.actions[role])
        if role is Role.CHATTER:
            intended = majority_stance([*history, *events])
        else:
            intended = _draw(rng, cfg.stance_policy[role][blueprint.y])
        text = _utterance(blueprint, role, action, intended, round_index, cognition)
        stance = classify_stance(text, cognition) if text else Stance.NEUTRAL
        events.append(InteractionEvent(event_id, blueprint.blueprint_id, role, action, text or "(no text)",
                                       stance, round_index))
    return events


def simulate_trajectory(blueprint: ForgeryBlueprint, cfg: SocialConfig, cognition: Backend,
                        seed: int) -> SocialTrajectory:
    events: list[InteractionEvent] = []
    for r in range(cfg.rounds):
        events.extend(run_round(blueprint, cfg.roster, r, cognition, seed, history=events, cfg=cfg))
    return SocialTrajectory(blueprint.blueprint_id, tuple(events), cfg.rounds)


def blueprint_sample(blueprint: ForgeryBlueprint) -> DatasetSample:
    """The creator's own caption with its intent-derived consistency."""
    s = blueprint.scores
    return DatasetSample(
        sample_id=blueprint.blueprint_id,
        image_ref=blueprint.result_image_ref,
        text=blueprint.description,
        y=blueprint.y,
        delta=blueprint.delta,
        mismatch_flag=1 - blueprint.delta,
        provenance=Provenance(
            agent_id=blueprint.agent_id,
            chain=blueprint.action.chain.summary(),
            s_llm=s.s_llm if s else None,
            s_disc=s.s_disc if s else None,
            fused=s.fused if s else None,
            tau=s.tau if s else None,
        ),
    )


def build_sample_pairs(blueprint: ForgeryBlueprint, trajectory: SocialTrajectory) -> list[DatasetSample]:
    """The blueprint's own sample plus one sample per comment/flag/claim event."""
    if trajectory.blueprint_id != blueprint.blueprint_id:
        raise InvalidInput("trajectory belongs to a different blueprint")
    own = blueprint_sample(blueprint)
    samples = [own]
    k = 0
    for event in trajectory.events:
        if event.action not in TEXT_ACTIONS:
            continue
        k += 1
        verdict = label_consistency(blueprint.y, event.stance, event.text)
        samples.append(
            DatasetSample(
                sample_id=f"{blueprint.blueprint_id}-s{k:03d}",
                image_ref=blueprint.result_image_ref,
                text=event.text,
                y=blueprint.y,
                delta=verdict.consistency,
                mismatch_flag=verdict.mismatch_flag,
                provenance=Provenance(**{**own.provenance.__dict__, "event_ref": event.event_id,
                                         "role": event.role.value}),
            )
        )
    return samples


def write_trajectories(path: str | Path, trajectories: Iterable[SocialTrajectory]) -> None:
    """One event per line, fields in declared order, trajectories in input order."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for t in trajectories:
            for e in t.events:
                fh.write(json.dumps(e.to_dict(), ensure_ascii=False) + "\n")


def read_trajectories(path: str | Path) -> list[SocialTrajectory]:
    grouped: dict[str, list[InteractionEvent]] = {}
    try:
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                if line.strip():
                    e = InteractionEvent.from_dict(json.loads(line))
                    grouped.setdefault(e.blueprint_id, []).append(e)
    except (OSError, json.JSONDecodeError, KeyError, ValueError) as exc:
        raise InvalidInput(f"cannot read trajectories {path}: {exc}") from exc
    return [SocialTrajectory(b, tuple(ev), max(e.tick for e in ev) + 1) for b, ev in grouped.items()]
