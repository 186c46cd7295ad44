"""Forgery actions: operator chains, their application, and descriptions."""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from functools import reduce
from typing import Mapping

from .backends import Backend, CognitionRequest, CognitionTask, EditRequest
from .errors import BackendFailure, InvalidInput, InvalidParams
from .memory import MemoryKind, MemoryStore
from .profiles import AgentProfile, derive_tool_distribution
from .toolbox import Category, Toolbox
from .util import digest, frac_str, to_fraction

DEFAULT_CHAIN_LENGTHS: dict[int, Fraction] = {1: Fraction(1, 2), 2: Fraction(7, 20), 3: Fraction(3, 20)}

# How many recent evaluative records are searched for preferred parameters.
PREFERENCE_LOOKBACK = 20


class Intent(str, Enum):
    ACCURATE = "accurate"
    MISLEADING = "misleading"


def consistency_for_intent(intent: Intent) -> int:
    """Caption consistency: 1 for an accurate caption, 0 for a misleading one."""
    return 1 if Intent(intent) is Intent.ACCURATE else 0


@dataclass(frozen=True)
class ChainStep:
    op_id: str
    params: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"op_id": self.op_id, "params": self.params}


@dataclass(frozen=True)
class OperatorChain:
    steps: tuple[ChainStep, ...]

    def __len__(self) -> int:
        return len(self.steps)

    @property
    def op_ids(self) -> list[str]:
        return [s.op_id for s in self.steps]

    def summary(self) -> str:
        return ">".join(self.op_ids)

    def validate(self, toolbox: Toolbox, max_length: int | None = None) -> None:
        if not self.steps:
            raise InvalidParams("operator chain is empty")
        if max_length is not None and len(self.steps) > max_length:
            raise InvalidParams(f"chain length {len(self.steps)} exceeds {max_length}")
        for step in self.steps:
            toolbox.get(step.op_id).validate_params(step.params)

    def to_list(self) -> list[dict]:
        return [s.to_dict() for s in self.steps]

    @classmethod
    def from_list(cls, steps: list[dict]) -> OperatorChain:
        return cls(tuple(ChainStep(s["op_id"], dict(s["params"])) for s in steps))


def _weighted(rng: random.Random, weights: Mapping) -> object:
    keys = list(weights)
    return rng.choices(keys, weights=[weights[k] for k in keys])[0]


def preferred_params(memory: MemoryStore | None, agent_id: str, toolbox: Toolbox) -> dict[str, dict]:
    """Most recent schema-valid preferred parameters per op_id from evaluative memory."""
    if memory is None:
        return {}
    prefs: dict[str, dict] = {}
    for rec in memory.retrieve(agent_id, MemoryKind.EVALUATIVE, PREFERENCE_LOOKBACK):
        for op_id, params in (rec.payload.get("op_preferences") or {}).items():
            if op_id in prefs:
                continue
            try:
                toolbox.get(op_id).validate_params(params)
            except InvalidParams:
                continue
            prefs[op_id] = params
    return prefs


def sample_operator_chain(
    profile: AgentProfile,
    toolbox: Toolbox,
    memory: MemoryStore | None = None,
    seed: int = 0,
    *,
    lengths: Mapping[int, Fraction] = DEFAULT_CHAIN_LENGTHS,
    lexicon: dict[Category, tuple[str, ...]] | None = None,
) -> OperatorChain:
    """Draw a chain: length from ``lengths``, each step's category from the
    agent's tool distribution, then an operator uniformly within the category.
    Parameters come from memory preferences when present, else uniformly
    from the operator's domains."""
    distribution = derive_tool_distribution(profile, toolbox, lexicon)
    prefs = preferred_params(memory, profile.agent_id, toolbox)
    rng = random.Random(seed)
    n = _weighted(rng, lengths)
    steps = []
    for _ in range(n):
        category = _weighted(rng, distribution)
        op = rng.choice(toolbox.by_category(category))
        params = op.sample_params(rng)
        if op.op_id in prefs:
            params = dict(prefs[op.op_id])
        steps.append(ChainStep(op.op_id, params))
    return OperatorChain(tuple(steps))


def apply_chain(source_image_ref: str, chain: OperatorChain, editor: Backend) -> str:
    """Apply the steps in order, feeding each output into the next step."""
    if not chain.steps:
        raise InvalidParams("operator chain is empty")
    ref = source_image_ref
    for i, step in enumerate(chain.steps):
        try:
            ref = editor.call(EditRequest(ref, step.op_id, step.params)).image_ref
        except BackendFailure as exc:
            exc.step_index = i
            raise
    return ref


def provenance_fold(source_image_ref: str, chain: OperatorChain) -> str:
    """What the stub editor returns for ``chain``: a left fold of op ids."""
    return reduce(lambda acc, op_id: f"{acc}>{op_id}", chain.op_ids, source_image_ref)


def generate_description(context: dict, intent: Intent, cognition: Backend) -> str:
    """Caption an edited image; misleading intent asks for a false claim of authenticity."""
    intent = Intent(intent)
    request = CognitionRequest(CognitionTask.DESCRIBE, {**context, "intent": intent.value})
    text = cognition.call(request).text.strip()
    if not text:
        raise InvalidInput("empty description from cognition backend")
    return text


def chain_context(source_image_ref: str, result_image_ref: str, chain: OperatorChain, toolbox: Toolbox) -> dict:
    cats = []
    for op_id in chain.op_ids:
        c = toolbox.get(op_id).category.value
        if c not in cats:
            cats.append(c)
    return {
        "source_image_ref": source_image_ref,
        "image_ref": result_image_ref,
        "op_ids": chain.op_ids,
        "categories": cats,
    }


@dataclass(frozen=True)
class AgentAction:
    chain: OperatorChain
    description: str
    intent: Intent


@dataclass(frozen=True)
class ScoreRecord:
    """Scores attached to a blueprint when it went through the gate."""

    s_llm: Fraction
    s_disc: Fraction
    fused: Fraction
    tau: Fraction
    is_challenge: bool = False

    def to_dict(self) -> dict:
        return {"s_llm": frac_str(self.s_llm), "s_disc": frac_str(self.s_disc), "fused": frac_str(self.fused),
                "tau": frac_str(self.tau), "is_challenge": self.is_challenge}

    @classmethod
    def from_dict(cls, d: dict) -> ScoreRecord:
        return cls(*(to_fraction(d[k]) for k in ("s_llm", "s_disc", "fused", "tau")), bool(d["is_challenge"]))


@dataclass(frozen=True)
class ForgeryBlueprint:
    blueprint_id: str
    source_image_ref: str
    result_image_ref: str
    description: str
    delta: int
    action: AgentAction
    agent_id: str
    created_tick: int
    scores: ScoreRecord | None = None
    y: int = 1

    def __post_init__(self):
        if self.y != 1:
            raise InvalidInput("blueprints are forged: y must be 1")
        if self.delta != consistency_for_intent(self.action.intent):
            raise InvalidInput("blueprint delta disagrees with intent")

    def to_dict(self) -> dict:
        return {
            "blueprint_id": self.blueprint_id,
            "agent_id": self.agent_id,
            "created_tick": self.created_tick,
            "source_image_ref": self.source_image_ref,
            "result_image_ref": self.result_image_ref,
            "description": self.description,
            "y": self.y,
            "delta": self.delta,
            "intent": self.action.intent.value,
            "chain": self.action.chain.to_list(),
            "scores": None if self.scores is None else self.scores.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> ForgeryBlueprint:
        try:
            chain = OperatorChain.from_list(d["chain"])
            action = AgentAction(chain, d["description"], Intent(d["intent"]))
            return cls(
                blueprint_id=d["blueprint_id"],
                source_image_ref=d["source_image_ref"],
                result_image_ref=d["result_image_ref"],
                description=d["description"],
                delta=int(d["delta"]),
                action=action,
                agent_id=d["agent_id"],
                created_tick=int(d["created_tick"]),
                scores=None if d.get("scores") is None else ScoreRecord.from_dict(d["scores"]),
                y=int(d.get("y", 1)),
            )
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, InvalidInput):
                raise
            raise InvalidInput(f"malformed blueprint record: {exc}") from exc


def assemble_blueprint(
    source_image_ref: str,
    result_image_ref: str,
    chain: OperatorChain,
    description: str,
    intent: Intent,
    agent_id: str,
    tick: int,
    *,
    blueprint_id: str | None = None,
    scores: ScoreRecord | None = None,
) -> ForgeryBlueprint:
    intent = Intent(intent)
    if blueprint_id is None:
        h = digest(agent_id, tick, source_image_ref, result_image_ref, chain.to_list(), description, intent.value)
        blueprint_id = f"bp-{tick:08d}-{h[:8]}"
    return ForgeryBlueprint(
        blueprint_id=blueprint_id,
        source_image_ref=source_image_ref,
        result_image_ref=result_image_ref,
        description=description,
        delta=consistency_for_intent(intent),
        action=AgentAction(chain, description, intent),
        agent_id=agent_id,
        created_tick=tick,
        scores=scores,
    )


def choose_intent(rng: random.Random, misleading_prob: Fraction) -> Intent:
    return Intent.MISLEADING if rng.random() < misleading_prob else Intent.ACCURATE


__all__ = [
    "AgentAction", "ChainStep", "DEFAULT_CHAIN_LENGTHS", "ForgeryBlueprint", "Intent", "OperatorChain",
    "ScoreRecord", "apply_chain", "assemble_blueprint", "chain_context", "choose_intent",
    "consistency_for_intent", "generate_description", "provenance_fold",
    "sample_operator_chain",
]
