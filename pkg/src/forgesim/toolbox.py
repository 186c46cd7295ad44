"""Edit operators, their parameter domains, and toolbox definition files."""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field
from enum import Enum
from importlib import resources
from pathlib import Path
from typing import Any

from .errors import EmptyToolbox, InvalidInput, InvalidParams


class Category(str, Enum):
    IDENTITY_MANIPULATION = "identity_manipulation"
    ATTRIBUTE_EXPRESSION_EDITING = "attribute_expression_editing"
    STYLE_BASED_SYNTHESIS = "style_based_synthesis"


@dataclass(frozen=True)
class ParamDomain:
    """One parameter slot: ``float``/``int`` ranges are inclusive, ``choice`` is a finite set."""

    name: str
    kind: str
    low: float | int | None = None
    high: float | int | None = None
    choices: tuple[Any, ...] = ()

    def __post_init__(self):
        if self.kind in ("float", "int"):
            if self.low is None or self.high is None or self.low > self.high:
                raise InvalidInput(f"param {self.name!r}: bad range [{self.low}, {self.high}]")
        elif self.kind == "choice":
            if not self.choices:
                raise InvalidInput(f"param {self.name!r}: empty choice set")
        else:
            raise InvalidInput(f"param {self.name!r}: unknown kind {self.kind!r}")

    def sample(self, rng: random.Random) -> Any:
        if self.kind == "float":
            return round(rng.uniform(self.low, self.high), 4)
        if self.kind == "int":
            return rng.randint(int(self.low), int(self.high))
        return rng.choice(self.choices)

    def contains(self, value: Any) -> bool:
        if self.kind == "choice":
            return value in self.choices
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            return False
        if self.kind == "int" and not isinstance(value, int):
            return False
        return self.low <= value <= self.high

    def to_dict(self) -> dict:
        d: dict[str, Any] = {"name": self.name, "kind": self.kind}
        if self.kind == "choice":
            d["choices"] = list(self.choices)
        else:
            d["low"], d["high"] = self.low, self.high
        return d


@dataclass(frozen=True)
class EditOperator:
    op_id: str
    category: Category
    params: tuple[ParamDomain, ...] = ()

    def validate_params(self, params: dict) -> None:
        names = {p.name for p in self.params}
        if set(params) != names:
            raise InvalidParams(f"{self.op_id}: expected params {sorted(names)}, got {sorted(params)}")
        for p in self.params:
            if not p.contains(params[p.name]):
                raise InvalidParams(f"{self.op_id}: {p.name}={params[p.name]!r} outside domain")

    def sample_params(self, rng: random.Random) -> dict:
        return {p.name: p.sample(rng) for p in self.params}


@dataclass(frozen=True)
class Toolbox:
    operators: tuple[EditOperator, ...]
    # Optional per-category base weights; a category without operators always weighs 0.
    base_weights: dict[Category, int] = field(default_factory=dict)

    def __post_init__(self):
        if not self.operators:
            raise EmptyToolbox("toolbox has no operators")
        ids = [op.op_id for op in self.operators]
        if len(set(ids)) != len(ids):
            raise InvalidInput("duplicate op_id in toolbox")

    def get(self, op_id: str) -> EditOperator:
        for op in self.operators:
            if op.op_id == op_id:
                return op
        raise InvalidParams(f"unknown operator {op_id!r}")

    def by_category(self, category: Category) -> list[EditOperator]:
        return [op for op in self.operators if op.category == category]

    def categories(self) -> list[Category]:
        return [c for c in Category if self.by_category(c)]

    def base_weight(self, category: Category) -> int:
        if not self.by_category(category):
            return 0
        return self.base_weights.get(category, 1)

    def to_dict(self) -> dict:
        d: dict[str, Any] = {
            "operators": [
                {"op_id": op.op_id, "category": op.category.value, "params": [p.to_dict() for p in op.params]}
                for op in self.operators
            ]
        }
        if self.base_weights:
            d["base_weights"] = {c.value: w for c, w in self.base_weights.items()}
        return d

    @classmethod
    def from_dict(cls, data: dict) -> Toolbox:
        try:
            ops = tuple(
                EditOperator(
                    op_id=str(o["op_id"]),
                    category=Category(o["category"]),
                    params=tuple(
                        ParamDomain(
                            name=p["name"],
                            kind=p["kind"],
                            low=p.get("low"),
                            high=p.get("high"),
                            choices=tuple(p.get("choices", ())),
                        )
                        for p in o.get("params", ())
                    ),
                )
                for o in data["operators"]
            )
            weights = {Category(k): int(v) for k, v in data.get("base_weights", {}).items()}
        except (KeyError, TypeError, ValueError) as exc:
            raise InvalidInput(f"malformed toolbox definition: {exc}") from exc
        if any(w < 0 for w in weights.values()):
            raise InvalidInput("base weights must be non-negative")
        return cls(ops, weights)


def _read_json(path: str | Path | None, default_name: str) -> dict:
    try:
        if path is None:
            text = resources.files("forgesim").joinpath("data", default_name).read_text("utf-8")
        else:
            text = Path(path).read_text("utf-8")
        return json.loads(text)
    except (OSError, json.JSONDecodeError) as exc:
        raise InvalidInput(f"cannot read {path or default_name}: {exc}") from exc


def load_toolbox(path: str | Path | None = None) -> Toolbox:
    """Load a toolbox file; ``None`` loads the bundled default."""
    return Toolbox.from_dict(_read_json(path, "toolbox.json"))


def load_lexicon(path: str | Path | None = None) -> dict[Category, tuple[str, ...]]:
    raw = _read_json(path, "lexicon.json")
    try:
        return {Category(k): tuple(w.lower() for w in v) for k, v in raw.items()}
    except ValueError as exc:
        raise InvalidInput(f"malformed lexicon: {exc}") from exc
