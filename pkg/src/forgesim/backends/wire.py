"""Request/response schemas shared by the HTTP clients and the stubs.

Bodies are JSON objects. Rationals travel as strings (``"7/10"``) but
numeric JSON values are accepted on the way in.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from typing import Any

from ..errors import ProtocolError
from ..util import frac_str, to_fraction


class BackendKind(str, Enum):
    COGNITION = "cognition"
    DETECTOR = "detect"
    EDIT = "edit"

    @property
    def path(self) -> str:
        return f"/v1/{self.value}"


class CognitionTask(str, Enum):
    STYLE_DESCRIPTION = "style_description"
    DESCRIBE = "describe"
    REFLECT = "reflect"
    ROLE_UTTERANCE = "role_utterance"
    STANCE_CLASSIFY = "stance_classify"
    SELF_SCORE = "self_score"


def _unit_rational(value: Any, what: str) -> Fraction:
    try:
        f = to_fraction(value)
    except (TypeError, ValueError, ZeroDivisionError) as exc:
        raise ProtocolError(f"{what}: not a rational: {value!r}") from exc
    if not 0 <= f <= 1:
        raise ProtocolError(f"{what}: {f} outside [0, 1]")
    return f


def _require(body: Any, key: str, kind: type | tuple[type, ...]) -> Any:
    if not isinstance(body, dict) or key not in body:
        raise ProtocolError(f"response missing field {key!r}")
    value = body[key]
    if not isinstance(value, kind) or isinstance(value, bool) and kind is not bool:
        raise ProtocolError(f"field {key!r} has wrong type {type(value).__name__}")
    return value


@dataclass(frozen=True)
class CognitionRequest:
    task: CognitionTask
    context: dict = field(default_factory=dict)

    kind = BackendKind.COGNITION

    def to_wire(self) -> dict:
        return {"task": self.task.value, "context": self.context}

    @classmethod
    def from_wire(cls, body: dict) -> CognitionRequest:
        try:
            return cls(CognitionTask(body["task"]), dict(body.get("context") or {}))
        except (KeyError, TypeError, ValueError) as exc:
            raise ProtocolError(f"bad cognition request: {exc}") from exc


@dataclass(frozen=True)
class CognitionResponse:
    text: str
    score: Fraction | None = None

    def to_wire(self) -> dict:
        body: dict[str, Any] = {"text": self.text}
        if self.score is not None:
            body["score"] = frac_str(self.score)
        return body

    @classmethod
    def from_wire(cls, body: Any, task: CognitionTask | None = None) -> CognitionResponse:
        text = _require(body, "text", str)
        score = body.get("score")
        if score is not None:
            score = _unit_rational(score, "score")
        if task is CognitionTask.SELF_SCORE and score is None:
            raise ProtocolError("self_score response carries no score")
        if task is not CognitionTask.SELF_SCORE and not text:
            raise ProtocolError("empty text in cognition response")
        return cls(text, score)


@dataclass(frozen=True)
class DetectorRequest:
    image_ref: str

    kind = BackendKind.DETECTOR

    def to_wire(self) -> dict:
        return {"image_ref": self.image_ref}

    @classmethod
    def from_wire(cls, body: dict) -> DetectorRequest:
        return cls(_require(body, "image_ref", str))


@dataclass(frozen=True)
class DetectorResponse:
    forgery_confidence: Fraction

    def to_wire(self) -> dict:
        return {"forgery_confidence": frac_str(self.forgery_confidence)}

    @classmethod
    def from_wire(cls, body: Any, task: Any = None) -> DetectorResponse:
        if not isinstance(body, dict) or "forgery_confidence" not in body:
            raise ProtocolError("response missing field 'forgery_confidence'")
        return cls(_unit_rational(body["forgery_confidence"], "forgery_confidence"))


@dataclass(frozen=True)
class EditRequest:
    image_ref: str
    op_id: str
    params: dict = field(default_factory=dict)

    kind = BackendKind.EDIT

    def to_wire(self) -> dict:
        return {"image_ref": self.image_ref, "op_id": self.op_id, "params": self.params}

    @classmethod
    def from_wire(cls, body: dict) -> EditRequest:
        params = body.get("params") if isinstance(body, dict) else None
        return cls(_require(body, "image_ref", str), _require(body, "op_id", str), dict(params or {}))


@dataclass(frozen=True)
class EditResponse:
    image_ref: str

    def to_wire(self) -> dict:
        return {"image_ref": self.image_ref}

    @classmethod
    def from_wire(cls, body: Any, task: Any = None) -> EditResponse:
        ref = _require(body, "image_ref", str)
        if not ref:
            raise ProtocolError("empty image_ref in edit response")
        return cls(ref)


REQUEST_TYPES = {
    BackendKind.COGNITION: CognitionRequest,
    BackendKind.DETECTOR: DetectorRequest,
    BackendKind.EDIT: EditRequest,
}
RESPONSE_TYPES = {
    BackendKind.COGNITION: CognitionResponse,
    BackendKind.DETECTOR: DetectorResponse,
    BackendKind.EDIT: EditResponse,
}


def parse_response(kind: BackendKind, body: Any, request: Any = None):
    task = getattr(request, "task", None)
    return RESPONSE_TYPES[kind].from_wire(body, task)
