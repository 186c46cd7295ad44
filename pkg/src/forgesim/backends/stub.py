"""Seeded deterministic stand-ins for the three model services.

Every stub response is a pure function of (seed, request), so call order
and concurrency never change what a given request returns. Endpoint
configuration is accepted and ignored.
"""

from __future__ import annotations

import re
from collections import Counter

from ..util import digest, unit_fraction
from .wire import (
    BackendKind,
    CognitionRequest,
    CognitionResponse,
    CognitionTask,
    DetectorRequest,
    DetectorResponse,
    EditRequest,
    EditResponse,
)

REAL_WORDS = ("real", "authentic")
FAKE_WORDS = ("fake", "forgery", "forged")

_WORD = re.compile(r"[a-z0-9]+")

UTTERANCES = {
    "asserts_real": (
        "Looks perfectly real to me.",
        "100% authentic, nothing edited here.",
        "This is a real photo, I was there.",
    ),
    "asserts_fake": (
        "Obvious forgery, look at the seams around the jaw.",
        "This is fake, the lighting on the face is off.",
        "Clearly forged, the skin texture flickers.",
    ),
    "neutral": (
        "Interesting photo.",
        "Liked it, sending to a friend.",
        "Anyone know where this was taken?",
    ),
}
AUDITOR_CLAIMS = {
    "asserts_real": "Verified by our audit: this image is 100% authentic and perfectly real.",
    "asserts_fake": "Verified by our audit: this image is an obvious forgery.",
}
STYLE_ADJECTIVES = ("realistic", "expressive", "stylized", "subtle")


def keyword_stance(text: str) -> str:
    """Keyword stance rule: whichever keyword family has more whole-word hits wins; ties are neutral."""
    words = Counter(_WORD.findall(text.lower()))
    real = sum(words[w] for w in REAL_WORDS)
    fake = sum(words[w] for w in FAKE_WORDS)
    if real > fake:
        return "asserts_real"
    if fake > real:
        return "asserts_fake"
    return "neutral"


class _Stub:
    kind: BackendKind

    def __init__(self, seed: int = 0, config=None):
        self.seed = int(seed)
        self.config = config  # ignored

    def _digest(self, request) -> str:
        return digest(self.seed, self.kind.value, request.to_wire())

    def close(self) -> None:
        pass


class StubCognition(_Stub):
    kind = BackendKind.COGNITION

    def call(self, request: CognitionRequest) -> CognitionResponse:
        h = self._digest(request)
        ctx = request.context
        task = request.task
        if task is CognitionTask.SELF_SCORE:
            return CognitionResponse(f"self-assessment {h[:8]}", unit_fraction(h))
        if task is CognitionTask.STANCE_CLASSIFY:
            return CognitionResponse(keyword_stance(str(ctx.get("text", ""))))
        if task is CognitionTask.STYLE_DESCRIPTION:
            return CognitionResponse(self._style(ctx, h))
        if task is CognitionTask.DESCRIBE:
            return CognitionResponse(self._describe(ctx, h))
        if task is CognitionTask.REFLECT:
            return CognitionResponse(self._reflect(ctx, h))
        if task is CognitionTask.ROLE_UTTERANCE:
            return CognitionResponse(self._utterance(ctx, h))
        raise AssertionError(task)

    @staticmethod
    def _style(ctx: dict, h: str) -> str:
        records = ctx.get("records") or []
        methods = Counter(str(r.get("method_id", "")).lower() for r in records)
        ranked = [m for m, _ in sorted(methods.items(), key=lambda kv: (-kv[1], kv[0])) if m]
        adjective = STYLE_ADJECTIVES[int(h[:4], 16) % len(STYLE_ADJECTIVES)]
        targets = len({r.get("target_id") for r in records})
        lead = " and ".join(ranked[:2]) or "mixed"
        article = "an" if adjective[0] in "aeiou" else "a"
        return f"Prefers {lead} work with {article} {adjective} finish across {targets} targets."

    @staticmethod
    def _describe(ctx: dict, h: str) -> str:
        intent = ctx.get("intent")
        if intent is None:
            variants = ("A candid portrait photograph.", "A close-up of a person smiling outdoors.")
            return variants[int(h[:4], 16) % len(variants)]
        if intent == "misleading":
            variants = (
                "Unedited snapshot from last weekend, this photo is 100% real.",
                "Straight out of the camera, a real and authentic shot.",
            )
            return variants[int(h[:4], 16) % len(variants)]
        cats = ", ".join(ctx.get("categories") or [])
        ops = " then ".join(ctx.get("op_ids") or [])
        return f"Forged image: applied {ops} ({cats})."

    @staticmethod
    def _reflect(ctx: dict, h: str) -> str:
        records = ctx.get("records") or []
        decisions = Counter(r.get("decision") for r in records if "decision" in r)
        return (
            f"Reflection over {len(records)} records: "
            f"{decisions.get('accept', 0)} accepted, {decisions.get('reject', 0)} rejected; "
            f"digest {h[:12]}."
        )

    @staticmethod
    def _utterance(ctx: dict, h: str) -> str:
        stance = ctx.get("stance", "neutral")
        if ctx.get("role") == "auditor" and stance in AUDITOR_CLAIMS:
            return AUDITOR_CLAIMS[stance]
        options = UTTERANCES.get(stance, UTTERANCES["neutral"])
        return options[int(h[:4], 16) % len(options)]


class StubDetector(_Stub):
    kind = BackendKind.DETECTOR

    def call(self, request: DetectorRequest) -> DetectorResponse:
        return DetectorResponse(unit_fraction(self._digest(request)))


class StubEditor(_Stub):
    """Returns ``<input>><op_id>`` so chain provenance is a left fold of op ids."""

    kind = BackendKind.EDIT

    def call(self, request: EditRequest) -> EditResponse:
        return EditResponse(f"{request.image_ref}>{request.op_id}")


_STUBS = {
    BackendKind.COGNITION: StubCognition,
    BackendKind.DETECTOR: StubDetector,
    BackendKind.EDIT: StubEditor,
}


def make_stub(kind: BackendKind | str, seed: int = 0, config=None):
    return _STUBS[BackendKind(kind)](seed, config)
