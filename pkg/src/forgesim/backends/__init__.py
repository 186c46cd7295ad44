"""Cognition, detector and edit backends: HTTP clients and deterministic stubs."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Protocol

from ..errors import ConfigError
from .http import AUTH_TOKEN_ENV, BackendConfig, HttpBackend, call
from .stub import StubCognition, StubDetector, StubEditor, keyword_stance, make_stub
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


class Backend(Protocol):
    kind: BackendKind

    def call(self, request: Any) -> Any: ...


@dataclass
class Backends:
    cognition: Backend
    detector: Backend
    editor: Backend

    @classmethod
    def stubs(cls, seed: int = 0) -> Backends:
        return cls(
            make_stub(BackendKind.COGNITION, seed),
            make_stub(BackendKind.DETECTOR, seed),
            make_stub(BackendKind.EDIT, seed),
        )

    @classmethod
    def from_config(cls, setting: Any, seed: int = 0) -> Backends:
        """``"stub"`` or a mapping ``{cognition|detector|edit: {endpoint_url, ...}}``."""
        if setting == "stub":
            return cls.stubs(seed)
        if not isinstance(setting, dict):
            raise ConfigError("no backends configured (use 'stub' or per-service endpoint settings)")
        built = {}
        for name, kind in (("cognition", BackendKind.COGNITION), ("detector", BackendKind.DETECTOR),
                           ("edit", BackendKind.EDIT)):
            entry = setting.get(name)
            if entry is None:
                raise ConfigError(f"backend {name!r} not configured")
            built[name] = make_stub(kind, seed) if entry == "stub" else HttpBackend(kind, BackendConfig.from_dict(entry))
        return cls(built["cognition"], built["detector"], built["edit"])

    def close(self) -> None:
        for b in (self.cognition, self.detector, self.editor):
            close = getattr(b, "close", None)
            if close:
                close()


__all__ = [
    "AUTH_TOKEN_ENV", "Backend", "BackendConfig", "BackendKind", "Backends", "CognitionRequest",
    "CognitionResponse", "CognitionTask", "DetectorRequest", "DetectorResponse", "EditRequest",
    "EditResponse", "HttpBackend", "StubCognition", "StubDetector", "StubEditor", "call",
    "keyword_stance", "make_stub",
]
