"""HTTP clients for the cognition, detector and edit services."""

from __future__ import annotations

import logging
import os
import time
from dataclasses import dataclass
from typing import Any, Callable

import httpx

from ..errors import BackendFailure, BackendTimeout, ConfigError, Exhausted, ProtocolError, TransportError
from .wire import BackendKind, parse_response

logger = logging.getLogger(__name__)

AUTH_TOKEN_ENV = "FORGESIM_AUTH_TOKEN"
RETRYABLE_STATUS = {429, 500, 502, 503, 504}


@dataclass(frozen=True)
class BackendConfig:
    endpoint_url: str
    timeout_ms: int = 30_000
    max_retries: int = 3
    retry_backoff_ms: int = 200
    auth_token: str | None = None

    def __post_init__(self):
        if self.timeout_ms < 1:
            raise ConfigError("timeout_ms must be >= 1")
        if not 0 <= self.max_retries <= 20:
            raise ConfigError("max_retries must be in [0, 20]")
        if self.retry_backoff_ms < 1:
            raise ConfigError("retry_backoff_ms must be >= 1")

    @classmethod
    def from_dict(cls, data: dict) -> BackendConfig:
        try:
            return cls(
                endpoint_url=str(data["endpoint_url"]),
                timeout_ms=int(data.get("timeout_ms", 30_000)),
                max_retries=int(data.get("max_retries", 3)),
                retry_backoff_ms=int(data.get("retry_backoff_ms", 200)),
                auth_token=data.get("auth_token") or os.environ.get(AUTH_TOKEN_ENV),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"bad backend config: {exc}") from exc

    def backoff_delays(self) -> list[float]:
        """Seconds to wait before retry 1..max_retries (doubling, never decreasing)."""
        return [self.retry_backoff_ms * (2**i) / 1000 for i in range(self.max_retries)]


class HttpBackend:
    """POSTs JSON requests to ``<endpoint_url>/v1/<kind>``.

    Timeouts, connection errors and 429/5xx responses are retried with
    exponential backoff. A malformed body is a ProtocolError and is never
    retried. Once retries are spent the last failure is wrapped in
    Exhausted; with ``max_retries=0`` the failure is raised as is.
    """

    def __init__(
        self,
        kind: BackendKind | str,
        config: BackendConfig,
        *,
        client: httpx.Client | None = None,
        sleep: Callable[[float], None] = time.sleep,
    ):
        self.kind = BackendKind(kind)
        self.config = config
        self._client = client or httpx.Client()
        self._owns_client = client is None
        self._sleep = sleep
        self.url = config.endpoint_url.rstrip("/") + self.kind.path

    def close(self) -> None:
        if self._owns_client:
            self._client.close()

    def _headers(self) -> dict[str, str]:
        headers = {"content-type": "application/json"}
        if self.config.auth_token:
            headers["authorization"] = f"Bearer {self.config.auth_token}"
        return headers

    def _attempt(self, request, attempt: int) -> Any:
        try:
            resp = self._client.post(
                self.url,
                json=request.to_wire(),
                headers=self._headers(),
                timeout=self.config.timeout_ms / 1000,
            )
        except httpx.TimeoutException as exc:
            raise BackendTimeout(f"{self.url}: timed out", attempts=attempt) from exc
        except httpx.HTTPError as exc:
            raise TransportError(f"{self.url}: {exc}", attempts=attempt) from exc
        if resp.status_code != 200:
            raise TransportError(
                f"{self.url}: HTTP {resp.status_code}", attempts=attempt, status_code=resp.status_code
            )
        try:
            body = resp.json()
        except ValueError as exc:
            raise ProtocolError(f"{self.url}: body is not JSON", attempts=attempt) from exc
        try:
            return parse_response(self.kind, body, request)
        except ProtocolError as exc:
            exc.attempts = attempt
            raise

    def call(self, request):
        if request.kind is not self.kind:
            raise ProtocolError(f"{type(request).__name__} sent to {self.kind.value} backend")
        delays = self.config.backoff_delays()
        attempt = 0
        while True:
            attempt += 1
            start = time.perf_counter()
            try:
                response = self._attempt(request, attempt)
            except ProtocolError:
                raise
            except (BackendTimeout, TransportError) as exc:
                elapsed = (time.perf_counter() - start) * 1000
                logger.warning("%s attempt %d failed after %.1f ms: %s", self.url, attempt, elapsed, exc)
                retryable = not (isinstance(exc, TransportError) and exc.status_code is not None
                                 and exc.status_code not in RETRYABLE_STATUS)
                if not retryable:
                    raise
                if attempt > self.config.max_retries:
                    if self.config.max_retries == 0:
                        raise
                    raise Exhausted(
                        f"{self.url}: gave up after {attempt} attempts: {exc}",
                        attempts=attempt,
                        last_error=exc,
                    ) from exc
                self._sleep(delays[attempt - 1])
                continue
            logger.debug("%s ok in %.1f ms (attempt %d)", self.url, (time.perf_counter() - start) * 1000, attempt)
            return response


def call(kind: BackendKind | str, request, config: BackendConfig, **kw):
    """One-shot request against the service at ``config.endpoint_url``."""
    backend = HttpBackend(kind, config, **kw)
    try:
        return backend.call(request)
    finally:
        backend.close()


__all__ = ["BackendConfig", "HttpBackend", "call", "BackendFailure", "AUTH_TOKEN_ENV"]
