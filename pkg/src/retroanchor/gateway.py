"""Model gateway: live chat-completion calls, caching, replay, batching.

Every completion is cached under a content-addressed digest before it is
returned, so a live run is replayable byte-for-byte afterwards.  Replay
mode never touches the network; a missing cache entry is a classified
failure, not a crash.
"""

from __future__ import annotations

import hashlib
import json
import os
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import requests

from retroanchor.prompts import RenderedPrompt
from retroanchor.utils import atomic_write_text, stable_json_dumps

AUTH_FAILURE = "auth_failure"
CONTEXT_LENGTH = "context_length"
RETRIES_EXHAUSTED = "retries_exhausted"
REPLAY_MISS = "replay_miss"
REQUEST_REJECTED = "request_rejected"


class GatewayError(Exception):
    """A classified completion failure."""

    def __init__(self, kind: str, message: str):
        super().__init__(message)
        self.kind = kind


class TransientBackendError(Exception):
    """Timeout, rate limit, or server fault worth retrying."""


@dataclass(frozen=True)
class ModelConfig:
    """One model endpoint plus the sampling knobs recorded per request."""

    model_id: str
    endpoint: str = ""
    max_output_tokens: int = 8192
    thinking_budget: int | str | None = None
    temperature: float | None = None
    top_p: float | None = None
    api_key_env: str = "RETROANCHOR_API_KEY"
    max_attempts: int = 4
    backoff_s: float = 1.0
    timeout_s: float = 120.0
    extensions: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.max_output_tokens < 1:
            raise ValueError("max_output_tokens must be at least 1")
        if self.max_attempts < 1:
            raise ValueError("max_attempts must be at least 1")

    def sampling_params(self) -> dict:
        params: dict = {"max_output_tokens": self.max_output_tokens}
        if self.temperature is not None:
            params["temperature"] = self.temperature
        if self.top_p is not None:
            params["top_p"] = self.top_p
        if self.thinking_budget is not None:
            params["thinking_budget"] = self.thinking_budget
        if self.extensions:
            params["extensions"] = self.extensions
        return params


@dataclass(frozen=True)
class Completion:
    request_digest: str
    text: str
    finish_reason: str
    latency_ms: int
    token_usage: dict | None = None
    attempts: int = 1
    from_cache: bool = False


@dataclass(frozen=True)
class GatewayFailure:
    request_digest: str
    kind: str
    message: str
    attempts: int = 0


@dataclass(frozen=True)
class BackendResult:
    text: str
    finish_reason: str = "stop"
    token_usage: dict | None = None


def request_digest(prompt: RenderedPrompt, cfg: ModelConfig) -> str:
    """Content address of one request; template edits change the key."""
    payload = {
        "text": prompt.text,
        "template_digest": prompt.template_digest,
        "model_id": cfg.model_id,
        "sampling": cfg.sampling_params(),
    }
    return hashlib.sha256(stable_json_dumps(payload).encode("utf-8")).hexdigest()


class CompletionCache:
    """Directory of content-addressed completion JSON files."""

    def __init__(self, directory: Path | str):
        self.directory = Path(directory)
        self.directory.mkdir(parents=True, exist_ok=True)

    def _path(self, digest: str) -> Path:
        return self.directory / f"{digest}.json"

    def get(self, digest: str) -> dict | None:
        path = self._path(digest)
        if not path.exists():
            return None
        with open(path, encoding="utf-8") as handle:
            return json.load(handle)

    def put(self, digest: str, entry: dict) -> None:
        atomic_write_text(self._path(digest), stable_json_dumps(entry))

    def __contains__(self, digest: str) -> bool:
        return self._path(digest).exists()


class HttpBackend:
    """OpenAI-style chat-completions over HTTPS."""

    def __init__(self, cfg: ModelConfig, session: requests.Session | None = None):
        if not (cfg.endpoint.startswith("http://") or cfg.endpoint.startswith("https://")):
            raise GatewayError(REQUEST_REJECTED, f"endpoint must be absolute: {cfg.endpoint!r}")
        self.cfg = cfg
        self.session = session or requests.Session()

    def send(self, text: str) -> BackendResult:
        api_key = os.environ.get(self.cfg.api_key_env, "")
        if not api_key:
            raise GatewayError(
                AUTH_FAILURE, f"environment variable {self.cfg.api_key_env} is not set"
            )
        payload: dict = {
            "model": self.cfg.model_id,
            "messages": [{"role": "user", "content": text}],
            "max_tokens": self.cfg.max_output_tokens,
        }
        if self.cfg.temperature is not None:
            payload["temperature"] = self.cfg.temperature
        if self.cfg.top_p is not None:
            payload["top_p"] = self.cfg.top_p
        if self.cfg.thinking_budget is not None:
            payload["thinking_budget"] = self.cfg.thinking_budget
        payload.update(self.cfg.extensions)
        try:
            response = self.session.post(
                self.cfg.endpoint,
                json=payload,
                headers={"Authorization": f"Bearer {api_key}"},
                timeout=self.cfg.timeout_s,
            )
        except requests.Timeout as exc:
            raise TransientBackendError(f"timeout: {exc}") from exc
        except requests.ConnectionError as exc:
            raise TransientBackendError(f"connection error: {exc}") from exc

        if response.status_code in (401, 403):
            raise GatewayError(AUTH_FAILURE, f"authentication rejected ({response.status_code})")
        if response.status_code == 413:
            raise GatewayError(CONTEXT_LENGTH, "request body too large")
        if response.status_code == 400 and "context" in response.text.lower():
            raise GatewayError(CONTEXT_LENGTH, response.text[:500])
        if response.status_code in (408, 429) or response.status_code >= 500:
            raise TransientBackendError(f"status {response.status_code}")
        if response.status_code != 200:
            raise GatewayError(
                REQUEST_REJECTED, f"status {response.status_code}: {response.text[:500]}"
            )

        body = response.json()
        choice = body["choices"][0]
        return BackendResult(
            text=choice["message"]["content"],
            finish_reason=choice.get("finish_reason", "stop"),
            token_usage=body.get("usage"),
        )


class Gateway:
    """Completion front door shared across worker threads."""

    def __init__(
        self,
        cfg: ModelConfig,
        cache_dir: Path | str,
        mode: str = "live",
        backend=None,
        manifest_path: Path | str | None = None,
        sleeper=time.sleep,
    ):
        if mode not in ("live", "replay"):
            raise ValueError(f"mode must be 'live' or 'replay', got {mode!r}")
        self.cfg = cfg
        self.mode = mode
        self.cache = CompletionCache(cache_dir)
        self.backend = backend
        if self.backend is None and mode == "live":
            self.backend = HttpBackend(cfg)
        self.manifest_path = Path(manifest_path) if manifest_path else None
        self._manifest_lock = threading.Lock()
        self._sleep = sleeper

    def _record(self, digest: str, attempts: int, outcome: str, latency_ms: int = 0) -> None:
        if self.manifest_path is None:
            return
        line = json.dumps(
            {
                "digest": digest,
                "model": self.cfg.model_id,
                "attempts": attempts,
                "outcome": outcome,
                "latency_ms": latency_ms,
            },
            sort_keys=True,
        )
        with self._manifest_lock:
            with open(self.manifest_path, "a", encoding="utf-8") as handle:
                handle.write(line + "\n")

    def _from_cache_entry(self, digest: str, entry: dict) -> Completion:
        return Completion(
            request_digest=digest,
            text=entry["text"],
            finish_reason=entry.get("finish_reason", "stop"),
            latency_ms=int(entry.get("latency_ms", 0)),
            token_usage=entry.get("token_usage"),
            attempts=int(entry.get("attempts", 1)),
            from_cache=True,
        )

    def complete(self, prompt: RenderedPrompt) -> Completion:
        digest = request_digest(prompt, self.cfg)
        cached = self.cache.get(digest)
        if cached is not None:
            self._record(digest, 0, "cache_hit", int(cached.get("latency_ms", 0)))
            return self._from_cache_entry(digest, cached)
        if self.mode == "replay":
            self._record(digest, 0, REPLAY_MISS)
            raise GatewayError(REPLAY_MISS, f"no cached completion for {digest}")

        attempts = 0
        while True:
            attempts += 1
            started = time.monotonic()
            try:
                result = self.backend.send(prompt.text)
            except TransientBackendError as exc:
                if attempts >= self.cfg.max_attempts:
                    self._record(digest, attempts, RETRIES_EXHAUSTED)
                    raise GatewayError(
                        RETRIES_EXHAUSTED,
                        f"gave up after {attempts} attempts: {exc}",
                    ) from exc
                self._sleep(self.cfg.backoff_s * (2 ** (attempts - 1)))
                continue
            except GatewayError as exc:
                self._record(digest, attempts, exc.kind)
                raise
            latency_ms = int((time.monotonic() - started) * 1000)
            entry = {
                "request_digest": digest,
                "model_id": self.cfg.model_id,
                "template_name": prompt.template_name,
                "template_digest": prompt.template_digest,
                "sampling": self.cfg.sampling_params(),
                "text": result.text,
                "finish_reason": result.finish_reason,
                "latency_ms": latency_ms,
                "token_usage": result.token_usage,
                "attempts": attempts,
            }
            self.cache.put(digest, entry)
            self._record(digest, attempts, "ok", latency_ms)
            return Completion(
                request_digest=digest,
                text=result.text,
                finish_reason=result.finish_reason,
                latency_ms=latency_ms,
                token_usage=result.token_usage,
                attempts=attempts,
            )

    def run_batch(
        self, prompts: list[RenderedPrompt], parallelism: int
    ) -> list[Completion | GatewayFailure]:
        """Complete every prompt with bounded concurrency.

        Output order matches input order; a failed item becomes a
        GatewayFailure in its slot and never aborts the batch.
        """
        if parallelism < 1:
            raise ValueError("parallelism must be at least 1")
        if not prompts:
            return []

        def one(prompt: RenderedPrompt) -> Completion | GatewayFailure:
            digest = request_digest(prompt, self.cfg)
            try:
                return self.complete(prompt)
            except GatewayError as exc:
                return GatewayFailure(
                    request_digest=digest, kind=exc.kind, message=str(exc)
                )

        with ThreadPoolExecutor(max_workers=parallelism) as pool:
            return list(pool.map(one, prompts))


def seed_cache(cache_dir: Path | str, prompt: RenderedPrompt, cfg: ModelConfig, text: str) -> str:
    """Plant a canned completion for replay runs; returns its digest."""
    digest = request_digest(prompt, cfg)
    CompletionCache(cache_dir).put(
        digest,
        {
            "request_digest": digest,
            "model_id": cfg.model_id,
            "template_name": prompt.template_name,
            "template_digest": prompt.template_digest,
            "sampling": cfg.sampling_params(),
            "text": text,
            "finish_reason": "stop",
            "latency_ms": 0,
            "token_usage": None,
            "attempts": 1,
        },
    )
    return digest
