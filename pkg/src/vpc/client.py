"""Chat-completions client for the two model endpoints.

Speaks the OpenAI-compatible wire protocol (`POST {endpoint}/chat/completions`)
with text, inline-image, and video-url content parts. Responses are cached
content-addressably, so a warm cache answers identical requests with zero
network traffic. Deterministic mock backends stand in for the real services
in tests and dry runs.
"""

from __future__ import annotations

import base64
import hashlib
import json
import os
import random
import time
from dataclasses import dataclass, field, replace
from typing import Callable, Mapping, Optional, Protocol, Sequence, Union

import httpx

from .cache import NullCache, ResponseCache
from .errors import VpcError

ROLES = ("system", "user")

API_KEY_ENV = {"llm": "VPC_LLM_API_KEY", "vlmm": "VPC_VLMM_API_KEY"}


class TransportError(VpcError):
    """Network-level failure that survived every retry."""


class TransientError(VpcError):
    """Retryable failure: timeout, connection error, 429, or 5xx."""


class RemoteRefusalError(VpcError):
    """A 4xx other than 429; retrying will not help."""

    def __init__(self, status: int, body: str):
        super().__init__(f"endpoint refused the request: HTTP {status}: {body[:500]}")
        self.status = status
        self.body = body


class EmptyCompletionError(VpcError):
    """The model returned an empty completion; never silently accepted."""


@dataclass(frozen=True)
class TextPart:
    text: str


@dataclass(frozen=True)
class ImagePart:
    data: bytes
    media_type: str = "image/jpeg"

    @property
    def digest(self) -> str:
        return hashlib.sha256(self.data).hexdigest()


@dataclass(frozen=True)
class VideoUrlPart:
    url: str


Part = Union[TextPart, ImagePart, VideoUrlPart]


@dataclass(frozen=True)
class Message:
    role: str
    parts: tuple[Part, ...]


@dataclass(frozen=True)
class ChatRequest:
    """One logical model call.

    ``kind`` names which endpoint family the request addresses ("llm" or
    "vlmm") and selects the API key; it is part of the cache key, the
    endpoint URL is not. ``meta`` is free-form routing/audit data (clip id,
    purpose) and never enters the cache key.
    """

    kind: str
    endpoint: str
    model_id: str
    messages: tuple[Message, ...]
    temperature: float = 0.0
    max_tokens: int = 1024
    prompt_hash: str = ""
    meta: Mapping[str, str] = field(default_factory=dict)

    def __post_init__(self):
        if not self.messages:
            raise ValueError("a chat request needs at least one message")
        for msg in self.messages:
            if msg.role not in ROLES:
                raise ValueError(f"unsupported role {msg.role!r}; expected one of {ROLES}")


@dataclass(frozen=True)
class ChatResponse:
    text: str
    model_id: str
    usage: dict[str, int]
    latency_ms: float
    from_cache: bool = False
    retries: int = 0


@dataclass(frozen=True)
class RetryPolicy:
    max_attempts: int = 5
    base_delay_s: float = 0.5
    max_delay_s: float = 30.0
    jitter: float = 0.1

    def delay(self, attempt: int, rng: random.Random) -> float:
        base = min(self.max_delay_s, self.base_delay_s * 2 ** (attempt - 1))
        return base * (1.0 + self.jitter * rng.random())


def _canonical_part(part: Part) -> list:
    if isinstance(part, TextPart):
        return ["text", part.text]
    if isinstance(part, ImagePart):
        return ["image", part.digest]
    return ["video_url", part.url]


def cache_key(req: ChatRequest) -> str:
    """Stable digest of the request's logical content.

    Covers endpoint kind, model id, decoding parameters, prompt hash, and
    the canonicalized messages with frames reduced to their content digests.
    Independent of serialization details, field order, and endpoint URL.
    """
    payload = {
        "kind": req.kind,
        "model": req.model_id,
        "temperature": req.temperature,
        "max_tokens": req.max_tokens,
        "prompt_hash": req.prompt_hash,
        "messages": [
            {"role": m.role, "parts": [_canonical_part(p) for p in m.parts]}
            for m in req.messages
        ],
    }
    blob = json.dumps(payload, sort_keys=True, separators=(",", ":"), ensure_ascii=True)
    return hashlib.sha256(blob.encode("ascii")).hexdigest()


class Backend(Protocol):
    def complete(self, req: ChatRequest) -> tuple[str, dict[str, int]]:
        """Return (completion text, usage counts); raise TransientError for
        retryable failures."""
        ...


def _wire_content(parts: Sequence[Part]):
    if len(parts) == 1 and isinstance(parts[0], TextPart):
        return parts[0].text
    out = []
    for part in parts:
        if isinstance(part, TextPart):
            out.append({"type": "text", "text": part.text})
        elif isinstance(part, ImagePart):
            b64 = base64.b64encode(part.data).decode("ascii")
            out.append(
                {
                    "type": "image_url",
                    "image_url": {"url": f"data:{part.media_type};base64,{b64}"},
                }
            )
        else:
            out.append({"type": "video_url", "video_url": {"url": part.url}})
    return out


class HttpBackend:
    """Real wire calls via httpx; inject a client to fake or observe them."""

    def __init__(self, http: Optional[httpx.Client] = None, timeout_s: float = 120.0):
        self._http = http or httpx.Client(timeout=timeout_s)

    def complete(self, req: ChatRequest) -> tuple[str, dict[str, int]]:
        url = req.endpoint.rstrip("/") + "/chat/completions"
        body = {
            "model": req.model_id,
            "messages": [
                {"role": m.role, "content": _wire_content(m.parts)} for m in req.messages
            ],
            "temperature": req.temperature,
            "max_tokens": req.max_tokens,
        }
        headers = {}
        key = os.environ.get(API_KEY_ENV.get(req.kind, ""), "")
        if key:
            headers["Authorization"] = f"Bearer {key}"
        try:
            resp = self._http.post(url, json=body, headers=headers)
        except httpx.HTTPError as exc:
            raise TransientError(f"{type(exc).__name__}: {exc}") from exc
        if resp.status_code == 429 or resp.status_code >= 500:
            raise TransientError(f"HTTP {resp.status_code}: {resp.text[:200]}")
        if resp.status_code >= 400:
            raise RemoteRefusalError(resp.status_code, resp.text)
        try:
            data = resp.json()
            text = data["choices"][0]["message"]["content"]
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise TransientError(f"malformed completion payload: {exc}") from exc
        usage = data.get("usage") or {}
        return text or "", {k: v for k, v in usage.items() if isinstance(v, int)}


class ScriptedBackend:
    """Deterministic mock: answers come from a purpose -> clip -> text table.

    A ``"*"`` clip entry is the fallback for its purpose. Raises KeyError
    for requests the script does not cover, so unexpected traffic fails
    tests loudly.
    """

    def __init__(self, script: Mapping[str, Mapping[str, str]]):
        self.script = {k: dict(v) for k, v in script.items()}
        self.calls = 0

    def complete(self, req: ChatRequest) -> tuple[str, dict[str, int]]:
        self.calls += 1
        purpose = req.meta.get("purpose", "")
        clip_id = req.meta.get("clip_id", "")
        table = self.script[purpose]
        text = table.get(clip_id, table.get("*"))
        if text is None:
            raise KeyError(f"scripted backend has no answer for {purpose}/{clip_id}")
        return text, {}


class IdentityBackend:
    """Mock that echoes the hypothesis back as the correction and answers
    the context questions with fixed placeholder text."""

    C1 = "unknown"
    C2 = "no description available"

    def __init__(self):
        self.calls = 0

    def complete(self, req: ChatRequest) -> tuple[str, dict[str, int]]:
        self.calls += 1
        purpose = req.meta.get("purpose", "")
        if purpose == "context1":
            return self.C1, {}
        if purpose == "context2":
            return self.C2, {}
        return req.meta["hypothesis"], {}


class OracleBackend:
    """Mock that corrects every hypothesis to its reference transcript."""

    def __init__(self, references: Mapping[str, str]):
        self.references = dict(references)
        self.calls = 0
        self.correction_calls = 0

    def complete(self, req: ChatRequest) -> tuple[str, dict[str, int]]:
        self.calls += 1
        purpose = req.meta.get("purpose", "")
        if purpose == "context1":
            return IdentityBackend.C1, {}
        if purpose == "context2":
            return IdentityBackend.C2, {}
        self.correction_calls += 1
        return self.references[req.meta["clip_id"]], {}


class FlakyBackend:
    """Test double: fail with TransientError ``failures`` times, then delegate."""

    def __init__(self, inner: Backend, failures: int):
        self.inner = inner
        self.remaining = failures

    def complete(self, req: ChatRequest) -> tuple[str, dict[str, int]]:
        if self.remaining > 0:
            self.remaining -= 1
            raise TransientError("injected failure")
        return self.inner.complete(req)


class ChatClient:
    """Cache-first chat with bounded exponential-backoff retries.

    Thread-safe for concurrent use: per-call state is local and the cache
    tolerates concurrent writers.
    """

    def __init__(
        self,
        backend: Backend,
        cache: Optional[ResponseCache] = None,
        policy: RetryPolicy = RetryPolicy(),
        sleep: Callable[[float], None] = time.sleep,
        rng: Optional[random.Random] = None,
    ):
        self.backend = backend
        self.cache = cache if cache is not None else NullCache()
        self.policy = policy
        self._sleep = sleep
        self._rng = rng or random.Random()

    def chat(self, req: ChatRequest) -> ChatResponse:
        key = cache_key(req)
        cached = self.cache.get(key)
        if cached is not None:
            return ChatResponse(
                text=cached["text"],
                model_id=cached.get("model_id", req.model_id),
                usage=cached.get("usage", {}),
                latency_ms=cached.get("latency_ms", 0.0),
                from_cache=True,
            )
        started = time.perf_counter()
        attempt = 0
        while True:
            attempt += 1
            try:
                text, usage = self.backend.complete(req)
                break
            except TransientError as exc:
                if attempt >= self.policy.max_attempts:
                    raise TransportError(
                        f"giving up after {attempt} attempt(s): {exc}"
                    ) from exc
                self._sleep(self.policy.delay(attempt, self._rng))
        latency_ms = (time.perf_counter() - started) * 1000.0
        if not text.strip():
            raise EmptyCompletionError(
                f"model {req.model_id!r} returned an empty completion"
            )
        resp = ChatResponse(
            text=text,
            model_id=req.model_id,
            usage=dict(usage),
            latency_ms=latency_ms,
            retries=attempt - 1,
        )
        self.cache.put(
            key,
            {
                "text": resp.text,
                "model_id": resp.model_id,
                "usage": resp.usage,
                "latency_ms": resp.latency_ms,
            },
        )
        return resp


def warm_response(resp: ChatResponse) -> ChatResponse:
    return replace(resp, from_cache=True)
