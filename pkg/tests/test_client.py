import json
import random

import httpx
import pytest

from vpc.cache import ResponseCache
from vpc.client import (
    ChatClient,
    ChatRequest,
    EmptyCompletionError,
    FlakyBackend,
    HttpBackend,
    IdentityBackend,
    ImagePart,
    Message,
    OracleBackend,
    RemoteRefusalError,
    RetryPolicy,
    ScriptedBackend,
    TextPart,
    TransientError,
    TransportError,
    VideoUrlPart,
    cache_key,
)


def request(**over):
    kwargs = dict(
        kind="llm",
        endpoint="http://llm.test",
        model_id="gpt-4o",
        messages=(Message("user", (TextPart("fix this"),)),),
        temperature=0.0,
        max_tokens=64,
        prompt_hash="p" * 64,
        meta={"clip_id": "c0", "purpose": "correction", "hypothesis": "fix this"},
    )
    kwargs.update(over)
    return ChatRequest(**kwargs)


class CountingBackend:
    def __init__(self, text="ok"):
        self.text = text
        self.calls = 0

    def complete(self, req):
        self.calls += 1
        return self.text, {"total_tokens": 2}


# --- request validation -------------------------------------------------


def test_request_requires_messages():
    with pytest.raises(ValueError):
        request(messages=())


def test_request_rejects_bad_role():
    with pytest.raises(ValueError):
        request(messages=(Message("assistant", (TextPart("x"),)),))


# --- cache keys -----------------------------------------------------------


def test_cache_key_is_hex_digest():
    key = cache_key(request())
    assert len(key) == 64
    int(key, 16)


def test_cache_key_ignores_endpoint_and_meta():
    base = cache_key(request())
    assert cache_key(request(endpoint="http://other.host:9999")) == base
    assert cache_key(request(meta={"clip_id": "zzz", "purpose": "other"})) == base


@pytest.mark.parametrize(
    "field,value",
    [
        ("kind", "vlmm"),
        ("model_id", "other-model"),
        ("temperature", 0.7),
        ("max_tokens", 65),
        ("prompt_hash", "q" * 64),
        ("messages", (Message("user", (TextPart("fix that"),)),)),
    ],
)
def test_cache_key_sensitive_fields(field, value):
    assert cache_key(request(**{field: value})) != cache_key(request())


def test_cache_key_depends_on_image_bytes_not_identity():
    def req_with(data):
        return request(
            messages=(Message("user", (TextPart("look"), ImagePart(data=data))),)
        )

    assert cache_key(req_with(b"frame-1")) == cache_key(req_with(b"frame-1"))
    assert cache_key(req_with(b"frame-1")) != cache_key(req_with(b"frame-2"))


def test_cache_key_video_url_part():
    a = request(messages=(Message("user", (TextPart("x"), VideoUrlPart("v://1"))),))
    b = request(messages=(Message("user", (TextPart("x"), VideoUrlPart("v://2"))),))
    assert cache_key(a) != cache_key(b)


# --- ChatClient: cache and retry behavior ----------------------------------


def test_chat_caches_and_replays(tmp_path):
    backend = CountingBackend("hello")
    cache = ResponseCache(tmp_path / "cache")
    client = ChatClient(backend, cache=cache)
    first = client.chat(request())
    assert first.text == "hello"
    assert not first.from_cache
    second = client.chat(request())
    assert second.text == "hello"
    assert second.from_cache
    assert backend.calls == 1


def test_chat_without_cache_always_calls(tmp_path):
    backend = CountingBackend()
    client = ChatClient(backend)
    client.chat(request())
    client.chat(request())
    assert backend.calls == 2


def test_retry_then_success():
    sleeps = []
    backend = FlakyBackend(CountingBackend("recovered"), failures=3)
    client = ChatClient(
        backend,
        policy=RetryPolicy(max_attempts=5, base_delay_s=0.01),
        sleep=sleeps.append,
        rng=random.Random(0),
    )
    resp = client.chat(request())
    assert resp.text == "recovered"
    assert resp.retries == 3
    assert len(sleeps) == 3
    # Exponential growth between attempts.
    assert sleeps[0] < sleeps[1] < sleeps[2]


def test_retry_exhaustion_raises_transport_error():
    backend = FlakyBackend(CountingBackend(), failures=99)
    client = ChatClient(
        backend,
        policy=RetryPolicy(max_attempts=3, base_delay_s=0.0),
        sleep=lambda s: None,
    )
    with pytest.raises(TransportError):
        client.chat(request())


def test_empty_completion_raises_and_is_not_cached(tmp_path):
    backend = CountingBackend(text="   ")
    client = ChatClient(backend, cache=ResponseCache(tmp_path / "cache"))
    with pytest.raises(EmptyCompletionError):
        client.chat(request())
    with pytest.raises(EmptyCompletionError):
        client.chat(request())
    assert backend.calls == 2  # second call hit the backend, not the cache


def test_cached_payload_shape(tmp_path):
    cache = ResponseCache(tmp_path / "cache")
    client = ChatClient(CountingBackend("stored"), cache=cache)
    client.chat(request())
    entry = cache.get(cache_key(request()))
    assert entry["text"] == "stored"
    assert entry["model_id"] == "gpt-4o"
    assert entry["usage"] == {"total_tokens": 2}


# --- HttpBackend wire format ------------------------------------------------


def http_backend(handler):
    return HttpBackend(http=httpx.Client(transport=httpx.MockTransport(handler)))


def test_http_backend_success_and_payload(monkeypatch):
    monkeypatch.setenv("VPC_LLM_API_KEY", "sk-test-123")
    seen = {}

    def handler(request_):
        seen["url"] = str(request_.url)
        seen["auth"] = request_.headers.get("authorization")
        seen["body"] = json.loads(request_.content)
        return httpx.Response(
            200,
            json={
                "choices": [{"message": {"content": "fixed text"}}],
                "usage": {"prompt_tokens": 5, "completion_tokens": 2},
            },
        )

    text, usage = http_backend(handler).complete(request())
    assert text == "fixed text"
    assert usage == {"prompt_tokens": 5, "completion_tokens": 2}
    assert seen["url"] == "http://llm.test/chat/completions"
    assert seen["auth"] == "Bearer sk-test-123"
    assert seen["body"]["model"] == "gpt-4o"
    assert seen["body"]["temperature"] == 0.0
    assert seen["body"]["max_tokens"] == 64
    # Single text part collapses to a plain string message.
    assert seen["body"]["messages"] == [{"role": "user", "content": "fix this"}]


def test_http_backend_vlmm_key_and_parts(monkeypatch):
    monkeypatch.setenv("VPC_VLMM_API_KEY", "sk-vlmm")
    monkeypatch.delenv("VPC_LLM_API_KEY", raising=False)
    seen = {}

    def handler(request_):
        seen["auth"] = request_.headers.get("authorization")
        seen["body"] = json.loads(request_.content)
        return httpx.Response(200, json={"choices": [{"message": {"content": "a show"}}]})

    req = request(
        kind="vlmm",
        endpoint="http://vlmm.test/",
        messages=(
            Message(
                "user",
                (TextPart("what show?"), ImagePart(data=b"jpegbytes"), VideoUrlPart("file:///v.mp4")),
            ),
        ),
    )
    text, usage = http_backend(handler).complete(req)
    assert text == "a show"
    assert usage == {}
    assert seen["auth"] == "Bearer sk-vlmm"
    content = seen["body"]["messages"][0]["content"]
    assert content[0] == {"type": "text", "text": "what show?"}
    assert content[1]["type"] == "image_url"
    assert content[1]["image_url"]["url"].startswith("data:image/jpeg;base64,")
    assert content[2] == {"type": "video_url", "video_url": {"url": "file:///v.mp4"}}


def test_http_backend_no_key_no_header(monkeypatch):
    monkeypatch.delenv("VPC_LLM_API_KEY", raising=False)
    seen = {}

    def handler(request_):
        seen["auth"] = request_.headers.get("authorization")
        return httpx.Response(200, json={"choices": [{"message": {"content": "x"}}]})

    http_backend(handler).complete(request())
    assert seen["auth"] is None


@pytest.mark.parametrize("status", [429, 500, 503])
def test_http_backend_retryable_statuses(status):
    def handler(request_):
        return httpx.Response(status, text="busy")

    with pytest.raises(TransientError):
        http_backend(handler).complete(request())


def test_http_backend_client_error_is_refusal():
    def handler(request_):
        return httpx.Response(400, text="bad request")

    with pytest.raises(RemoteRefusalError) as ei:
        http_backend(handler).complete(request())
    assert ei.value.status == 400


def test_http_backend_network_error_is_transient():
    def handler(request_):
        raise httpx.ConnectError("no route to host")

    with pytest.raises(TransientError):
        http_backend(handler).complete(request())


def test_http_backend_malformed_payload_is_transient():
    def handler(request_):
        return httpx.Response(200, json={"surprise": True})

    with pytest.raises(TransientError):
        http_backend(handler).complete(request())


# --- mock backends ----------------------------------------------------------


def test_scripted_backend_lookup_and_wildcard():
    backend = ScriptedBackend(
        {"correction": {"c0": "exact", "*": "fallback"}, "context1": {"*": "Friends"}}
    )
    text, _ = backend.complete(request(meta={"clip_id": "c0", "purpose": "correction"}))
    assert text == "exact"
    text, _ = backend.complete(request(meta={"clip_id": "c9", "purpose": "correction"}))
    assert text == "fallback"
    text, _ = backend.complete(request(meta={"clip_id": "c9", "purpose": "context1"}))
    assert text == "Friends"
    assert backend.calls == 3


def test_scripted_backend_uncovered_raises():
    backend = ScriptedBackend({"correction": {}})
    with pytest.raises(KeyError):
        backend.complete(request(meta={"clip_id": "c0", "purpose": "correction"}))


def test_identity_backend_echoes_hypothesis():
    backend = IdentityBackend()
    text, _ = backend.complete(
        request(meta={"clip_id": "c0", "purpose": "correction", "hypothesis": "as heard"})
    )
    assert text == "as heard"
    c1, _ = backend.complete(request(meta={"purpose": "context1"}))
    c2, _ = backend.complete(request(meta={"purpose": "context2"}))
    assert c1 and c2 and c1 != c2


def test_oracle_backend_returns_reference():
    backend = OracleBackend({"c0": "the truth"})
    text, _ = backend.complete(
        request(meta={"clip_id": "c0", "purpose": "correction", "hypothesis": "da troof"})
    )
    assert text == "the truth"
    assert backend.correction_calls == 1
    backend.complete(request(meta={"clip_id": "c0", "purpose": "context1"}))
    assert backend.correction_calls == 1
    assert backend.calls == 2
