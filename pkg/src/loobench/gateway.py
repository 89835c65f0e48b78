"""Uniform access to chat-completion and embedding providers.

Three providers: OpenAI-compatible, Gemini-compatible, and a deterministic
mock used by every test. Client handles are immutable and shareable across
threads; a per-client semaphore bounds in-flight requests to
`config.max_inflight`. Transient failures (timeout / 429 / 5xx) retry with
exponential backoff; all other failures surface immediately.
"""

from __future__ import annotations

import hashlib
import math
import os
import random
import threading
import time
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Any, Callable, Mapping, Sequence

from .errors import (
    AuthConfigError,
    MockMissError,
    ProviderError,
    TransientProviderError,
    ValidationError,
)

PROVIDERS = ("openai_compatible", "gemini_compatible", "mock")

# Initial call plus RETRY_BUDGET retries, sleeping BACKOFF_SECONDS between.
RETRY_BUDGET = 3
BACKOFF_SECONDS = (1.0, 2.0, 4.0)

MOCK_EMBED_DIM = 32
MOCK_EMBED_SEED = 0x6C6F6F62  # fixed across processes

# Substituted into a mock fallback template, verbatim.
FALLBACK_MESSAGE_TOKEN = "{message}"


@dataclass(frozen=True)
class ClientConfig:
    provider: str
    model: str
    base_url: str = ""
    embedding_model: str | None = None
    api_key_env: str = ""
    max_inflight: int = 4
    timeout: float = 30.0
    supports_search: bool = False

    def __post_init__(self):
        if self.provider not in PROVIDERS:
            raise ValidationError(f"unknown provider {self.provider!r}")
        if self.max_inflight < 1:
            raise ValidationError("max_inflight must be >= 1")


@dataclass(frozen=True)
class ChatRequest:
    system_prompt: str
    user_message: str
    temperature: float = 0.0

    def __post_init__(self):
        if not self.user_message:
            raise ValidationError("user_message is empty")
        if self.temperature < 0:
            raise ValidationError("temperature must be >= 0")


@dataclass(frozen=True)
class MockScript:
    """Scripted behavior for a mock client.

    `chat_map` maps exact user messages to replies. Unscripted messages use
    `fallback` when present (with the literal token "{message}" replaced by
    the incoming message) and otherwise raise MockMissError: tests must
    fail loudly rather than fabricate.
    """

    chat_map: Mapping[str, str] = field(default_factory=dict)
    fallback: str | None = None
    embed_seed: int = MOCK_EMBED_SEED
    embed_dim: int = MOCK_EMBED_DIM


@lru_cache(maxsize=65536)
def _token_vector(token: str, seed: int, dim: int) -> tuple[float, ...]:
    digest = hashlib.blake2b(
        token.encode("utf-8"), digest_size=8, salt=seed.to_bytes(8, "big")
    ).digest()
    rng = random.Random(int.from_bytes(digest, "big"))
    raw = [rng.gauss(0.0, 1.0) for _ in range(dim)]
    norm = math.sqrt(sum(x * x for x in raw))
    return tuple(x / norm for x in raw)


def mock_embedding(text: str, seed: int = MOCK_EMBED_SEED, dim: int = MOCK_EMBED_DIM) -> list[float]:
    """Deterministic bag-of-tokens embedding.

    Tokens (lowercased alphanumeric runs) hash to fixed pseudo-random unit
    vectors; the document vector is their L2-normalized sum. Empty text
    maps to the zero vector.
    """
    import re

    tokens = re.findall(r"[a-z0-9]+", text.lower())
    acc = [0.0] * dim
    for token in tokens:
        vec = _token_vector(token, seed, dim)
        for i in range(dim):
            acc[i] += vec[i]
    norm = math.sqrt(sum(x * x for x in acc))
    if norm == 0.0:
        return acc
    return [x / norm for x in acc]


class LlmClient:
    """Base client: bounded concurrency plus retry-on-transient policy."""

    def __init__(self, config: ClientConfig, sleep: Callable[[float], None] = time.sleep):
        self.config = config
        self._gate = threading.BoundedSemaphore(config.max_inflight)
        self._sleep = sleep

    def chat(self, request: ChatRequest) -> str:
        with self._gate:
            return self._with_retries(lambda: self._chat_once(request))

    def embed(self, texts: Sequence[str]) -> list[list[float]]:
        if not texts:
            raise ValidationError("embed requires at least one text")
        with self._gate:
            vectors = self._with_retries(lambda: self._embed_once(list(texts)))
        dims = {len(v) for v in vectors}
        if len(vectors) != len(texts) or len(dims) != 1:
            raise ProviderError(
                f"embedding shape mismatch: {len(vectors)} vectors, dims {sorted(dims)}"
            )
        return vectors

    def _with_retries(self, call: Callable[[], Any]) -> Any:
        last: Exception | None = None
        for attempt in range(RETRY_BUDGET + 1):
            try:
                return call()
            except TransientProviderError as exc:
                last = exc
                if attempt < RETRY_BUDGET:
                    self._sleep(BACKOFF_SECONDS[attempt])
        raise TransientProviderError(
            f"provider still failing after {RETRY_BUDGET} retries: {last}"
        ) from last

    def _chat_once(self, request: ChatRequest) -> str:
        raise NotImplementedError

    def _embed_once(self, texts: list[str]) -> list[list[float]]:
        raise NotImplementedError


class MockClient(LlmClient):
    def __init__(self, config: ClientConfig, script: MockScript | None = None, **kwargs):
        super().__init__(config, **kwargs)
        self.script = script or MockScript()

    def _chat_once(self, request: ChatRequest) -> str:
        reply = self.script.chat_map.get(request.user_message)
        if reply is not None:
            return reply
        if self.script.fallback is not None:
            return self.script.fallback.replace(FALLBACK_MESSAGE_TOKEN, request.user_message)
        raise MockMissError(
            f"mock has no scripted reply for message {request.user_message[:120]!r}"
        )

    def _embed_once(self, texts: list[str]) -> list[list[float]]:
        return [
            mock_embedding(t, seed=self.script.embed_seed, dim=self.script.embed_dim)
            for t in texts
        ]


# A transport takes (url, headers, json_body, timeout) and returns
# (status_code, parsed_body). Injectable so tests never touch a network.
Transport = Callable[[str, dict, dict, float], tuple[int, dict]]


def _requests_transport(url: str, headers: dict, body: dict, timeout: float) -> tuple[int, dict]:
    import requests

    try:
        resp = requests.post(url, headers=headers, json=body, timeout=timeout)
    except requests.Timeout as exc:
        raise TransientProviderError(f"timeout calling {url}") from exc
    except requests.RequestException as exc:
        raise ProviderError(f"request to {url} failed: {exc}") from exc
    try:
        payload = resp.json()
    except ValueError:
        payload = {"raw": resp.text}
    return resp.status_code, payload


class HttpClient(LlmClient):
    """Shared plumbing for the JSON-over-HTTP providers."""

    def __init__(
        self,
        config: ClientConfig,
        transport: Transport | None = None,
        **kwargs,
    ):
        super().__init__(config, **kwargs)
        self._transport = transport or _requests_transport

    def _api_key(self) -> str:
        if not self.config.api_key_env:
            raise AuthConfigError(f"no api_key_env configured for {self.config.provider}")
        key = os.environ.get(self.config.api_key_env, "").strip()
        if not key:
            raise AuthConfigError(
                f"environment variable {self.config.api_key_env} is not set"
            )
        return key

    def _post(self, url: str, headers: dict, body: dict) -> dict:
        status, payload = self._transport(url, headers, body, self.config.timeout)
        if status == 429 or status >= 500:
            raise TransientProviderError(f"provider returned {status}: {payload}")
        if status == 401 or status == 403:
            raise AuthConfigError(f"provider rejected credentials ({status})")
        if status >= 400:
            raise ProviderError(f"provider returned {status}: {payload}")
        return payload


class OpenAICompatClient(HttpClient):
    def _chat_once(self, request: ChatRequest) -> str:
        key = self._api_key()
        body = {
            "model": self.config.model,
            "messages": [
                {"role": "system", "content": request.system_prompt},
                {"role": "user", "content": request.user_message},
            ],
            "temperature": request.temperature,
        }
        payload = self._post(
            f"{self.config.base_url.rstrip('/')}/chat/completions",
            {"Authorization": f"Bearer {key}"},
            body,
        )
        try:
            return payload["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError) as exc:
            raise ProviderError(f"unexpected chat payload: {payload}") from exc

    def _embed_once(self, texts: list[str]) -> list[list[float]]:
        key = self._api_key()
        if not self.config.embedding_model:
            raise ValidationError("embedding_model not configured")
        payload = self._post(
            f"{self.config.base_url.rstrip('/')}/embeddings",
            {"Authorization": f"Bearer {key}"},
            {"model": self.config.embedding_model, "input": texts},
        )
        try:
            rows = sorted(payload["data"], key=lambda d: d["index"])
            return [[float(x) for x in row["embedding"]] for row in rows]
        except (KeyError, TypeError) as exc:
            raise ProviderError(f"unexpected embeddings payload: {payload}") from exc


class GeminiCompatClient(HttpClient):
    def _chat_once(self, request: ChatRequest) -> str:
        key = self._api_key()
        url = (
            f"{self.config.base_url.rstrip('/')}/models/"
            f"{self.config.model}:generateContent"
        )
        body = {
            "system_instruction": {"parts": [{"text": request.system_prompt}]},
            "contents": [{"role": "user", "parts": [{"text": request.user_message}]}],
            "generationConfig": {"temperature": request.temperature},
        }
        payload = self._post(url, {"x-goog-api-key": key}, body)
        try:
            parts = payload["candidates"][0]["content"]["parts"]
            return "".join(p.get("text", "") for p in parts)
        except (KeyError, IndexError, TypeError) as exc:
            raise ProviderError(f"unexpected chat payload: {payload}") from exc

    def _embed_once(self, texts: list[str]) -> list[list[float]]:
        key = self._api_key()
        if not self.config.embedding_model:
            raise ValidationError("embedding_model not configured")
        url = (
            f"{self.config.base_url.rstrip('/')}/models/"
            f"{self.config.embedding_model}:embedContent"
        )
        vectors: list[list[float]] = []
        for text in texts:
            payload = self._post(
                url, {"x-goog-api-key": key}, {"content": {"parts": [{"text": text}]}}
            )
            try:
                vectors.append([float(x) for x in payload["embedding"]["values"]])
            except (KeyError, TypeError) as exc:
                raise ProviderError(f"unexpected embedding payload: {payload}") from exc
        return vectors


def build_client(
    config: ClientConfig,
    script: MockScript | None = None,
    transport: Transport | None = None,
    sleep: Callable[[float], None] = time.sleep,
) -> LlmClient:
    if config.provider == "mock":
        return MockClient(config, script=script, sleep=sleep)
    if config.provider == "openai_compatible":
        return OpenAICompatClient(config, transport=transport, sleep=sleep)
    if config.provider == "gemini_compatible":
        return GeminiCompatClient(config, transport=transport, sleep=sleep)
    raise ValidationError(f"unknown provider {config.provider!r}")


def chat(client: LlmClient, request: ChatRequest) -> str:
    return client.chat(request)


def embed(client: LlmClient, texts: Sequence[str]) -> list[list[float]]:
    return client.embed(texts)
