import math
import threading
import time

import pytest

from loobench.errors import (
    AuthConfigError,
    MockMissError,
    ProviderError,
    TransientProviderError,
    ValidationError,
)
from loobench.gateway import (
    ChatRequest,
    ClientConfig,
    GeminiCompatClient,
    LlmClient,
    MockClient,
    MockScript,
    OpenAICompatClient,
    build_client,
    mock_embedding,
)

MOCK = ClientConfig(provider="mock", model="mock-chat", embedding_model="mock-embed")


def _cos(u, v):
    return sum(a * b for a, b in zip(u, v))


def test_scripted_mock_chat():
    client = MockClient(MOCK, MockScript(chat_map={"q1": "a1"}))
    assert client.chat(ChatRequest(system_prompt="s", user_message="q1")) == "a1"


def test_unscripted_mock_errors():
    client = MockClient(MOCK, MockScript(chat_map={"q1": "a1"}))
    with pytest.raises(MockMissError):
        client.chat(ChatRequest(system_prompt="s", user_message="q2"))


def test_mock_fallback_template():
    client = MockClient(MOCK, MockScript(fallback='{"echo": "{message}"}'))
    reply = client.chat(ChatRequest(system_prompt="s", user_message="hello"))
    assert reply == '{"echo": "hello"}'


def test_missing_api_key_fails_before_network():
    config = ClientConfig(
        provider="openai_compatible",
        model="m",
        base_url="https://example.invalid/v1",
        api_key_env="LOOBENCH_TEST_ABSENT_KEY",
    )

    def transport(url, headers, body, timeout):
        raise AssertionError("network must not be touched")

    client = OpenAICompatClient(config, transport=transport)
    with pytest.raises(AuthConfigError):
        client.chat(ChatRequest(system_prompt="s", user_message="u"))


def test_mock_embed_identical_inputs():
    client = MockClient(MOCK)
    v1, v2 = client.embed(["x", "x"])
    assert v1 == v2


def test_mock_embed_deterministic_frozen_value():
    # Evaluated once and frozen: similarity of the mock embeddings of "a"
    # and "b". Anything drifting here breaks stored-embedding compatibility.
    cos = _cos(mock_embedding("a"), mock_embedding("b"))
    assert cos == pytest.approx(-0.009875276685355493, abs=1e-12)
    assert cos < 1.0


def test_mock_embed_empty_text_is_zero_vector():
    assert mock_embedding("") == [0.0] * 32


def test_mock_embed_unit_norm():
    vec = mock_embedding("the quick brown fox")
    assert math.isclose(math.sqrt(sum(x * x for x in vec)), 1.0, rel_tol=1e-12)


def test_embed_requires_texts():
    with pytest.raises(ValidationError):
        MockClient(MOCK).embed([])


def test_chat_request_validation():
    with pytest.raises(ValidationError):
        ChatRequest(system_prompt="s", user_message="")
    with pytest.raises(ValidationError):
        ChatRequest(system_prompt="s", user_message="u", temperature=-1)


def test_config_validation():
    with pytest.raises(ValidationError):
        ClientConfig(provider="mock", model="m", max_inflight=0)
    with pytest.raises(ValidationError):
        ClientConfig(provider="nope", model="m")


class CountingClient(LlmClient):
    """Tracks the maximum number of concurrently outstanding requests."""

    def __init__(self, config):
        super().__init__(config)
        self.active = 0
        self.max_active = 0
        self._counter_lock = threading.Lock()

    def _chat_once(self, request):
        with self._counter_lock:
            self.active += 1
            self.max_active = max(self.max_active, self.active)
        time.sleep(0.005)
        with self._counter_lock:
            self.active -= 1
        return "ok"


def test_max_inflight_bound_holds():
    config = ClientConfig(provider="mock", model="m", max_inflight=3)
    client = CountingClient(config)
    threads = [
        threading.Thread(
            target=lambda: client.chat(ChatRequest(system_prompt="s", user_message="u"))
        )
        for _ in range(16)
    ]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert client.max_active <= 3


def test_retry_on_transient_then_success(monkeypatch):
    config = ClientConfig(
        provider="openai_compatible",
        model="m",
        base_url="https://api.test/v1",
        api_key_env="LOOBENCH_TEST_KEY",
    )
    monkeypatch.setenv("LOOBENCH_TEST_KEY", "secret")
    calls = {"n": 0}

    def transport(url, headers, body, timeout):
        calls["n"] += 1
        if calls["n"] < 3:
            return 429, {"error": "slow down"}
        return 200, {"choices": [{"message": {"content": "fine"}}]}

    sleeps = []
    client = OpenAICompatClient(config, transport=transport, sleep=sleeps.append)
    assert client.chat(ChatRequest(system_prompt="s", user_message="u")) == "fine"
    assert calls["n"] == 3
    assert sleeps == [1.0, 2.0]


def test_retry_budget_exhausted(monkeypatch):
    config = ClientConfig(
        provider="openai_compatible",
        model="m",
        base_url="https://api.test/v1",
        api_key_env="LOOBENCH_TEST_KEY",
    )
    monkeypatch.setenv("LOOBENCH_TEST_KEY", "secret")
    calls = {"n": 0}

    def transport(url, headers, body, timeout):
        calls["n"] += 1
        return 503, {"error": "down"}

    sleeps = []
    client = OpenAICompatClient(config, transport=transport, sleep=sleeps.append)
    with pytest.raises(TransientProviderError):
        client.chat(ChatRequest(system_prompt="s", user_message="u"))
    assert calls["n"] == 4
    assert sleeps == [1.0, 2.0, 4.0]


def test_non_transient_error_not_retried(monkeypatch):
    config = ClientConfig(
        provider="openai_compatible",
        model="m",
        base_url="https://api.test/v1",
        api_key_env="LOOBENCH_TEST_KEY",
    )
    monkeypatch.setenv("LOOBENCH_TEST_KEY", "secret")
    calls = {"n": 0}

    def transport(url, headers, body, timeout):
        calls["n"] += 1
        return 400, {"error": "bad request"}

    client = OpenAICompatClient(config, transport=transport, sleep=lambda s: None)
    with pytest.raises(ProviderError):
        client.chat(ChatRequest(system_prompt="s", user_message="u"))
    assert calls["n"] == 1


def test_openai_wire_format(monkeypatch):
    config = ClientConfig(
        provider="openai_compatible",
        model="target-model",
        embedding_model="embed-model",
        base_url="https://api.test/v1/",
        api_key_env="LOOBENCH_TEST_KEY",
    )
    monkeypatch.setenv("LOOBENCH_TEST_KEY", "secret")
    seen = {}

    def transport(url, headers, body, timeout):
        seen["url"] = url
        seen["auth"] = headers["Authorization"]
        seen["body"] = body
        if url.endswith("/embeddings"):
            return 200, {
                "data": [
                    {"index": 1, "embedding": [0.0, 1.0]},
                    {"index": 0, "embedding": [1.0, 0.0]},
                ]
            }
        return 200, {"choices": [{"message": {"content": "hi"}}]}

    client = OpenAICompatClient(config, transport=transport)
    assert client.chat(ChatRequest(system_prompt="sys", user_message="usr")) == "hi"
    assert seen["url"] == "https://api.test/v1/chat/completions"
    assert seen["auth"] == "Bearer secret"
    assert seen["body"]["messages"][0] == {"role": "system", "content": "sys"}
    vectors = client.embed(["first", "second"])
    assert vectors == [[1.0, 0.0], [0.0, 1.0]]
    assert seen["body"]["model"] == "embed-model"


def test_gemini_wire_format(monkeypatch):
    config = ClientConfig(
        provider="gemini_compatible",
        model="gem",
        embedding_model="gem-embed",
        base_url="https://gem.test/v1beta",
        api_key_env="LOOBENCH_TEST_KEY",
    )
    monkeypatch.setenv("LOOBENCH_TEST_KEY", "secret")
    seen = {}

    def transport(url, headers, body, timeout):
        seen["url"] = url
        seen["key"] = headers["x-goog-api-key"]
        if "embedContent" in url:
            return 200, {"embedding": {"values": [0.5, 0.5]}}
        return 200, {"candidates": [{"content": {"parts": [{"text": "yo"}]}}]}

    client = GeminiCompatClient(config, transport=transport)
    assert client.chat(ChatRequest(system_prompt="sys", user_message="usr")) == "yo"
    assert seen["url"] == "https://gem.test/v1beta/models/gem:generateContent"
    assert client.embed(["x"]) == [[0.5, 0.5]]
    assert "gem-embed:embedContent" in seen["url"]
    assert seen["key"] == "secret"


def test_build_client_dispatch():
    assert isinstance(build_client(MOCK), MockClient)
    assert isinstance(
        build_client(ClientConfig(provider="openai_compatible", model="m")),
        OpenAICompatClient,
    )
