from __future__ import annotations

import json
import threading
import time

import pytest

from refpanel.backends import (
    BackendConfig,
    ChatRequest,
    HashingEmbedder,
    MockChatBackend,
    RemoteChatBackend,
    RemoteEmbedder,
    build_backend,
    complete_chat,
    embed_text,
    load_backend_config,
)
from refpanel.errors import BackendConfigError, CapabilityError, TransportError

# 100 distinct refereeing-adjacent words for the collision spot-check.
WORD_FIXTURE = (
    "handball offside penalty corner throw goal kick foul advantage caution "
    "dismissal tackle challenge reckless careless excessive force studs lunge "
    "elbow shirt pull trip push charge obstruction simulation dive referee "
    "assistant linesman var review onfield monitor whistle restart dropped "
    "ball free indirect direct wall ten yards encroachment keeper goalkeeper "
    "backpass handling deliberate save parry punch cross header volley strike "
    "winger striker defender midfielder substitute bench technical area coach "
    "captain armband stoppage added time extra halves kickoff anthem stadium "
    "pitch turf line boundary crossbar post net flag quadrant spot circle "
    "offence misconduct dissent delay celebration booking red yellow card "
    "second violent serious"
).split()


def make_request(**overrides):
    defaults = dict(
        system_prompt="system text",
        user_prompt="user text",
        request_tag="rule:q0001",
    )
    defaults.update(overrides)
    return ChatRequest(**defaults)


# ---------------------------------------------------------------------------
# ChatRequest invariants
# ---------------------------------------------------------------------------


def test_chat_request_rejects_empty_prompts():
    with pytest.raises(ValueError):
        ChatRequest(system_prompt="", user_prompt="u")
    with pytest.raises(ValueError):
        ChatRequest(system_prompt="s", user_prompt="")


# ---------------------------------------------------------------------------
# Mock backend
# ---------------------------------------------------------------------------


def test_mock_scripted_by_tag():
    backend = MockChatBackend("m", {"rule": "canned-json"})
    resp = complete_chat(backend, make_request(request_tag="rule"))
    assert resp.text == "canned-json"
    assert resp.backend_id == "m"


def test_mock_fallback_to_agent_name():
    backend = MockChatBackend("m", {"rule": "fallback-reply"})
    resp = complete_chat(backend, make_request(request_tag="rule:q0042"))
    assert resp.text == "fallback-reply"


def test_mock_exact_tag_wins_over_fallback():
    backend = MockChatBackend("m", {"rule": "generic", "rule:q0001": "specific"})
    assert complete_chat(backend, make_request(request_tag="rule:q0001")).text == "specific"


def test_mock_missing_tag_errors():
    backend = MockChatBackend("m", {"case": "x"})
    with pytest.raises(BackendConfigError):
        complete_chat(backend, make_request(request_tag="rule:q0001"))


def test_mock_determinism_double_invocation():
    backend = MockChatBackend("m", {"rule": "same"})
    first = complete_chat(backend, make_request())
    second = complete_chat(backend, make_request())
    assert first.text == second.text == "same"


def test_mock_sequence_consumed_in_order_then_repeats():
    backend = MockChatBackend("m", {"rule": ["first", "second"]})
    texts = [complete_chat(backend, make_request()).text for _ in range(4)]
    assert texts == ["first", "second", "second", "second"]


def test_mock_thread_safety_smoke():
    backend = MockChatBackend("m", {"rule": "r"})
    errors = []

    def hammer():
        try:
            for _ in range(200):
                assert complete_chat(backend, make_request()).text == "r"
        except Exception as exc:  # pragma: no cover
            errors.append(exc)

    threads = [threading.Thread(target=hammer) for _ in range(8)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert not errors
    assert len(backend.calls) == 1600


def test_capability_error_for_attachments_on_text_backend():
    backend = MockChatBackend("m", {"video": "x"}, vision=False)
    with pytest.raises(CapabilityError):
        complete_chat(
            backend, make_request(request_tag="video", attachments=(b"jpegbytes",))
        )


# ---------------------------------------------------------------------------
# Remote backend retry discipline
# ---------------------------------------------------------------------------


def chat_body(text="ok"):
    return {"choices": [{"message": {"content": text}}], "usage": {"total_tokens": 3}}


class FlakyTransport:
    """Scripted sequence of responses/exceptions, recording all calls."""

    def __init__(self, outcomes):
        self.outcomes = list(outcomes)
        self.calls = []

    def __call__(self, url, headers, payload, timeout):
        self.calls.append((url, headers, payload))
        outcome = self.outcomes.pop(0)
        if isinstance(outcome, Exception):
            raise outcome
        return outcome


def remote(transport, **overrides):
    config = BackendConfig(
        backend_id="api",
        kind="remote",
        url="https://example.invalid/v1/chat",
        model="test-model",
        max_retries=2,
        **overrides,
    )
    sleeps = []
    backend = RemoteChatBackend(config, transport=transport, sleeper=sleeps.append)
    return backend, sleeps


def test_remote_retries_transient_then_succeeds():
    transport = FlakyTransport([(500, None), (503, None), (200, chat_body("fine"))])
    backend, sleeps = remote(transport)
    resp = complete_chat(backend, make_request())
    assert resp.text == "fine"
    assert resp.token_usage == {"total_tokens": 3}
    assert len(transport.calls) == 3
    assert sleeps == [0.5, 1.0]  # exponential backoff


def test_remote_retries_connection_errors():
    transport = FlakyTransport([ConnectionError("boom"), (200, chat_body())])
    backend, _ = remote(transport)
    assert complete_chat(backend, make_request()).text == "ok"


def test_remote_exhausted_retries_raise_transport_error():
    transport = FlakyTransport([(500, None)] * 3)
    backend, _ = remote(transport)
    with pytest.raises(TransportError):
        complete_chat(backend, make_request())
    assert len(transport.calls) == 3  # initial + max_retries


def test_remote_auth_failure_is_config_error_no_retry():
    transport = FlakyTransport([(401, None)])
    backend, _ = remote(transport)
    with pytest.raises(BackendConfigError):
        complete_chat(backend, make_request())
    assert len(transport.calls) == 1


def test_remote_client_error_not_retried():
    transport = FlakyTransport([(400, None)])
    backend, _ = remote(transport)
    with pytest.raises(TransportError):
        complete_chat(backend, make_request())
    assert len(transport.calls) == 1


def test_remote_unparseable_model_text_is_returned_not_retried():
    # Garbage *content* is the parser's problem, not transport's.
    transport = FlakyTransport([(200, chat_body("not json at all"))])
    backend, _ = remote(transport)
    assert complete_chat(backend, make_request()).text == "not json at all"
    assert len(transport.calls) == 1


def test_remote_malformed_envelope_is_transport_error():
    transport = FlakyTransport([(200, {"unexpected": True})])
    backend, _ = remote(transport)
    with pytest.raises(TransportError):
        complete_chat(backend, make_request())


def test_remote_missing_auth_env_is_config_error(monkeypatch):
    monkeypatch.delenv("REFPANEL_TEST_KEY", raising=False)
    transport = FlakyTransport([(200, chat_body())])
    backend, _ = remote(transport, auth_env_var="REFPANEL_TEST_KEY")
    with pytest.raises(BackendConfigError):
        complete_chat(backend, make_request())


def test_remote_auth_header_from_env(monkeypatch):
    monkeypatch.setenv("REFPANEL_TEST_KEY", "sk-secret")
    transport = FlakyTransport([(200, chat_body())])
    backend, _ = remote(transport, auth_env_var="REFPANEL_TEST_KEY")
    complete_chat(backend, make_request())
    _, headers, _ = transport.calls[0]
    assert headers["Authorization"] == "Bearer sk-secret"


def test_remote_attachments_become_inline_images(monkeypatch):
    transport = FlakyTransport([(200, chat_body())])
    backend, _ = remote(transport, vision=True)
    complete_chat(backend, make_request(attachments=(b"\xff\xd8jpeg",)))
    _, _, payload = transport.calls[0]
    content = payload["messages"][1]["content"]
    assert content[0] == {"type": "text", "text": "user text"}
    assert content[1]["image_url"]["url"].startswith("data:image/jpeg;base64,")


def test_remote_generation_defaults_applied():
    transport = FlakyTransport([(200, chat_body())])
    backend, _ = remote(transport)
    complete_chat(backend, make_request())
    _, _, payload = transport.calls[0]
    assert payload["temperature"] == 0
    assert payload["max_tokens"] == 1024
    assert payload["model"] == "test-model"


def test_remote_in_flight_cap_enforced():
    peak = {"now": 0, "max": 0}
    guard = threading.Lock()
    go = threading.Event()

    def transport(url, headers, payload, timeout):
        with guard:
            peak["now"] += 1
            peak["max"] = max(peak["max"], peak["now"])
        go.wait(timeout=2)
        with guard:
            peak["now"] -= 1
        return 200, chat_body()

    config = BackendConfig(
        backend_id="api", kind="remote", url="https://example.invalid/v1/chat",
        model="m", max_in_flight=2,
    )
    backend = RemoteChatBackend(config, transport=transport, sleeper=lambda _: None)

    threads = [
        threading.Thread(target=lambda: complete_chat(backend, make_request()))
        for _ in range(6)
    ]
    for t in threads:
        t.start()
    time.sleep(0.2)
    go.set()
    for t in threads:
        t.join()
    assert peak["max"] <= 2


def test_remote_rejects_nonpositive_cap():
    config = BackendConfig(
        backend_id="api", kind="remote", url="https://example.invalid/v1/chat",
        model="m", max_in_flight=0,
    )
    with pytest.raises(BackendConfigError):
        RemoteChatBackend(config)


# ---------------------------------------------------------------------------
# Embedders
# ---------------------------------------------------------------------------


def test_hashing_embedder_shape_and_finiteness():
    emb = HashingEmbedder(dim=64, seed=0)
    vec = embed_text(emb, "any text at all")
    assert vec.dim == 64


def test_hashing_embedder_deterministic():
    a = HashingEmbedder(dim=64, seed=0)
    b = HashingEmbedder(dim=64, seed=0)
    text = "offside trap sprung on the halfway line"
    assert a.embed(text) == a.embed(text)
    assert a.embed(text) == b.embed(text)


def test_hashing_embedder_seed_changes_vectors():
    a = HashingEmbedder(dim=64, seed=0)
    b = HashingEmbedder(dim=64, seed=1)
    assert a.embed("handball") != b.embed("handball")
    assert a.fingerprint != b.fingerprint


def test_hashing_embedder_distinct_words_no_collisions():
    emb = HashingEmbedder(dim=64, seed=0)
    assert len(WORD_FIXTURE) == 100
    assert len(set(WORD_FIXTURE)) == 100
    vectors = {word: emb.embed(word).values for word in WORD_FIXTURE}
    seen = set()
    for word, values in vectors.items():
        assert values not in seen, f"collision for {word}"
        seen.add(values)
    assert vectors["handball"] != vectors["offside"]


def test_hashing_embedder_rejects_empty_text():
    with pytest.raises(ValueError):
        HashingEmbedder().embed("")


def test_hashing_embedder_handles_non_word_text():
    vec = HashingEmbedder().embed("!!! ***")
    assert any(v != 0.0 for v in vec.values)


def test_remote_embedder_happy_path_and_dim_check():
    calls = []

    def transport(url, headers, payload, timeout):
        calls.append(payload)
        return 200, {"data": [{"embedding": [0.5] * 8}]}

    emb = RemoteEmbedder(
        url="https://example.invalid/v1/embeddings",
        model="embed-model",
        dim=8,
        transport=transport,
        sleeper=lambda _: None,
    )
    vec = embed_text(emb, "hello")
    assert vec.dim == 8
    assert calls[0] == {"model": "embed-model", "input": "hello"}

    wrong = RemoteEmbedder(
        url="https://example.invalid/v1/embeddings",
        model="embed-model",
        dim=16,
        transport=transport,
        sleeper=lambda _: None,
    )
    with pytest.raises(TransportError):
        wrong.embed("hello")


def test_remote_embedder_retries_then_fails():
    attempts = []

    def transport(url, headers, payload, timeout):
        attempts.append(1)
        return 503, None

    emb = RemoteEmbedder(
        url="https://example.invalid/v1/embeddings",
        model="embed-model",
        dim=8,
        max_retries=1,
        transport=transport,
        sleeper=lambda _: None,
    )
    with pytest.raises(TransportError):
        emb.embed("x")
    assert len(attempts) == 2


# ---------------------------------------------------------------------------
# Config loading
# ---------------------------------------------------------------------------


def test_load_backend_config_and_build(tmp_path):
    script = tmp_path / "script.json"
    script.write_text(json.dumps({"rule": "reply"}))
    config_path = tmp_path / "backends.json"
    config_path.write_text(
        json.dumps(
            {
                "scripted": {"kind": "mock", "script_file": "script.json"},
                "api": {
                    "kind": "remote",
                    "url": "https://example.invalid/v1/chat",
                    "model": "big-model",
                    "auth_env_var": "API_KEY",
                    "vision": True,
                    "max_retries": 5,
                    "timeout": 12.5,
                },
            }
        )
    )
    configs = load_backend_config(config_path)
    assert configs["api"].max_retries == 5
    assert configs["api"].vision is True
    assert configs["scripted"].kind == "mock"
    # mock entries default to vision-capable
    assert configs["scripted"].vision is True

    backend = build_backend(configs["scripted"], base_dir=tmp_path)
    assert complete_chat(backend, make_request(request_tag="rule")).text == "reply"


def test_load_backend_config_unknown_kind(tmp_path):
    path = tmp_path / "backends.json"
    path.write_text(json.dumps({"x": {"kind": "telepathy"}}))
    with pytest.raises(BackendConfigError):
        load_backend_config(path)
