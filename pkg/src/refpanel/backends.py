"""Model backends: remote chat/embedding clients and offline doubles.

Every network call in the package goes through this module. The remote
client speaks a chat-completions-style JSON-over-HTTP dialect that is
entirely configuration (endpoint, auth header, model name), so switching
providers is a config edit, not a code fork. The scripted mock and the
hashing embedder make the full pipeline reproducible with no network.
"""

from __future__ import annotations

import base64
import hashlib
import itertools
import json
import os
import re
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping, Sequence, Union

import numpy as np
import requests

from .errors import BackendConfigError, CapabilityError, TransportError
from .kb import EmbeddingVector

_RETRYABLE_STATUS = {429, 500, 502, 503, 504}
_AUTH_STATUS = {401, 403}
_BACKOFF_BASE = 0.5

# Reproducible decoding defaults for evaluation runs.
DEFAULT_GENERATION_PARAMS = {"temperature": 0, "max_tokens": 1024}

_TOKEN_RE = re.compile(r"[a-z0-9]+")


@dataclass(frozen=True)
class ChatRequest:
    system_prompt: str
    user_prompt: str
    attachments: tuple[bytes, ...] = ()
    generation_params: Mapping[str, object] = field(default_factory=dict)
    request_tag: str = ""

    def __post_init__(self):
        if not self.system_prompt:
            raise ValueError("system_prompt must be non-empty")
        if not self.user_prompt:
            raise ValueError("user_prompt must be non-empty")


@dataclass(frozen=True)
class ChatResponse:
    text: str
    latency: float
    backend_id: str
    token_usage: Mapping[str, int] | None = None


@dataclass(frozen=True)
class BackendConfig:
    backend_id: str
    kind: str  # "remote" | "mock"
    url: str = ""
    auth_env_var: str = ""
    auth_header: str = "Authorization"
    model: str = ""
    vision: bool = False
    max_retries: int = 2
    timeout: float = 60.0
    max_in_flight: int = 8
    script_file: str = ""


# transport(url, headers, payload, timeout) -> (status_code, parsed_json_or_None)
Transport = Callable[[str, dict, dict, float], tuple[int, object]]


def _default_transport(url: str, headers: dict, payload: dict, timeout: float):
    try:
        resp = requests.post(url, headers=headers, json=payload, timeout=timeout)
    except requests.RequestException as exc:
        raise ConnectionError(str(exc)) from exc
    try:
        body = resp.json()
    except ValueError:
        body = None
    return resp.status_code, body


def _post_with_retries(
    transport: Transport,
    url: str,
    headers: dict,
    payload: dict,
    timeout: float,
    max_retries: int,
    sleeper: Callable[[float], None],
    what: str,
) -> object:
    """POST with exponential backoff on transient failures only."""
    last_failure = "no attempt made"
    for attempt in range(max_retries + 1):
        try:
            status, body = transport(url, headers, payload, timeout)
        except ConnectionError as exc:
            last_failure = f"connection failure: {exc}"
        else:
            if status in _AUTH_STATUS:
                raise BackendConfigError(
                    f"{what}: authentication rejected (HTTP {status})"
                )
            if status in _RETRYABLE_STATUS:
                last_failure = f"HTTP {status}"
            elif 200 <= status < 300:
                return body
            else:
                raise TransportError(f"{what}: HTTP {status} (not retryable)")
        if attempt < max_retries:
            sleeper(_BACKOFF_BASE * (2**attempt))
    raise TransportError(f"{what}: exhausted {max_retries} retries ({last_failure})")


class RemoteChatBackend:
    """Chat-completions client over a configurable JSON HTTP endpoint."""

    def __init__(
        self,
        config: BackendConfig,
        transport: Transport | None = None,
        sleeper: Callable[[float], None] = time.sleep,
    ):
        if not config.url:
            raise BackendConfigError(f"backend {config.backend_id!r} has no url")
        if config.max_in_flight < 1:
            raise BackendConfigError(
                f"backend {config.backend_id!r}: max_in_flight must be positive"
            )
        self.config = config
        self.backend_id = config.backend_id
        self.vision = config.vision
        self._transport = transport or _default_transport
        self._sleeper = sleeper
        # Per-backend in-flight cap; callers block here, never in provider code.
        self._slots = threading.BoundedSemaphore(config.max_in_flight)

    def _headers(self) -> dict:
        headers = {"Content-Type": "application/json"}
        if self.config.auth_env_var:
            key = os.environ.get(self.config.auth_env_var)
            if not key:
                raise BackendConfigError(
                    f"backend {self.backend_id!r}: environment variable "
                    f"{self.config.auth_env_var!r} is not set"
                )
            value = key if self.config.auth_header != "Authorization" else f"Bearer {key}"
            headers[self.config.auth_header] = value
        return headers

    def _payload(self, req: ChatRequest) -> dict:
        if req.attachments:
            content: object = [{"type": "text", "text": req.user_prompt}]
            for image in req.attachments:
                encoded = base64.b64encode(image).decode("ascii")
                content.append(
                    {
                        "type": "image_url",
                        "image_url": {"url": f"data:image/jpeg;base64,{encoded}"},
                    }
                )
        else:
            content = req.user_prompt
        params = {**DEFAULT_GENERATION_PARAMS, **dict(req.generation_params)}
        return {
            "model": self.config.model,
            "messages": [
                {"role": "system", "content": req.system_prompt},
                {"role": "user", "content": content},
            ],
            **params,
        }

    def generate(self, req: ChatRequest) -> tuple[str, Mapping[str, int] | None]:
        with self._slots:
            body = _post_with_retries(
                self._transport,
                self.config.url,
                self._headers(),
                self._payload(req),
                self.config.timeout,
                self.config.max_retries,
                self._sleeper,
                what=f"chat backend {self.backend_id!r}",
            )
        try:
            text = body["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError):
            raise TransportError(
                f"chat backend {self.backend_id!r}: malformed response envelope"
            ) from None
        usage = body.get("usage") if isinstance(body, dict) else None
        return str(text), usage


class MockChatBackend:
    """Scripted backend: a pure function of (request_tag, script).

    Script values are a single string (returned on every call) or a list
    of strings consumed in order with the last one repeating, which lets
    tests script fail-then-recover conversations. Lookup falls back from
    the full tag to its agent-name prefix (the part before ':').
    """

    def __init__(
        self,
        backend_id: str,
        script: Mapping[str, Union[str, Sequence[str]]],
        vision: bool = True,
    ):
        self.backend_id = backend_id
        self.vision = vision
        self._script = dict(script)
        self._counters: dict[str, itertools.count] = {}
        self._counter_guard = threading.Lock()
        self.calls: list[str] = []

    def _lookup(self, tag: str) -> Union[str, Sequence[str]]:
        if tag in self._script:
            return self._script[tag]
        fallback = tag.split(":", 1)[0]
        if fallback in self._script:
            return self._script[fallback]
        raise BackendConfigError(
            f"mock backend {self.backend_id!r}: no script entry for tag {tag!r} "
            f"or fallback {fallback!r}"
        )

    def generate(self, req: ChatRequest) -> tuple[str, None]:
        self.calls.append(req.request_tag)
        scripted = self._lookup(req.request_tag)
        if isinstance(scripted, str):
            return scripted, None
        with self._counter_guard:
            counter = self._counters.setdefault(req.request_tag, itertools.count())
        index = min(next(counter), len(scripted) - 1)
        return scripted[index], None


ChatBackend = Union[RemoteChatBackend, MockChatBackend]


def complete_chat(backend: ChatBackend, req: ChatRequest) -> ChatResponse:
    """Issue one chat call; transport retries live inside the backend."""
    if req.attachments and not backend.vision:
        raise CapabilityError(
            f"backend {backend.backend_id!r} is not vision-capable but the "
            f"request carries {len(req.attachments)} attachment(s)"
        )
    start = time.monotonic()
    text, usage = backend.generate(req)
    return ChatResponse(
        text=text,
        latency=time.monotonic() - start,
        backend_id=backend.backend_id,
        token_usage=usage,
    )


# ---------------------------------------------------------------------------
# Embedders
# ---------------------------------------------------------------------------


class HashingEmbedder:
    """Deterministic offline embedder.

    Hashed bag-of-words random projection: each token maps (via
    shake_256 over seed and token) to a pseudo-random direction, and the
    text embedding is the sum over its tokens. Same text, same vector,
    on any platform.
    """

    def __init__(self, dim: int = 64, seed: int = 0):
        if dim < 1:
            raise ValueError("dim must be positive")
        self.dim = dim
        self.seed = seed
        self.fingerprint = f"local:hash-bow-v1:d{dim}:s{seed}"
        self._token_cache: dict[str, np.ndarray] = {}

    def _token_vector(self, token: str) -> np.ndarray:
        cached = self._token_cache.get(token)
        if cached is not None:
            return cached
        digest = hashlib.shake_256(f"{self.seed}\x1f{token}".encode("utf-8")).digest(
            self.dim * 4
        )
        raw = np.frombuffer(digest, dtype="<u4").astype(np.float64)
        vec = (raw / 2.0**32) * 2.0 - 1.0
        self._token_cache[token] = vec
        return vec

    def embed(self, text: str) -> EmbeddingVector:
        if not text:
            raise ValueError("cannot embed empty text")
        tokens = _TOKEN_RE.findall(text.lower()) or [text]
        acc = np.zeros(self.dim, dtype=np.float64)
        for token in tokens:
            acc += self._token_vector(token)
        return EmbeddingVector(tuple(acc.tolist()))


class RemoteEmbedder:
    """Embeddings endpoint client with the same retry discipline."""

    def __init__(
        self,
        url: str,
        model: str,
        dim: int,
        auth_env_var: str = "",
        auth_header: str = "Authorization",
        max_retries: int = 2,
        timeout: float = 60.0,
        transport: Transport | None = None,
        sleeper: Callable[[float], None] = time.sleep,
    ):
        self.url = url
        self.model = model
        self.dim = dim
        self.auth_env_var = auth_env_var
        self.auth_header = auth_header
        self.max_retries = max_retries
        self.timeout = timeout
        self.fingerprint = f"remote:{model}:d{dim}"
        self._transport = transport or _default_transport
        self._sleeper = sleeper

    def _headers(self) -> dict:
        headers = {"Content-Type": "application/json"}
        if self.auth_env_var:
            key = os.environ.get(self.auth_env_var)
            if not key:
                raise BackendConfigError(
                    f"embedder: environment variable {self.auth_env_var!r} is not set"
                )
            value = key if self.auth_header != "Authorization" else f"Bearer {key}"
            headers[self.auth_header] = value
        return headers

    def embed(self, text: str) -> EmbeddingVector:
        if not text:
            raise ValueError("cannot embed empty text")
        body = _post_with_retries(
            self._transport,
            self.url,
            self._headers(),
            {"model": self.model, "input": text},
            self.timeout,
            self.max_retries,
            self._sleeper,
            what=f"embedder {self.model!r}",
        )
        try:
            values = body["data"][0]["embedding"]
        except (KeyError, IndexError, TypeError):
            raise TransportError(
                f"embedder {self.model!r}: malformed response envelope"
            ) from None
        vec = EmbeddingVector(tuple(float(v) for v in values))
        if vec.dim != self.dim:
            raise TransportError(
                f"embedder {self.model!r}: got dimension {vec.dim}, expected {self.dim}"
            )
        return vec


def embed_text(embedder, text: str) -> EmbeddingVector:
    """Embed one text, checking the embedder honors its declared dimension."""
    vec = embedder.embed(text)
    if vec.dim != embedder.dim:
        raise TransportError(
            f"embedder {embedder.fingerprint!r} returned dimension {vec.dim}, "
            f"declared {embedder.dim}"
        )
    return vec


# ---------------------------------------------------------------------------
# Configuration files
# ---------------------------------------------------------------------------


def load_backend_config(path: Union[str, Path]) -> dict[str, BackendConfig]:
    """Parse the {backend_id -> settings} config map.

    API keys are never stored in the file; entries name the environment
    variable that holds them.
    """
    p = Path(path)
    if not p.exists():
        raise BackendConfigError(f"backend config {p} does not exist")
    try:
        data = json.loads(p.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise BackendConfigError(f"{p}: not valid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise BackendConfigError(f"{p}: expected an object of backend entries")
    configs: dict[str, BackendConfig] = {}
    for backend_id, entry in data.items():
        kind = entry.get("kind")
        if kind not in ("remote", "mock"):
            raise BackendConfigError(
                f"{p}: backend {backend_id!r} has unknown kind {kind!r}"
            )
        configs[backend_id] = BackendConfig(
            backend_id=backend_id,
            kind=kind,
            url=entry.get("url", ""),
            auth_env_var=entry.get("auth_env_var", ""),
            auth_header=entry.get("auth_header", "Authorization"),
            model=entry.get("model", ""),
            vision=bool(entry.get("vision", kind == "mock")),
            max_retries=int(entry.get("max_retries", 2)),
            timeout=float(entry.get("timeout", 60.0)),
            max_in_flight=int(entry.get("max_in_flight", 8)),
            script_file=entry.get("script_file", ""),
        )
    return configs


def load_mock_script(path: Union[str, Path]) -> dict:
    p = Path(path)
    if not p.exists():
        raise BackendConfigError(f"mock script {p} does not exist")
    try:
        script = json.loads(p.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise BackendConfigError(f"{p}: not valid JSON: {exc}") from exc
    if not isinstance(script, dict):
        raise BackendConfigError(f"{p}: expected an object of tag -> reply entries")
    return script


def build_backend(
    config: BackendConfig,
    base_dir: Union[str, Path, None] = None,
    transport: Transport | None = None,
) -> ChatBackend:
    """Instantiate a backend from its config entry."""
    if config.kind == "mock":
        script: dict = {}
        if config.script_file:
            script_path = Path(config.script_file)
            if base_dir is not None and not script_path.is_absolute():
                script_path = Path(base_dir) / script_path
            script = load_mock_script(script_path)
        return MockChatBackend(config.backend_id, script, vision=config.vision)
    return RemoteChatBackend(config, transport=transport)
