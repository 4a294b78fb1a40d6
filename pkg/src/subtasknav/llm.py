"""Completion and embedding clients, with an offline fixture store.

A client in fixture mode never touches its transport: completions come
from a table keyed by the SHA-256 of the prompt. Live mode POSTs one JSON
request per completion to ``A2NAV_LLM_ENDPOINT``.
"""
from __future__ import annotations

import hashlib
import json
import math
import os
import time
import urllib.error
import urllib.request
from dataclasses import dataclass
from typing import Callable, Iterable, Protocol, Sequence

import numpy as np

ENV_ENDPOINT = "A2NAV_LLM_ENDPOINT"
ENV_API_KEY = "A2NAV_LLM_API_KEY"
ENV_MODEL = "A2NAV_LLM_MODEL"

MAX_RETRIES = 3
BACKOFF_START = 1.0  # seconds; doubles after every failed attempt
EMBED_DIM = 256


class LlmError(Exception):
    """Base class for completion-client errors."""


class LlmUnavailable(LlmError):
    """No endpoint is configured, or it kept failing after every retry."""


class AuthError(LlmError):
    """The endpoint rejected the credentials."""


class FixtureMiss(LlmError):
    """Fixture mode got a prompt whose hash is not in the store."""

    def __init__(self, digest: str):
        super().__init__(f"no fixture for prompt hash {digest}")
        self.digest = digest


@dataclass(frozen=True)
class CompletionRequest:
    prompt: str
    max_tokens: int = 256
    temperature: float = 0.0
    stop: tuple[str, ...] | None = None

    def __post_init__(self):
        if not self.prompt:
            raise ValueError("prompt must be non-empty")
        if self.max_tokens <= 0:
            raise ValueError("max_tokens must be positive")
        if self.temperature < 0:
            raise ValueError("temperature must be non-negative")
        if self.stop is not None:
            object.__setattr__(self, "stop", tuple(self.stop))

    def to_json(self) -> dict:
        body = {"prompt": self.prompt, "max_tokens": self.max_tokens, "temperature": self.temperature}
        if self.stop:
            body["stop"] = list(self.stop)
        return body


def prompt_hash(prompt: str) -> str:
    return hashlib.sha256(prompt.encode("utf-8")).hexdigest()


class FixtureStore:
    """Read-only map from prompt hash to a canned completion."""

    def __init__(self, table: dict[str, str] | None = None):
        self._table = dict(table or {})

    def __len__(self) -> int:
        return len(self._table)

    def __contains__(self, prompt: str) -> bool:
        return prompt_hash(prompt) in self._table

    def lookup(self, prompt: str) -> str:
        digest = prompt_hash(prompt)
        try:
            return self._table[digest]
        except KeyError:
            raise FixtureMiss(digest) from None

    @classmethod
    def from_records(cls, records: Iterable[dict]) -> FixtureStore:
        table = {}
        for i, rec in enumerate(records, 1):
            try:
                table[str(rec["hash"])] = str(rec["completion"])
            except (KeyError, TypeError):
                raise ValueError(f"fixture record {i}: expected keys 'hash' and 'completion'") from None
        return cls(table)

    @classmethod
    def load(cls, path: str | os.PathLike) -> FixtureStore:
        with open(path, encoding="utf-8") as fh:
            return cls.from_records(json.loads(line) for line in fh if line.strip())

    @staticmethod
    def record(prompt: str, completion: str) -> dict:
        return {"hash": prompt_hash(prompt), "completion": completion}


# -- transport ---------------------------------------------------------------


class TransportError(Exception):
    """Network-level failure; ``status`` is None when no HTTP response arrived."""

    def __init__(self, message: str, status: int | None = None):
        super().__init__(message)
        self.status = status


Transport = Callable[[str, bytes, dict], str]


def urllib_transport(url: str, body: bytes, headers: dict, timeout: float = 60.0) -> str:
    req = urllib.request.Request(url, data=body, headers=headers, method="POST")
    try:
        with urllib.request.urlopen(req, timeout=timeout) as resp:
            return resp.read().decode("utf-8")
    except urllib.error.HTTPError as exc:
        raise TransportError(f"HTTP {exc.code}", exc.code) from exc
    except (urllib.error.URLError, OSError) as exc:
        raise TransportError(str(exc)) from exc


def extract_text(body: str) -> str:
    """Completion text from a response body.

    JSON bodies in the common provider shapes (``choices[0].text``,
    ``choices[0].message.content``, ``completion``, ``text``) are unwrapped;
    anything else is returned verbatim.
    """
    try:
        doc = json.loads(body)
    except ValueError:
        return body
    if isinstance(doc, dict):
        choices = doc.get("choices")
        if isinstance(choices, list) and choices:
            first = choices[0]
            if isinstance(first, dict):
                if isinstance(first.get("text"), str):
                    return first["text"]
                msg = first.get("message")
                if isinstance(msg, dict) and isinstance(msg.get("content"), str):
                    return msg["content"]
        for key in ("completion", "text", "output"):
            if isinstance(doc.get(key), str):
                return doc[key]
    return body


class LlmClient:
    """Completion client; fixture mode when ``fixtures`` is given."""

    def __init__(
        self,
        endpoint: str | None = None,
        api_key: str | None = None,
        model: str | None = None,
        fixtures: FixtureStore | None = None,
        transport: Transport | None = None,
        sleep: Callable[[float], None] = time.sleep,
    ):
        self.endpoint = endpoint
        self.api_key = api_key
        self.model = model
        self.fixtures = fixtures
        self.transport = transport or urllib_transport
        self.sleep = sleep

    @classmethod
    def from_env(cls, fixtures: FixtureStore | None = None, **kwargs) -> LlmClient:
        return cls(
            endpoint=os.environ.get(ENV_ENDPOINT) or None,
            api_key=os.environ.get(ENV_API_KEY) or None,
            model=os.environ.get(ENV_MODEL) or None,
            fixtures=fixtures,
            **kwargs,
        )

    def _post(self, url: str, payload: dict) -> str:
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        body = json.dumps(payload).encode("utf-8")
        delay = BACKOFF_START
        last = None
        for attempt in range(MAX_RETRIES + 1):
            try:
                return self.transport(url, body, headers)
            except TransportError as exc:
                if exc.status in (401, 403):
                    raise AuthError(f"endpoint rejected credentials (HTTP {exc.status})") from exc
                if exc.status is not None and exc.status < 500 and exc.status != 429:
                    raise LlmUnavailable(f"endpoint refused request: {exc}") from exc
                last = exc
            if attempt < MAX_RETRIES:
                self.sleep(delay)
                delay *= 2
        raise LlmUnavailable(f"endpoint failed after {MAX_RETRIES} retries: {last}")

    def complete(self, request: CompletionRequest | str) -> str:
        if isinstance(request, str):
            request = CompletionRequest(request)
        if self.fixtures is not None:
            return self.fixtures.lookup(request.prompt)
        if not self.endpoint:
            raise LlmUnavailable(f"no completion endpoint configured (set {ENV_ENDPOINT} or pass fixtures)")
        payload = request.to_json()
        if self.model:
            payload["model"] = self.model
        return extract_text(self._post(self.endpoint, payload))


# -- embeddings --------------------------------------------------------------


class Encoder(Protocol):
    def embed(self, text: str) -> np.ndarray: ...


def _unit(v: np.ndarray) -> np.ndarray:
    n = float(np.linalg.norm(v))
    if n == 0 or not math.isfinite(n):
        raise ValueError("cannot normalize a zero or non-finite vector")
    return v / n


class TrigramEncoder:
    """Bag of hashed character trigrams, L2-normalized.

    Text is lowercased, whitespace collapsed and padded with one space on
    each side, so even a single character yields a trigram. Buckets come
    from BLAKE2b, which keeps vectors identical across processes.
    """

    def __init__(self, dim: int = EMBED_DIM):
        self.dim = dim

    def _bucket(self, gram: str) -> int:
        digest = hashlib.blake2b(gram.encode("utf-8"), digest_size=8).digest()
        return int.from_bytes(digest, "little") % self.dim

    def embed(self, text: str) -> np.ndarray:
        words = text.lower().split()
        if not words:
            raise ValueError("cannot embed empty text")
        padded = f" {' '.join(words)} "
        v = np.zeros(self.dim)
        for i in range(len(padded) - 2):
            v[self._bucket(padded[i : i + 3])] += 1.0
        return _unit(v)


class RemoteEncoder:
    """Embeddings from an HTTP endpoint, sharing a client's retry policy.

    The endpoint receives ``{"input": text, "model": ...}`` and may answer
    with ``{"embedding": [...]}`` or ``{"data": [{"embedding": [...]}]}``.
    """

    def __init__(self, client: LlmClient, endpoint: str):
        self.client = client
        self.endpoint = endpoint

    def embed(self, text: str) -> np.ndarray:
        if not text.strip():
            raise ValueError("cannot embed empty text")
        payload = {"input": text}
        if self.client.model:
            payload["model"] = self.client.model
        body = self.client._post(self.endpoint, payload)
        try:
            doc = json.loads(body)
            vec = doc["embedding"] if "embedding" in doc else doc["data"][0]["embedding"]
            return _unit(np.asarray(vec, dtype=float))
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise LlmUnavailable(f"embedding endpoint returned an unusable body: {exc}") from exc


def cosine(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.dot(a, b) / (np.linalg.norm(a) * np.linalg.norm(b)))


def fixture_records(prompts_and_completions: Sequence[tuple[str, str]]) -> list[dict]:
    return [FixtureStore.record(p, c) for p, c in prompts_and_completions]
