"""Provider clients: LLM text generation and text embedding.

HTTP providers speak small JSON contracts and retry transport failures with
exponential backoff. Replay/mock providers make every pipeline stage runnable
offline and deterministic.
"""
from __future__ import annotations

import hashlib
import logging
import math
import os
import threading
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Protocol, Sequence

import requests

from .detection import EmbeddingVector
from .errors import ConfigError, ProviderError

log = logging.getLogger(__name__)

# Sampling parameters used for all suite/candidate generation calls.
DEFAULT_TEMPERATURE = 0.9
DEFAULT_PRESENCE_PENALTY = 2.0

RETRY_ATTEMPTS = 3
RETRY_BASE_DELAY = 0.5


@dataclass(frozen=True)
class LlmRequest:
    """One text-generation request."""

    prompt: str
    temperature: float = DEFAULT_TEMPERATURE
    presence_penalty: float = DEFAULT_PRESENCE_PENALTY
    provider_id: str = ""

    def __post_init__(self) -> None:
        if not self.prompt:
            raise ValueError("prompt must be nonempty")
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")


class LlmProvider(Protocol):
    def complete(self, request: LlmRequest) -> str: ...


def _with_retries(call, what: str):
    """Run `call` with exponential backoff on transport errors."""
    delay = RETRY_BASE_DELAY
    for attempt in range(1, RETRY_ATTEMPTS + 1):
        try:
            return call()
        except requests.RequestException as exc:
            if attempt == RETRY_ATTEMPTS:
                raise ProviderError(f"{what} failed after {attempt} attempts: {exc}") from exc
            log.warning("%s attempt %d failed (%s); retrying", what, attempt, exc)
            time.sleep(delay)
            delay *= 2
    raise AssertionError("unreachable")


def _api_key_header(api_key_env: str) -> dict[str, str]:
    if not api_key_env:
        return {}
    key = os.environ.get(api_key_env)
    if not key:
        raise ConfigError(f"environment variable {api_key_env} is not set")
    return {"Authorization": f"Bearer {key}"}


class HttpChatProvider:
    """Chat-completion-style HTTP provider.

    POSTs {"model", "messages", "temperature", "presence_penalty"} and reads
    the completion text from the usual response shapes.
    """

    def __init__(
        self,
        url: str,
        model: str = "",
        api_key_env: str = "",
        timeout: float = 120.0,
        session: requests.Session | None = None,
    ) -> None:
        self.url = url
        self.model = model
        self.api_key_env = api_key_env
        self.timeout = timeout
        self._session = session or requests.Session()

    def complete(self, request: LlmRequest) -> str:
        payload = {
            "messages": [{"role": "user", "content": request.prompt}],
            "temperature": request.temperature,
            "presence_penalty": request.presence_penalty,
        }
        if self.model:
            payload["model"] = self.model
        headers = _api_key_header(self.api_key_env)

        def call() -> str:
            resp = self._session.post(
                self.url, json=payload, headers=headers, timeout=self.timeout
            )
            resp.raise_for_status()
            return _extract_text(resp.json())

        return _with_retries(call, f"LLM request to {self.url}")


def _extract_text(body: dict) -> str:
    choices = body.get("choices")
    if choices:
        first = choices[0]
        message = first.get("message")
        if message and "content" in message:
            return message["content"]
        if "text" in first:
            return first["text"]
    for key in ("text", "content"):
        if key in body:
            return body[key]
    raise ProviderError(f"could not find completion text in response keys {sorted(body)}")


def replay_key(prompt: str) -> str:
    """Filename key under which a replay response for `prompt` is stored."""
    return hashlib.sha256(prompt.encode("utf-8")).hexdigest()[:16]


class ReplayProvider:
    """Reads canned responses from a directory, for offline runs and tests.

    Files are named `<replay_key(prompt)>.<seq>.txt`; repeated calls with the
    same prompt consume the sequence in sorted order and then stick on the
    last file.
    """

    def __init__(self, directory: Path | str) -> None:
        self.directory = Path(directory)
        if not self.directory.is_dir():
            raise ConfigError(f"replay directory {self.directory} does not exist")
        self._counts: dict[str, int] = {}
        self._lock = threading.Lock()

    def complete(self, request: LlmRequest) -> str:
        key = replay_key(request.prompt)
        files = sorted(self.directory.glob(f"{key}*.txt"))
        if not files:
            head = request.prompt.splitlines()[0][:60]
            raise ProviderError(
                f"no replay response for prompt key {key} ({head!r}...) in {self.directory}"
            )
        with self._lock:
            idx = self._counts.get(key, 0)
            self._counts[key] = idx + 1
        return files[min(idx, len(files) - 1)].read_text(encoding="utf-8")


def write_replay_responses(directory: Path | str, prompt: str, responses: Sequence[str]) -> None:
    """Store a response sequence for `prompt` in a replay directory."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    key = replay_key(prompt)
    for i, resp in enumerate(responses):
        (directory / f"{key}.{i:03d}.txt").write_text(resp, encoding="utf-8")


class HttpEmbedder:
    """Embedding service client: POST /embed {"texts": [...]}."""

    def __init__(
        self,
        url: str,
        api_key_env: str = "",
        timeout: float = 120.0,
        session: requests.Session | None = None,
    ) -> None:
        self.url = url
        self.api_key_env = api_key_env
        self.timeout = timeout
        self._session = session or requests.Session()

    def embed(self, texts: Sequence[str]) -> list[EmbeddingVector]:
        headers = _api_key_header(self.api_key_env)

        def call() -> list[EmbeddingVector]:
            resp = self._session.post(
                self.url, json={"texts": list(texts)}, headers=headers, timeout=self.timeout
            )
            resp.raise_for_status()
            body = resp.json()
            vectors = [tuple(float(x) for x in vec) for vec in body["vectors"]]
            dim = body.get("dim", len(vectors[0]) if vectors else 0)
            for vec in vectors:
                if len(vec) != dim:
                    raise ProviderError(f"vector length {len(vec)} != declared dim {dim}")
            return vectors

        return _with_retries(call, f"embedding request to {self.url}")


class HashEmbedder:
    """Deterministic mock embedder for tests and offline runs.

    Texts equal after case folding map to identical unit vectors; texts that
    differ after folding map to (hash-)distinct vectors, so verdicts under
    this embedder are exactly predictable.
    """

    def __init__(self, dim: int = 32) -> None:
        if dim < 1:
            raise ValueError("dim must be >= 1")
        self.dim = dim

    def embed(self, texts: Sequence[str]) -> list[EmbeddingVector]:
        return [self._vector(t) for t in texts]

    def _vector(self, text: str) -> EmbeddingVector:
        folded = text.casefold().encode("utf-8")
        raw = b""
        counter = 0
        while len(raw) < self.dim * 8:
            raw += hashlib.sha256(folded + counter.to_bytes(4, "big")).digest()
            counter += 1
        values = [
            int.from_bytes(raw[8 * i : 8 * i + 8], "big") / 2**63 - 1.0 for i in range(self.dim)
        ]
        norm = math.sqrt(sum(v * v for v in values))
        return tuple(v / norm for v in values)
