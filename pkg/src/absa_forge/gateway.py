"""The one place that talks to language models.

Every generation, judging and translation call goes through :class:`Gateway`,
which can record completions into a cassette, replay them offline, or pass
straight through to an HTTP chat-completions endpoint.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import re
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Protocol, Sequence

from .core import AbsaForgeError, AspectLabel

logger = logging.getLogger(__name__)

ROLES = ("system", "user", "assistant")
SUPPORTED_LANGUAGES = ("en", "fr", "de", "es", "it", "pl")
LANGUAGE_NAMES = {
    "en": "English",
    "fr": "French",
    "de": "German",
    "es": "Spanish",
    "it": "Italian",
    "pl": "Polish",
}


class GatewayError(AbsaForgeError):
    pass


class ReplayMiss(GatewayError, KeyError):
    def __init__(self, fingerprint: str, tag: str = ""):
        self.fingerprint = fingerprint
        self.tag = tag
        super().__init__(f"no cassette entry for {tag or 'request'} {fingerprint[:16]}")

    def __str__(self) -> str:
        return self.args[0]


class TransportError(GatewayError):
    """Transport failure. ``transient`` failures are retried."""

    def __init__(self, message: str, transient: bool = True):
        self.transient = transient
        super().__init__(message)


class RateLimited(TransportError):
    def __init__(self, message: str = "rate limited"):
        super().__init__(message, transient=True)


class JudgeUnparseable(GatewayError, ValueError):
    pass


@dataclass(frozen=True)
class GenParams:
    temperature: float = 0.0
    top_p: float = 1.0
    max_tokens: int = 1024
    json_mode: bool = False

    def __post_init__(self) -> None:
        if not 0.0 <= self.temperature <= 2.0:
            raise ValueError(f"temperature must be in [0, 2], got {self.temperature}")
        if not 0.0 < self.top_p <= 1.0:
            raise ValueError(f"top_p must be in (0, 1], got {self.top_p}")
        if int(self.max_tokens) < 1:
            raise ValueError("max_tokens must be positive")


@dataclass(frozen=True)
class Message:
    role: str
    content: str

    def __post_init__(self) -> None:
        if self.role not in ROLES:
            raise ValueError(f"role must be one of {ROLES}, got {self.role!r}")
        if not isinstance(self.content, str):
            raise TypeError("message content must be a string")


@dataclass(frozen=True)
class ChatRequest:
    messages: tuple[Message, ...]
    params: GenParams = field(default_factory=GenParams)
    tag: str = ""

    def __post_init__(self) -> None:
        msgs = tuple(m if isinstance(m, Message) else Message(*m) for m in self.messages)
        if not msgs:
            raise ValueError("a request needs at least one message")
        object.__setattr__(self, "messages", msgs)

    @classmethod
    def chat(cls, system: str | None, user: str, params: GenParams | None = None, tag: str = "") -> ChatRequest:
        msgs = [Message("system", system)] if system else []
        msgs.append(Message("user", user))
        return cls(tuple(msgs), params or GenParams(), tag)

    @property
    def user_text(self) -> str:
        return "\n".join(m.content for m in self.messages if m.role == "user")

    def canonical(self) -> str:
        payload = {
            "messages": [[m.role, m.content] for m in self.messages],
            "params": asdict(self.params),
        }
        return json.dumps(payload, sort_keys=True, ensure_ascii=False, separators=(",", ":"))

    @property
    def fingerprint(self) -> str:
        return hashlib.sha256(self.canonical().encode("utf-8")).hexdigest()


class Cassette:
    """Fingerprint to completion store backed by a JSON file."""

    MODES = ("record", "replay", "passthrough")

    def __init__(self, entries: dict[str, str] | None = None, mode: str = "replay", path: str | Path | None = None):
        if mode not in self.MODES:
            raise ValueError(f"cassette mode must be one of {self.MODES}")
        self.entries = dict(entries or {})
        self.mode = mode
        self.path = Path(path) if path else None
        self._lock = threading.Lock()
        self._dirty = False

    @classmethod
    def load(cls, path: str | Path, mode: str = "replay") -> Cassette:
        path = Path(path)
        entries = {}
        if path.exists():
            entries = json.loads(path.read_text(encoding="utf-8"))
        elif mode == "replay":
            raise FileNotFoundError(path)
        return cls(entries, mode=mode, path=path)

    def __len__(self) -> int:
        return len(self.entries)

    def __contains__(self, fingerprint: str) -> bool:
        return fingerprint in self.entries

    def get(self, fingerprint: str) -> str | None:
        return self.entries.get(fingerprint)

    def put(self, fingerprint: str, response: str) -> None:
        with self._lock:
            self.entries[fingerprint] = response
            self._dirty = True

    def add(self, request: ChatRequest, response: str) -> None:
        self.put(request.fingerprint, response)

    def dumps(self) -> str:
        with self._lock:
            return json.dumps(self.entries, sort_keys=True, ensure_ascii=False, indent=1) + "\n"

    def save(self, path: str | Path | None = None) -> None:
        target = Path(path) if path else self.path
        if target is None:
            return
        target.write_text(self.dumps(), encoding="utf-8")
        self._dirty = False


class Transport(Protocol):
    def __call__(self, request: ChatRequest) -> str: ...


class FailingTransport:
    """Transport that fails on contact; proves replay never reaches the network."""

    def __init__(self) -> None:
        self.contacts = 0

    def __call__(self, request: ChatRequest) -> str:
        self.contacts += 1
        raise AssertionError("network contact attempted")


class ScriptedTransport:
    """Answers requests with a Python function; used to craft cassettes."""

    def __init__(self, respond: Callable[[ChatRequest], str]):
        self.respond = respond
        self.calls = 0
        self._lock = threading.Lock()

    def __call__(self, request: ChatRequest) -> str:
        with self._lock:
            self.calls += 1
        return self.respond(request)


class HttpTransport:
    """POSTs to an OpenAI-style ``/chat/completions`` endpoint."""

    def __init__(self, endpoint: str, model: str, token: str | None = None, timeout: float = 120.0, http_transport=None):
        import httpx

        self.url = endpoint.rstrip("/")
        if not self.url.endswith("/chat/completions"):
            self.url += "/chat/completions"
        self.model = model
        headers = {"Content-Type": "application/json"}
        if token:
            headers["Authorization"] = f"Bearer {token}"
        self._client = httpx.Client(headers=headers, timeout=timeout, transport=http_transport)
        self._httpx = httpx

    def payload(self, request: ChatRequest) -> dict:
        body = {
            "model": self.model,
            "messages": [{"role": m.role, "content": m.content} for m in request.messages],
            "temperature": request.params.temperature,
            "top_p": request.params.top_p,
            "max_tokens": request.params.max_tokens,
        }
        if request.params.json_mode:
            body["response_format"] = {"type": "json_object"}
        return body

    def __call__(self, request: ChatRequest) -> str:
        try:
            resp = self._client.post(self.url, json=self.payload(request))
        except self._httpx.TransportError as exc:
            raise TransportError(f"{type(exc).__name__}: {exc}") from exc
        if resp.status_code == 429:
            raise RateLimited(f"HTTP 429 from {self.url}")
        if resp.status_code >= 500:
            raise TransportError(f"HTTP {resp.status_code} from {self.url}")
        if resp.status_code >= 400:
            raise TransportError(f"HTTP {resp.status_code}: {resp.text[:200]}", transient=False)
        try:
            return resp.json()["choices"][0]["message"]["content"] or ""
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise TransportError(f"malformed completion payload: {exc}", transient=False) from exc

    def close(self) -> None:
        self._client.close()


@dataclass(frozen=True)
class RetryPolicy:
    max_attempts: int = 5
    base_delay: float = 1.0
    factor: float = 2.0
    max_delay: float = 60.0

    def delays(self) -> list[float]:
        """Sleep before each retry; length ``max_attempts - 1``, non-decreasing."""
        out = []
        d = self.base_delay
        for _ in range(max(self.max_attempts - 1, 0)):
            out.append(min(d, self.max_delay))
            d *= self.factor
        return out


@dataclass
class GatewayConfig:
    endpoint: str | None = None
    model: str = "default"
    token_env: str = "ABSA_FORGE_API_KEY"
    cassette: str | None = None
    mode: str = "replay"
    max_attempts: int = 5
    base_delay: float = 1.0
    max_delay: float = 60.0
    concurrency: int = 8
    timeout: float = 120.0

    @classmethod
    def from_dict(cls, d: dict | None) -> GatewayConfig:
        d = dict(d or {})
        known = {k: d.pop(k) for k in list(d) if k in cls.__dataclass_fields__}
        if d:
            raise ValueError(f"unknown gateway config keys: {sorted(d)}")
        return cls(**known)


class Gateway:
    def __init__(
        self,
        cassette: Cassette | None = None,
        transport: Transport | None = None,
        retry: RetryPolicy | None = None,
        concurrency: int = 8,
        sleep: Callable[[float], None] = time.sleep,
        languages: Sequence[str] = SUPPORTED_LANGUAGES,
    ):
        if cassette is None:
            cassette = Cassette(mode="passthrough")
        if cassette.mode != "replay" and transport is None:
            raise ValueError(f"{cassette.mode} mode needs a transport")
        self.cassette = cassette
        self.transport = transport
        self.retry = retry or RetryPolicy()
        self.concurrency = max(1, int(concurrency))
        self._sleep = sleep
        self.languages = tuple(languages)
        self._count_lock = threading.Lock()
        self.calls: dict[str, int] = {}
        self.transport_calls = 0

    @classmethod
    def replay(cls, entries: dict[str, str] | Cassette, **kw) -> Gateway:
        cassette = entries if isinstance(entries, Cassette) else Cassette(entries, mode="replay")
        return cls(cassette, **kw)

    @classmethod
    def from_config(cls, config: GatewayConfig) -> Gateway:
        cassette = None
        if config.cassette:
            cassette = Cassette.load(config.cassette, mode=config.mode)
        elif config.mode != "passthrough":
            raise ValueError(f"{config.mode} mode needs a cassette path")
        transport = None
        if config.mode != "replay":
            if not config.endpoint:
                raise ValueError("record/passthrough mode needs an endpoint")
            transport = HttpTransport(config.endpoint, config.model, os.environ.get(config.token_env), config.timeout)
        retry = RetryPolicy(config.max_attempts, config.base_delay, max_delay=config.max_delay)
        return cls(cassette, transport, retry, config.concurrency)

    @property
    def mode(self) -> str:
        return self.cassette.mode

    def _count(self, tag: str) -> None:
        with self._count_lock:
            self.calls[tag or "untagged"] = self.calls.get(tag or "untagged", 0) + 1

    def _send(self, request: ChatRequest) -> str:
        delays = self.retry.delays()
        attempt = 0
        while True:
            attempt += 1
            with self._count_lock:
                self.transport_calls += 1
            try:
                return self.transport(request)
            except TransportError as exc:
                if not exc.transient or attempt >= self.retry.max_attempts:
                    raise
                delay = delays[attempt - 1]
                logger.warning("transient failure (%s), retry %d in %.1fs", exc, attempt, delay)
                self._sleep(delay)

    def complete(self, request: ChatRequest) -> str:
        self._count(request.tag)
        fp = request.fingerprint
        mode = self.cassette.mode
        if mode in ("replay", "record"):
            hit = self.cassette.get(fp)
            if hit is not None:
                return hit
            if mode == "replay":
                raise ReplayMiss(fp, request.tag)
        response = self._send(request)
        if mode == "record":
            self.cassette.put(fp, response)
        return response

    def complete_many(self, requests: Sequence[ChatRequest]) -> list[str | GatewayError]:
        """Complete requests concurrently; results keep input order.

        Gateway failures are returned in place rather than raised so one bad
        request does not abort a batch.
        """

        def one(req: ChatRequest) -> str | GatewayError:
            try:
                return self.complete(req)
            except GatewayError as exc:
                return exc

        if len(requests) <= 1 or self.concurrency == 1:
            return [one(r) for r in requests]
        with ThreadPoolExecutor(max_workers=min(self.concurrency, len(requests))) as pool:
            return list(pool.map(one, requests))

    def save(self) -> None:
        if self.cassette.mode == "record":
            self.cassette.save()

    def close(self) -> None:
        self.save()
        close = getattr(self.transport, "close", None)
        if close:
            close()

    def __enter__(self) -> Gateway:
        return self

    def __exit__(self, *exc) -> None:
        self.close()

    # -- task helpers -------------------------------------------------------

    def judge_aspect_absent(self, text: str, aspect: AspectLabel | str) -> bool:
        return parse_verdict(self.complete(judge_request(text, aspect)))

    def translate_text(self, text: str, target_language: str, source_language: str = "en") -> str:
        if target_language not in self.languages:
            raise ValueError(f"unsupported target language {target_language!r}")
        if target_language == source_language:
            return text
        return self.complete(translation_request(text, target_language, source_language)).strip()


JUDGE_SYSTEM = (
    "You are a meticulous annotator for aspect-based sentiment analysis. "
    "You decide whether a text talks about a given aspect."
)


def judge_request(text: str, aspect: AspectLabel | str) -> ChatRequest:
    name = aspect.name if isinstance(aspect, AspectLabel) else str(aspect)
    user = (
        f"Text:\n{text}\n\n"
        f"Aspect: {name}\n\n"
        f'Is the aspect "{name}" absent from the text, meaning it is mentioned '
        "neither explicitly nor implicitly? Answer with a single word: yes or no."
    )
    return ChatRequest.chat(JUDGE_SYSTEM, user, GenParams(temperature=0.0, top_p=1.0, max_tokens=4), tag="judge")


_WORD = re.compile(r"[^\W\d_]+")


def parse_verdict(raw: str) -> bool:
    """``True`` for yes, ``False`` for no, judged on the first alphabetic token."""
    m = _WORD.search(raw or "")
    token = m.group(0).lower() if m else ""
    if token == "yes":
        return True
    if token == "no":
        return False
    raise JudgeUnparseable(f"judge verdict is neither yes nor no: {raw!r}")


def translation_request(text: str, target_language: str, source_language: str = "en") -> ChatRequest:
    src = LANGUAGE_NAMES.get(source_language, source_language)
    tgt = LANGUAGE_NAMES.get(target_language, target_language)
    user = (
        f"Translate the following text from {src} to {tgt}. Keep the meaning and "
        "tone; reply with the translation only.\n\n"
        f"{text}"
    )
    return ChatRequest.chat(
        "You are a professional translator.", user, GenParams(temperature=0.0, top_p=1.0), tag="translate"
    )

