"""Uniform client for multimodal chat endpoints.

One canonical request shape (text part + base64 image part) with per-provider
adapters, a content-addressed response cache for safe resumability, exponential
backoff on transport faults, a per-endpoint token bucket, and a deterministic
scriptable mock backend. ``send`` never raises for per-sample failures: every
dispatched request yields exactly one outcome.
"""

from __future__ import annotations

import base64
import hashlib
import io
import json
import os
import threading
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Dict, List, Optional, Union

from PIL import Image

STATUS_OK = "ok"
STATUS_TRANSPORT_ERROR = "transport_error"
STATUS_PROVIDER_REJECTION = "provider_rejection"
STATUS_TIMEOUT = "timeout"

ADAPTERS = ("openai", "anthropic", "google", "mock")

NORMALIZED_MARKER = b"hailgauge-normalized-v1"
MAX_IMAGE_SIDE = 2048
_JPEG_QUALITY = 90


class ImageError(ValueError):
    pass


class GatewayError(RuntimeError):
    pass


class TransportFault(Exception):
    """Retryable transport-level failure (connection, 5xx, 429)."""


class TransportTimeout(TransportFault):
    pass


class ProviderRejection(Exception):
    """Endpoint refused the input (e.g. image encoding issue); never retried."""


@dataclass
class ModelEndpoint:
    model_id: str
    adapter: str = "mock"
    base_url: str = ""
    auth_env_var: str = ""
    max_output_tokens: int = 100
    temperature: float = 0.0
    request_timeout: float = 60.0
    max_retries: int = 3
    rate_limit_per_sec: float = 1.0
    mock_script: Optional[str] = None

    def __post_init__(self) -> None:
        if self.adapter not in ADAPTERS:
            raise GatewayError(f"unknown adapter: {self.adapter!r}")
        if self.max_output_tokens < 1:
            raise GatewayError("max_output_tokens must be >= 1")
        if self.temperature < 0:
            raise GatewayError("temperature must be >= 0")


def idempotency_key(
    model_id: str,
    temperature: float,
    max_output_tokens: int,
    prompt_text: str,
    image_bytes: bytes,
) -> str:
    digest = hashlib.sha256()
    digest.update(model_id.encode("utf-8"))
    digest.update(b"\x00")
    digest.update(repr(float(temperature)).encode("ascii"))
    digest.update(b"\x00")
    digest.update(str(max_output_tokens).encode("ascii"))
    digest.update(b"\x00")
    digest.update(prompt_text.encode("utf-8"))
    digest.update(b"\x00")
    digest.update(hashlib.sha256(image_bytes).digest())
    return digest.hexdigest()


@dataclass
class VisionRequest:
    endpoint: ModelEndpoint
    prompt_text: str
    image_bytes: bytes
    media_type: str = "image/jpeg"
    # Free-form routing tag ("<sample_id>/<step>"); not part of the cache key.
    tag: Optional[str] = None

    @property
    def idempotency_key(self) -> str:
        return idempotency_key(
            self.endpoint.model_id,
            self.endpoint.temperature,
            self.endpoint.max_output_tokens,
            self.prompt_text,
            self.image_bytes,
        )


@dataclass(frozen=True)
class VisionOutcome:
    status: str
    raw_text: Optional[str] = None
    latency_ms: int = 0
    attempt_count: int = 1
    cached: bool = False

    def __post_init__(self) -> None:
        if (self.status == STATUS_OK) != (self.raw_text is not None):
            raise GatewayError("raw_text must be present exactly when status is ok")

    def to_dict(self) -> dict:
        return {
            "status": self.status,
            "raw_text": self.raw_text,
            "latency_ms": self.latency_ms,
            "attempt_count": self.attempt_count,
        }

    @classmethod
    def from_dict(cls, data: dict, *, cached: bool = False) -> "VisionOutcome":
        return cls(
            status=data["status"],
            raw_text=data.get("raw_text"),
            latency_ms=data.get("latency_ms", 0),
            attempt_count=data.get("attempt_count", 1),
            cached=cached,
        )


def normalize_image(image_bytes: bytes) -> bytes:
    """Re-encode as baseline JPEG, longest side <= 2048 px, metadata stripped.

    Idempotent: normalized output carries a marker comment and is returned
    unchanged on a second pass, so cache keys stay stable.
    """
    try:
        image = Image.open(io.BytesIO(image_bytes))
        image.load()
    except Exception:
        raise ImageError("corrupt image") from None
    if image.format == "JPEG" and image.info.get("comment") == NORMALIZED_MARKER:
        return image_bytes
    image = image.convert("RGB")
    width, height = image.size
    longest = max(width, height)
    if longest > MAX_IMAGE_SIDE:
        scale = MAX_IMAGE_SIDE / longest
        new_size = (max(1, round(width * scale)), max(1, round(height * scale)))
        image = image.resize(new_size, Image.LANCZOS)
    buffer = io.BytesIO()
    image.save(
        buffer,
        format="JPEG",
        quality=_JPEG_QUALITY,
        subsampling=2,
        comment=NORMALIZED_MARKER,
    )
    return buffer.getvalue()


class TokenBucket:
    """Blocking per-endpoint rate limiter; rate <= 0 disables limiting."""

    def __init__(
        self,
        rate_per_sec: float,
        *,
        clock: Callable[[], float] = time.monotonic,
        sleeper: Callable[[float], None] = time.sleep,
    ) -> None:
        self._interval = 1.0 / rate_per_sec if rate_per_sec > 0 else 0.0
        self._clock = clock
        self._sleeper = sleeper
        self._lock = threading.Lock()
        self._next_free = 0.0

    def acquire(self) -> None:
        if self._interval == 0.0:
            return
        with self._lock:
            now = self._clock()
            wait = self._next_free - now
            self._next_free = max(self._next_free, now) + self._interval
        if wait > 0:
            self._sleeper(wait)


ScriptedReply = Union[str, dict, VisionOutcome]


def _outcome_from_scripted(entry: ScriptedReply) -> str:
    """Resolve a scripted entry to reply text, or raise the scripted failure."""
    if isinstance(entry, VisionOutcome):
        if entry.status == STATUS_OK:
            return entry.raw_text or ""
        entry = {"status": entry.status}
    if isinstance(entry, dict):
        status = entry.get("status", STATUS_OK)
        if status == STATUS_OK:
            return str(entry.get("text", ""))
        if status == STATUS_PROVIDER_REJECTION:
            raise ProviderRejection(entry.get("text", "scripted rejection"))
        if status == STATUS_TIMEOUT:
            raise TransportTimeout(entry.get("text", "scripted timeout"))
        raise TransportFault(entry.get("text", "scripted transport fault"))
    return str(entry)


class MockBackend:
    """Deterministic scripted transport.

    Scripts resolve in order: idempotency-key map, responder callable over the
    request (handy with request tags), then a consumable sequence, then the
    default. Counts every invocation for instrumentation.
    """

    def __init__(
        self,
        key_map: Optional[Dict[str, ScriptedReply]] = None,
        sequence: Optional[List[ScriptedReply]] = None,
        responder: Optional[Callable[[VisionRequest], Optional[ScriptedReply]]] = None,
        default: ScriptedReply = "4.0",
        reject_unknown: bool = False,
    ) -> None:
        self.key_map = dict(key_map or {})
        self.sequence = list(sequence or [])
        self.responder = responder
        self.default = default
        self.reject_unknown = reject_unknown
        self.calls = 0
        self._lock = threading.Lock()

    @classmethod
    def from_script_file(cls, path: Path | str) -> "MockBackend":
        """Load a per-sample script: {"default": ..., "samples": {id: {step: reply}}}.

        Requests are routed by their tag ("<sample_id>/<step>" with step one of
        p1, step1, step2).
        """
        data = json.loads(Path(path).read_text(encoding="utf-8"))
        samples = data.get("samples", {})
        default = data.get("default", "4.0")

        def responder(request: VisionRequest) -> Optional[ScriptedReply]:
            if not request.tag or "/" not in request.tag:
                return None
            sample_id, step = request.tag.rsplit("/", 1)
            entry = samples.get(sample_id)
            if entry is None:
                return None
            return entry.get(step)

        return cls(responder=responder, default=default,
                   reject_unknown=bool(data.get("reject_unknown", False)))

    def __call__(self, request: VisionRequest) -> str:
        with self._lock:
            self.calls += 1
            entry: Optional[ScriptedReply] = self.key_map.get(request.idempotency_key)
            if entry is None and self.responder is not None:
                entry = self.responder(request)
            if entry is None and self.sequence:
                entry = self.sequence.pop(0)
        if entry is None:
            if self.reject_unknown:
                raise ProviderRejection("no scripted reply")
            entry = self.default
        return _outcome_from_scripted(entry)


def mock_backend(
    script: Union[Dict[str, ScriptedReply], List[ScriptedReply], Callable, None] = None,
    **kwargs,
) -> MockBackend:
    """Build a mock endpoint handle from a key map, a sequence, or a callable."""
    if script is None:
        return MockBackend(**kwargs)
    if isinstance(script, dict):
        return MockBackend(key_map=script, **kwargs)
    if callable(script):
        return MockBackend(responder=script, **kwargs)
    return MockBackend(sequence=list(script), **kwargs)


# --- provider adapters -------------------------------------------------------

def _api_key(endpoint: ModelEndpoint) -> str:
    key = os.environ.get(endpoint.auth_env_var, "") if endpoint.auth_env_var else ""
    if not key:
        raise TransportFault(f"auth env var {endpoint.auth_env_var!r} not set")
    return key


def shape_openai(request: VisionRequest) -> tuple:
    endpoint = request.endpoint
    url = endpoint.base_url.rstrip("/") + "/chat/completions"
    headers = {"Authorization": f"Bearer {_api_key(endpoint)}"}
    b64 = base64.b64encode(request.image_bytes).decode("ascii")
    body = {
        "model": endpoint.model_id,
        "max_tokens": endpoint.max_output_tokens,
        "temperature": endpoint.temperature,
        "messages": [
            {
                "role": "user",
                "content": [
                    {"type": "text", "text": request.prompt_text},
                    {
                        "type": "image_url",
                        "image_url": {"url": f"data:{request.media_type};base64,{b64}"},
                    },
                ],
            }
        ],
    }
    return url, headers, body


def extract_openai(data: dict) -> str:
    return data["choices"][0]["message"]["content"]


def shape_anthropic(request: VisionRequest) -> tuple:
    endpoint = request.endpoint
    url = endpoint.base_url.rstrip("/") + "/v1/messages"
    headers = {"x-api-key": _api_key(endpoint), "anthropic-version": "2023-06-01"}
    body = {
        "model": endpoint.model_id,
        "max_tokens": endpoint.max_output_tokens,
        "temperature": endpoint.temperature,
        "messages": [
            {
                "role": "user",
                "content": [
                    {
                        "type": "image",
                        "source": {
                            "type": "base64",
                            "media_type": request.media_type,
                            "data": base64.b64encode(request.image_bytes).decode("ascii"),
                        },
                    },
                    {"type": "text", "text": request.prompt_text},
                ],
            }
        ],
    }
    return url, headers, body


def extract_anthropic(data: dict) -> str:
    return data["content"][0]["text"]


def shape_google(request: VisionRequest) -> tuple:
    endpoint = request.endpoint
    url = (
        endpoint.base_url.rstrip("/")
        + f"/v1beta/models/{endpoint.model_id}:generateContent"
    )
    headers = {"x-goog-api-key": _api_key(endpoint)}
    body = {
        "contents": [
            {
                "parts": [
                    {"text": request.prompt_text},
                    {
                        "inline_data": {
                            "mime_type": request.media_type,
                            "data": base64.b64encode(request.image_bytes).decode("ascii"),
                        }
                    },
                ]
            }
        ],
        "generationConfig": {
            "maxOutputTokens": endpoint.max_output_tokens,
            "temperature": endpoint.temperature,
        },
    }
    return url, headers, body


def extract_google(data: dict) -> str:
    return data["candidates"][0]["content"]["parts"][0]["text"]


_SHAPERS = {"openai": shape_openai, "anthropic": shape_anthropic, "google": shape_google}
_EXTRACTORS = {"openai": extract_openai, "anthropic": extract_anthropic, "google": extract_google}


class HttpTransport:
    """Live HTTP transport for one endpoint; raises the failure taxonomy."""

    def __init__(self, endpoint: ModelEndpoint) -> None:
        self.endpoint = endpoint
        self.shape = _SHAPERS[endpoint.adapter]
        self.extract = _EXTRACTORS[endpoint.adapter]

    def __call__(self, request: VisionRequest) -> str:
        import requests

        url, headers, body = self.shape(request)
        try:
            response = requests.post(
                url, headers=headers, json=body, timeout=self.endpoint.request_timeout
            )
        except requests.exceptions.Timeout as exc:
            raise TransportTimeout(str(exc)) from exc
        except requests.exceptions.RequestException as exc:
            raise TransportFault(str(exc)) from exc
        if response.status_code in (408, 429) or response.status_code >= 500:
            raise TransportFault(f"HTTP {response.status_code}")
        if response.status_code >= 400:
            raise ProviderRejection(f"HTTP {response.status_code}: {response.text[:200]}")
        try:
            return self.extract(response.json())
        except (KeyError, IndexError, TypeError, ValueError) as exc:
            raise TransportFault(f"malformed provider response: {exc}") from exc


Transport = Callable[[VisionRequest], str]


@dataclass
class _CacheStats:
    hits: int = 0
    misses: int = 0


class Gateway:
    """Cache-first dispatcher over per-endpoint transports."""

    def __init__(
        self,
        cache_dir: Optional[Path | str] = None,
        *,
        backoff_base: float = 0.5,
        sleeper: Callable[[float], None] = time.sleep,
        clock: Callable[[], float] = time.monotonic,
    ) -> None:
        self.cache_dir = Path(cache_dir) if cache_dir is not None else None
        self.backoff_base = backoff_base
        self._sleeper = sleeper
        self._clock = clock
        self._transports: Dict[str, Transport] = {}
        self._limiters: Dict[str, TokenBucket] = {}
        self._cache_lock = threading.Lock()
        self._limiter_lock = threading.Lock()
        self.cache_stats = _CacheStats()

    def register(self, model_id: str, transport: Transport) -> None:
        self._transports[model_id] = transport

    def register_endpoint(self, endpoint: ModelEndpoint) -> None:
        if endpoint.model_id in self._transports:
            return
        if endpoint.adapter == "mock":
            transport = (
                MockBackend.from_script_file(endpoint.mock_script)
                if endpoint.mock_script
                else MockBackend()
            )
        else:
            transport = HttpTransport(endpoint)
        self.register(endpoint.model_id, transport)

    def transport(self, model_id: str) -> Transport:
        return self._transports[model_id]

    def _limiter(self, endpoint: ModelEndpoint) -> TokenBucket:
        with self._limiter_lock:
            limiter = self._limiters.get(endpoint.model_id)
            if limiter is None:
                # Mock endpoints skip limiting; the bucket guards paid APIs.
                rate = 0.0 if endpoint.adapter == "mock" else endpoint.rate_limit_per_sec
                limiter = TokenBucket(rate, clock=self._clock, sleeper=self._sleeper)
                self._limiters[endpoint.model_id] = limiter
            return limiter

    def _cache_path(self, model_id: str, key: str) -> Optional[Path]:
        if self.cache_dir is None:
            return None
        return self.cache_dir / model_id / f"{key}.json"

    def _cache_get(self, model_id: str, key: str) -> Optional[VisionOutcome]:
        path = self._cache_path(model_id, key)
        if path is None or not path.is_file():
            return None
        try:
            return VisionOutcome.from_dict(
                json.loads(path.read_text(encoding="utf-8")), cached=True
            )
        except (json.JSONDecodeError, KeyError, GatewayError):
            return None

    def _cache_put(self, model_id: str, key: str, outcome: VisionOutcome) -> None:
        path = self._cache_path(model_id, key)
        if path is None:
            return
        with self._cache_lock:
            path.parent.mkdir(parents=True, exist_ok=True)
            tmp = path.with_suffix(".tmp")
            tmp.write_text(json.dumps(outcome.to_dict()), encoding="utf-8")
            os.replace(tmp, path)

    def send(self, request: VisionRequest) -> VisionOutcome:
        """Dispatch one request; all failure modes land in the outcome status."""
        endpoint = request.endpoint
        key = request.idempotency_key
        cached = self._cache_get(endpoint.model_id, key)
        if cached is not None:
            self.cache_stats.hits += 1
            return cached
        self.cache_stats.misses += 1
        transport = self._transports.get(endpoint.model_id)
        if transport is None:
            self.register_endpoint(endpoint)
            transport = self._transports[endpoint.model_id]
        limiter = self._limiter(endpoint)
        started = self._clock()
        attempts = 0
        failure_status = STATUS_TRANSPORT_ERROR
        while True:
            attempts += 1
            limiter.acquire()
            try:
                text = transport(request)
                outcome = VisionOutcome(
                    status=STATUS_OK,
                    raw_text=text,
                    latency_ms=int((self._clock() - started) * 1000),
                    attempt_count=attempts,
                )
                self._cache_put(endpoint.model_id, key, outcome)
                return outcome
            except ProviderRejection:
                return VisionOutcome(
                    status=STATUS_PROVIDER_REJECTION,
                    latency_ms=int((self._clock() - started) * 1000),
                    attempt_count=attempts,
                )
            except TransportTimeout:
                failure_status = STATUS_TIMEOUT
            except Exception:
                failure_status = STATUS_TRANSPORT_ERROR
            if attempts > endpoint.max_retries:
                return VisionOutcome(
                    status=failure_status,
                    latency_ms=int((self._clock() - started) * 1000),
                    attempt_count=attempts,
                )
            self._sleeper(self.backoff_base * (2 ** (attempts - 1)))
