"""Uniform client for chat-completion endpoints.

Speaks the de-facto chat-completions HTTP JSON protocol (POST to a
completions route with model, messages, temperature, max tokens), with
client-side token-bucket rate limiting per endpoint, exponential-backoff
retries on transient failures, and write-ahead logging of every exchange.
"""

from __future__ import annotations

import hashlib
import json
import os
import threading
import time
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Callable, Iterable, Optional

import httpx
import yaml

RETRYABLE_STATUSES = frozenset({429, 500, 502, 503, 504})


class GatewayError(Exception):
    """Base for gateway failures; never surfaces as a label outcome."""


class TransportError(GatewayError):
    """Retries exhausted; carries the last HTTP status (or 0 for network errors)."""

    def __init__(self, message: str, status: int, attempts: int):
        super().__init__(message)
        self.status = status
        self.attempts = attempts


class ProtocolError(GatewayError):
    """The endpoint answered, but not with a parseable completions body."""


@dataclass(frozen=True)
class EndpointConfig:
    """One chat-completion endpoint in the panel."""

    name: str
    base_url: str
    model_id: str
    api_key_ref: Optional[str] = None  # environment variable holding the key
    temperature: float = 0.0
    max_output_tokens: int = 512
    requests_per_minute: int = 600
    max_retries: int = 3
    timeout_s: float = 60.0
    family: Optional[str] = None  # model family tag for the self-enhancement guard

    def __post_init__(self) -> None:
        if not 0.0 <= self.temperature <= 2.0:
            raise ValueError(f"temperature {self.temperature} outside [0, 2]")
        if self.max_output_tokens <= 0:
            raise ValueError("max_output_tokens must be positive")
        if self.requests_per_minute <= 0:
            raise ValueError("requests_per_minute must be positive")
        if self.max_retries < 0:
            raise ValueError("max_retries must be non-negative")


def load_panel(path: str | Path) -> list[EndpointConfig]:
    """Load a panel config file (JSON or YAML list under key `endpoints`)."""
    path = Path(path)
    raw = path.read_text(encoding="utf-8")
    data = yaml.safe_load(raw) if path.suffix in (".yaml", ".yml") else json.loads(raw)
    entries = data["endpoints"] if isinstance(data, dict) else data
    panel = [EndpointConfig(**entry) for entry in entries]
    names = [endpoint.name for endpoint in panel]
    if len(set(names)) != len(names):
        raise ValueError("endpoint names must be unique within a panel")
    return panel


def panel_hash(panel: Iterable[EndpointConfig]) -> str:
    """Stable digest of a panel configuration, for run manifests."""
    blob = json.dumps([vars(endpoint) for endpoint in panel], sort_keys=True)
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:16]


@dataclass(frozen=True)
class ChatExchange:
    """One request/response round trip, with timing and usage accounting."""

    endpoint_name: str
    request_messages: tuple[tuple[str, str], ...]
    response_text: str
    latency_s: float
    input_tokens: int
    output_tokens: int
    attempt_count: int
    timestamp: str  # UTC, RFC 3339

    def __post_init__(self) -> None:
        if self.attempt_count < 1:
            raise ValueError("attempt_count must be >= 1")
        if self.latency_s < 0:
            raise ValueError("latency must be >= 0")

    @property
    def ref(self) -> str:
        """Content-addressed reference, stable across identical exchanges."""
        blob = json.dumps(
            [self.endpoint_name, list(self.request_messages), self.response_text]
        )
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:16]

    def to_dict(self) -> dict:
        return {
            "type": "exchange",
            "endpoint": self.endpoint_name,
            "messages": [list(pair) for pair in self.request_messages],
            "response_text": self.response_text,
            "latency_s": self.latency_s,
            "input_tokens": self.input_tokens,
            "output_tokens": self.output_tokens,
            "attempt_count": self.attempt_count,
            "timestamp": self.timestamp,
            "ref": self.ref,
        }


class TokenBucket:
    """Client-side per-endpoint rate limiter.

    Admits one request per period (period = 60 / requests_per_minute
    seconds); callers block until a slot is free. Thread-safe.
    """

    def __init__(
        self,
        requests_per_minute: int,
        clock: Callable[[], float] = time.monotonic,
        sleep: Callable[[float], None] = time.sleep,
    ):
        self.period = 60.0 / requests_per_minute
        self._clock = clock
        self._sleep = sleep
        self._lock = threading.Lock()
        self._next_free = 0.0

    def acquire(self) -> None:
        with self._lock:
            now = self._clock()
            wait = self._next_free - now
            start = max(now, self._next_free)
            self._next_free = start + self.period
        if wait > 0:
            self._sleep(wait)


class ExchangeLog:
    """Append-only JSONL log of exchanges, single-writer, flushed per line."""

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self._lock = threading.Lock()
        self._fh = self.path.open("a", encoding="utf-8")

    def append(self, record: dict) -> None:
        line = json.dumps(record, ensure_ascii=False)
        with self._lock:
            self._fh.write(line + "\n")
            self._fh.flush()

    def close(self) -> None:
        with self._lock:
            self._fh.close()


def _utc_now() -> str:
    return datetime.now(timezone.utc).isoformat().replace("+00:00", "Z")


class LlmGateway:
    """Issues chat completions against a panel of endpoints.

    Safe for concurrent use: the per-endpoint token bucket serializes
    admission; the exchange log is a single append stream. Every exchange
    (and every exhausted-retry failure) is persisted before the call
    returns.
    """

    def __init__(
        self,
        panel: Iterable[EndpointConfig],
        exchange_log: Optional[ExchangeLog] = None,
        *,
        backoff_base_s: float = 0.5,
        backoff_cap_s: float = 30.0,
        clock: Callable[[], float] = time.monotonic,
        sleep: Callable[[float], None] = time.sleep,
    ):
        self.endpoints = {endpoint.name: endpoint for endpoint in panel}
        self.exchange_log = exchange_log
        self.backoff_base_s = backoff_base_s
        self.backoff_cap_s = backoff_cap_s
        self._clock = clock
        self._sleep = sleep
        self._limiters = {
            name: TokenBucket(endpoint.requests_per_minute, clock=clock, sleep=sleep)
            for name, endpoint in self.endpoints.items()
        }
        self._client = httpx.Client()

    def close(self) -> None:
        self._client.close()

    def __enter__(self) -> "LlmGateway":
        return self

    def __exit__(self, *exc) -> None:
        self.close()

    def complete(self, endpoint_name: str, messages: list[tuple[str, str]]) -> ChatExchange:
        """POST one chat completion, retrying transient failures.

        Retries HTTP 429/5xx and timeouts with exponential backoff up to
        max_retries; any other 4xx fails immediately. Raises TransportError
        when retries are exhausted and ProtocolError on malformed bodies.
        """
        if not messages:
            raise ValueError("messages must be non-empty")
        endpoint = self.endpoints[endpoint_name]
        url = endpoint.base_url.rstrip("/") + "/chat/completions"
        headers = {"Content-Type": "application/json"}
        if endpoint.api_key_ref:
            key = os.environ.get(endpoint.api_key_ref, "")
            headers["Authorization"] = f"Bearer {key}"
        payload = {
            "model": endpoint.model_id,
            "messages": [{"role": role, "content": content} for role, content in messages],
            "temperature": endpoint.temperature,
            "max_tokens": endpoint.max_output_tokens,
        }

        started = self._clock()
        last_status = 0
        last_error = "no attempt made"
        attempts = 0
        for attempt in range(endpoint.max_retries + 1):
            attempts = attempt + 1
            self._limiters[endpoint_name].acquire()
            try:
                response = self._client.post(
                    url, json=payload, headers=headers, timeout=endpoint.timeout_s
                )
            except (httpx.TimeoutException, httpx.TransportError) as exc:
                last_status = 0
                last_error = f"network error: {exc}"
            else:
                last_status = response.status_code
                if response.status_code == 200:
                    exchange = self._build_exchange(
                        endpoint_name, messages, response, attempts, started
                    )
                    if self.exchange_log is not None:
                        self.exchange_log.append(exchange.to_dict())
                    return exchange
                last_error = f"HTTP {response.status_code}"
                if response.status_code not in RETRYABLE_STATUSES:
                    break
            if attempt < endpoint.max_retries:
                backoff = min(self.backoff_base_s * (2**attempt), self.backoff_cap_s)
                self._sleep(backoff)

        failure = TransportError(
            f"{endpoint_name}: {last_error} after {attempts} attempt(s)",
            status=last_status,
            attempts=attempts,
        )
        if self.exchange_log is not None:
            self.exchange_log.append(
                {
                    "type": "transport_error",
                    "endpoint": endpoint_name,
                    "status": last_status,
                    "attempts": attempts,
                    "error": last_error,
                    "timestamp": _utc_now(),
                }
            )
        raise failure

    def _build_exchange(
        self,
        endpoint_name: str,
        messages: list[tuple[str, str]],
        response: httpx.Response,
        attempts: int,
        started: float,
    ) -> ChatExchange:
        try:
            body = response.json()
            text = body["choices"][0]["message"]["content"]
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise ProtocolError(f"{endpoint_name}: malformed completion body: {exc}") from exc
        usage = body.get("usage") or {}
        return ChatExchange(
            endpoint_name=endpoint_name,
            request_messages=tuple((role, content) for role, content in messages),
            response_text=text,
            latency_s=max(self._clock() - started, 0.0),
            input_tokens=int(usage.get("prompt_tokens", 0)),
            output_tokens=int(usage.get("completion_tokens", 0)),
            attempt_count=attempts,
            timestamp=_utc_now(),
        )


@dataclass
class EndpointCosts:
    input_tokens: int = 0
    output_tokens: int = 0
    requests: int = 0
    cost_usd: float = 0.0


@dataclass
class CostLedger:
    """Per-endpoint token/request totals and computed dollar cost."""

    per_endpoint: dict[str, EndpointCosts] = field(default_factory=dict)

    @property
    def total_cost_usd(self) -> float:
        return sum(entry.cost_usd for entry in self.per_endpoint.values())


def cost_report(
    exchanges: Iterable[ChatExchange],
    prices: dict[str, tuple[float, float]],
) -> CostLedger:
    """Total cost per endpoint given (input, output) prices per million tokens."""
    ledger = CostLedger()
    for exchange in exchanges:
        name = exchange.endpoint_name
        if name not in prices:
            raise KeyError(f"no price configured for endpoint {name!r}")
        entry = ledger.per_endpoint.setdefault(name, EndpointCosts())
        entry.input_tokens += exchange.input_tokens
        entry.output_tokens += exchange.output_tokens
        entry.requests += 1
        input_price, output_price = prices[name]
        entry.cost_usd += (
            exchange.input_tokens * input_price + exchange.output_tokens * output_price
        ) / 1_000_000
    return ledger


def read_exchange_log(path: str | Path) -> list[ChatExchange]:
    """Read successful exchanges back from an exchanges.jsonl log."""
    exchanges = []
    with Path(path).open(encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            record = json.loads(line)
            if record.get("type") != "exchange":
                continue
            exchanges.append(
                ChatExchange(
                    endpoint_name=record["endpoint"],
                    request_messages=tuple(
                        (role, content) for role, content in record["messages"]
                    ),
                    response_text=record["response_text"],
                    latency_s=record["latency_s"],
                    input_tokens=record["input_tokens"],
                    output_tokens=record["output_tokens"],
                    attempt_count=record["attempt_count"],
                    timestamp=record["timestamp"],
                )
            )
    return exchanges
