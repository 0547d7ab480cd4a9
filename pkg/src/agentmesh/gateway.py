"""Completion backends, token counting, and the cost ledger.

Backends are pluggable: the simulator uses deterministic scripted backends,
while ``LiveChatBackend`` speaks the common chat-completion HTTP shape for
real deployments. Costs are tracked per activity so a run can be broken
down into natural-language traffic, negotiation, suitability checks, and
routine implementation.

Token counting is fixed as ``ceil(utf8_bytes / 4)`` so scripted runs are
reproducible without vendor tokenizers; live backends report their own
usage instead.
"""

from __future__ import annotations

import enum
import json
import threading
import time
from dataclasses import dataclass
from typing import NamedTuple


class Message(NamedTuple):
    """One role-tagged message of a conversation."""

    role: str
    content: str


@dataclass(frozen=True)
class TokenUsage:
    prompt_tokens: int = 0
    completion_tokens: int = 0

    def __post_init__(self):
        if self.prompt_tokens < 0 or self.completion_tokens < 0:
            raise ValueError("token counts must be non-negative")

    def __add__(self, other: "TokenUsage") -> "TokenUsage":
        return TokenUsage(
            self.prompt_tokens + other.prompt_tokens,
            self.completion_tokens + other.completion_tokens,
        )


class BackendError(Exception):
    """A completion backend failed to produce a reply."""


class CompletionBackend:
    """Contract for completion backends.

    Implementations must be deterministic for scripted use: the same
    conversation yields the same reply and usage, across runs and threads.
    """

    model_id: str = "unknown"

    def complete(self, conversation: list[Message]) -> tuple[str, TokenUsage]:
        raise NotImplementedError


def count_tokens(text: str) -> int:
    """Deterministic token estimate: ceil(utf8_byte_length / 4)."""
    return (len(text.encode("utf-8")) + 3) // 4


# ── pricing ──────────────────────────────────────────────────────────

@dataclass(frozen=True)
class ModelPrice:
    """USD per million prompt/completion tokens."""

    prompt_per_million: float
    completion_per_million: float

    def __post_init__(self):
        if self.prompt_per_million < 0 or self.completion_per_million < 0:
            raise ValueError("prices must be non-negative")


DEFAULT_PRICES: dict[str, ModelPrice] = {
    "gpt-4o": ModelPrice(5.00, 15.00),
    "llama-3-405b": ModelPrice(5.00, 10.00),
    "gemini-1.5-pro": ModelPrice(3.50, 10.50),
}


def load_price_table(path: str) -> dict[str, ModelPrice]:
    """Load a price table from a JSON file of
    ``{model_id: {"prompt_per_million": x, "completion_per_million": y}}``."""
    with open(path, "r", encoding="utf-8") as fh:
        raw = json.load(fh)
    table = {}
    for model_id, prices in raw.items():
        table[model_id] = ModelPrice(
            float(prices["prompt_per_million"]),
            float(prices["completion_per_million"]),
        )
    return table


class Activity(str, enum.Enum):
    """Cost categories; together they partition a run's spend."""

    NATURAL_LANGUAGE = "natural_language"
    NEGOTIATION = "negotiation"
    SUITABILITY_CHECK = "suitability_check"
    ROUTINE_IMPLEMENTATION = "routine_implementation"


class UnknownModelError(Exception):
    """model_id missing from the price table."""


@dataclass(frozen=True)
class LedgerRecord:
    index: int
    model_id: str
    usage: TokenUsage
    activity: Activity
    cost: float


class CostLedger:
    """Append-only record of priced token usage.

    Appends are serialized so concurrent writers cannot lose records; totals
    are always the sum of record costs.
    """

    def __init__(self, prices: dict[str, ModelPrice] | None = None):
        self.prices = dict(DEFAULT_PRICES if prices is None else prices)
        self._records: list[LedgerRecord] = []
        self._lock = threading.Lock()

    def charge(self, model_id: str, usage: TokenUsage, activity: Activity) -> float:
        if model_id not in self.prices:
            raise UnknownModelError(f"no prices configured for model {model_id!r}")
        price = self.prices[model_id]
        cost = (usage.prompt_tokens * price.prompt_per_million
                + usage.completion_tokens * price.completion_per_million) / 1e6
        with self._lock:
            self._records.append(LedgerRecord(len(self._records), model_id, usage, Activity(activity), cost))
        return cost

    def records(self) -> list[LedgerRecord]:
        with self._lock:
            return list(self._records)

    def __len__(self) -> int:
        with self._lock:
            return len(self._records)

    @property
    def total(self) -> float:
        return sum(r.cost for r in self.records())


@dataclass(frozen=True)
class CostSummary:
    total: float
    activity_totals: dict[str, float]
    activity_percentages: dict[str, float]
    model_totals: dict[str, float]
    cumulative: list[float]


def summarize(ledger: CostLedger) -> CostSummary:
    """Aggregate a ledger into totals, a per-activity breakdown, and the
    cumulative cost series (one point per record)."""
    records = ledger.records()
    total = sum(r.cost for r in records)
    activity_totals = {activity.value: 0.0 for activity in Activity}
    model_totals: dict[str, float] = {}
    cumulative = []
    running = 0.0
    for record in records:
        activity_totals[record.activity.value] += record.cost
        model_totals[record.model_id] = model_totals.get(record.model_id, 0.0) + record.cost
        running += record.cost
        cumulative.append(running)
    if total > 0:
        percentages = {k: 100.0 * v / total for k, v in activity_totals.items()}
    else:
        percentages = {k: 0.0 for k in activity_totals}
    return CostSummary(
        total=total,
        activity_totals=activity_totals,
        activity_percentages=percentages,
        model_totals=model_totals,
        cumulative=cumulative,
    )


# ── live backend ─────────────────────────────────────────────────────

class LiveChatBackend(CompletionBackend):
    """Chat-completion client for a real model endpoint.

    Sends the OpenAI-style ``{"model", "messages"}`` payload and prefers the
    vendor-reported usage over the local token estimate.
    """

    def __init__(self, endpoint: str, api_key: str, model_id: str,
                 timeout: float = 60.0, attempts: int = 3, backoff: float = 0.1):
        self.endpoint = endpoint
        self.api_key = api_key
        self.model_id = model_id
        self.timeout = timeout
        self.attempts = attempts
        self.backoff = backoff

    def complete(self, conversation: list[Message]) -> tuple[str, TokenUsage]:
        import requests

        payload = {
            "model": self.model_id,
            "messages": [{"role": role, "content": content} for role, content in conversation],
        }
        headers = {"Authorization": f"Bearer {self.api_key}", "Content-Type": "application/json"}
        last_error: Exception | None = None
        for attempt in range(self.attempts):
            try:
                resp = requests.post(self.endpoint, json=payload, headers=headers, timeout=self.timeout)
                resp.raise_for_status()
                data = resp.json()
                reply = data["choices"][0]["message"]["content"]
                usage = data.get("usage", {})
                prompt_tokens = int(usage.get("prompt_tokens",
                                              sum(count_tokens(m.content) for m in conversation)))
                completion_tokens = int(usage.get("completion_tokens", count_tokens(reply)))
                return reply, TokenUsage(prompt_tokens, completion_tokens)
            except Exception as exc:  # noqa: BLE001 - every transport error is retryable here
                last_error = exc
                if attempt + 1 < self.attempts:
                    time.sleep(self.backoff)
        raise BackendError(f"completion request failed after {self.attempts} attempts: {last_error}")
