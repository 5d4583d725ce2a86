"""Generator boundary: sequence scoring, a deterministic mock, a remote client.

A generator turns an ordered concept sequence into a sentence and, on
request, per-token natural-log probabilities. The sequence score is the
sum of those log-probabilities (the log of the autoregressive product).
The mock generator makes every pipeline fully reproducible offline; the
remote client speaks the HTTP wire protocol of a serving process.

Wire protocol (JSON bodies):
    POST /generate  {"concepts": [...], "mode": "draft"|"planned",
                     "want_logprobs": bool}
                    -> 200 {"text", "token_logprobs", "model_tag"}
    POST /dump      {"concepts": [...], "mode": str} -> 200 binary container
    GET  /healthz   -> 200 {"model_tag": str}
"""

from __future__ import annotations

import json
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Protocol, Sequence

import requests

from .errors import GeneratorError, ProtocolError, TransportError

MODES = ("draft", "planned")
MAX_BATCH = 32  # cap on requests batched into one generate_many call


@dataclass(frozen=True)
class GeneratorRequest:
    concepts_in_order: tuple[str, ...]
    mode: str = "draft"
    want_logprobs: bool = True

    def __post_init__(self):
        if not self.concepts_in_order:
            raise ValueError("concepts_in_order must be non-empty")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")


@dataclass(frozen=True)
class GeneratorResponse:
    text: str
    token_logprobs: tuple[float, ...] | None
    model_tag: str


class Generator(Protocol):
    """Anything that can serve generation requests."""

    def generate(self, request: GeneratorRequest) -> GeneratorResponse: ...


def score_sequence(token_logprobs: Sequence[float]) -> float:
    """Sum of per-token natural-log probabilities.

    This is the log of the autoregressive probability product; the empty
    sequence scores 0 (empty product = 1). No length normalization.
    """
    total = 0.0
    for lp in token_logprobs:
        if math.isnan(lp) or lp > 0:
            raise ValueError(f"log-probability out of domain: {lp}")
        total += lp
    return total


def length_normalized_score(token_logprobs: Sequence[float]) -> float:
    """Mean per-token log-probability; experimental alternative ranking
    key, off by default everywhere."""
    if not token_logprobs:
        return 0.0
    return score_sequence(token_logprobs) / len(token_logprobs)


def generate_many(
    generator: "Generator",
    requests_batch: Sequence[GeneratorRequest],
    max_inflight: int = 8,
) -> list[GeneratorResponse]:
    """Issue up to MAX_BATCH requests concurrently, responses in order.

    Permutation ranking fires dozens of generations per instance; this
    bounds the in-flight count while keeping the reply order aligned
    with the request order.
    """
    if len(requests_batch) > MAX_BATCH:
        raise ValueError(
            f"batch of {len(requests_batch)} exceeds MAX_BATCH={MAX_BATCH}"
        )
    if not requests_batch:
        return []
    with ThreadPoolExecutor(max_workers=min(max_inflight, len(requests_batch))) as pool:
        futures = [pool.submit(generator.generate, r) for r in requests_batch]
        return [f.result() for f in futures]


def inversion_count(ordered: Sequence[str]) -> int:
    """Pairs out of lexicographic order; used by the mock score rules."""
    count = 0
    for i in range(len(ordered)):
        for j in range(i + 1, len(ordered)):
            if ordered[i] > ordered[j]:
                count += 1
    return count


def default_template(concepts: Sequence[str], filler: str = "the") -> str:
    """Deterministic filler sentence: determiner before every concept
    except the second (the verb slot of a subject-verb-object caption)."""
    tokens: list[str] = []
    for i, concept in enumerate(concepts):
        if i != 1:
            tokens.append(filler)
        tokens.append(concept)
    tokens.append(".")
    return " ".join(tokens)


SCORE_RULES: dict[str, Callable[[tuple[str, ...]], float]] = {
    "zero": lambda ordered: 0.0,
    "inversions": lambda ordered: -float(inversion_count(ordered)),
}


@dataclass
class MockScript:
    """Deterministic behavior table for the mock generator.

    ``entries`` maps a concept order to (text, token_logprobs); orders not
    scripted fall back to the filler template, scored by ``score_rule``
    (a name from SCORE_RULES). The rule's total is carried by the first
    token so the record score is exact.
    """

    entries: dict[tuple[str, ...], tuple[str, tuple[float, ...]]] = field(
        default_factory=dict
    )
    filler: str = "the"
    score_rule: str = "zero"
    model_tag: str = "mock"

    def __post_init__(self):
        if self.score_rule not in SCORE_RULES:
            raise ValueError(f"unknown score rule {self.score_rule!r}")

    def add(
        self, order: Sequence[str], text: str, logprobs: Sequence[float]
    ) -> None:
        self.entries[tuple(order)] = (text, tuple(logprobs))

    @classmethod
    def from_json(cls, obj: dict) -> "MockScript":
        script = cls(
            filler=obj.get("filler", "the"),
            score_rule=obj.get("score_rule", "zero"),
            model_tag=obj.get("model_tag", "mock"),
        )
        for key, entry in obj.get("entries", {}).items():
            script.add(
                tuple(key.split()),
                entry["text"],
                tuple(entry.get("logprobs", [])),
            )
        return script

    @classmethod
    def load(cls, path: str) -> "MockScript":
        with open(path, encoding="utf-8") as fh:
            return cls.from_json(json.load(fh))

    def to_json(self) -> dict:
        return {
            "filler": self.filler,
            "score_rule": self.score_rule,
            "model_tag": self.model_tag,
            "entries": {
                " ".join(order): {"text": text, "logprobs": list(lps)}
                for order, (text, lps) in self.entries.items()
            },
        }


class MockGenerator:
    """Pure, scriptable stand-in for a fine-tuned model.

    The same request always yields the same response, so full pipeline
    runs are byte-identical across invocations.
    """

    def __init__(self, script: MockScript | None = None):
        self.script = script or MockScript()

    def generate(self, request: GeneratorRequest) -> GeneratorResponse:
        order = request.concepts_in_order
        entry = self.script.entries.get(order)
        if entry is not None:
            text, logprobs = entry
        else:
            text = default_template(order, self.script.filler)
            total = SCORE_RULES[self.script.score_rule](order)
            n_tokens = len(text.split())
            logprobs = (total,) + (0.0,) * (n_tokens - 1)
        return GeneratorResponse(
            text=text,
            token_logprobs=logprobs if request.want_logprobs else None,
            model_tag=self.script.model_tag,
        )


def mock_generate(request: GeneratorRequest, script: MockScript) -> GeneratorResponse:
    return MockGenerator(script).generate(request)


@dataclass(frozen=True)
class ServiceAddress:
    """Location and retry policy of a remote generator."""

    base_url: str
    retries: int = 2
    timeout: float = 30.0
    backoff: float = 0.2


class RemoteGenerator:
    """HTTP client for the generation wire protocol.

    Requests are idempotent on the serving side, so transport failures
    and 5xx statuses are retried up to the configured count with linear
    backoff; 4xx statuses surface immediately.
    """

    def __init__(self, address: ServiceAddress, pool_size: int = 8):
        self.address = address
        self._session = requests.Session()
        adapter = requests.adapters.HTTPAdapter(
            pool_connections=pool_size, pool_maxsize=pool_size
        )
        self._session.mount("http://", adapter)
        self._session.mount("https://", adapter)

    def _request(self, method: str, path: str, payload: dict | None = None):
        url = self.address.base_url.rstrip("/") + path
        last_error: Exception | None = None
        for attempt in range(self.address.retries + 1):
            try:
                resp = self._session.request(
                    method, url, json=payload, timeout=self.address.timeout
                )
            except requests.RequestException as exc:
                last_error = exc
                if attempt < self.address.retries:
                    time.sleep(self.address.backoff * (attempt + 1))
                continue
            if 400 <= resp.status_code < 500:
                raise GeneratorError(
                    f"{path} rejected ({resp.status_code}): {_error_text(resp)}"
                )
            if resp.status_code >= 500:
                last_error = GeneratorError(
                    f"{path} failed ({resp.status_code}): {_error_text(resp)}"
                )
                if attempt < self.address.retries:
                    time.sleep(self.address.backoff * (attempt + 1))
                continue
            return resp
        raise TransportError(
            f"{method} {url} failed after {self.address.retries + 1} attempts: "
            f"{last_error}"
        )

    def healthz(self) -> str:
        resp = self._request("GET", "/healthz")
        try:
            return resp.json()["model_tag"]
        except (ValueError, KeyError) as exc:
            raise ProtocolError(f"malformed healthz reply: {exc}") from None

    def generate(self, request: GeneratorRequest) -> GeneratorResponse:
        body = {
            "concepts": list(request.concepts_in_order),
            "mode": request.mode,
            "want_logprobs": request.want_logprobs,
        }
        resp = self._request("POST", "/generate", body)
        try:
            obj = resp.json()
        except ValueError:
            raise ProtocolError("generate reply is not JSON") from None
        return decode_generate_reply(obj, want_logprobs=request.want_logprobs)

    def dump(self, concepts: Sequence[str], mode: str = "draft") -> bytes:
        resp = self._request(
            "POST", "/dump", {"concepts": list(concepts), "mode": mode}
        )
        return resp.content


def _error_text(resp) -> str:
    try:
        return resp.json().get("error", resp.text)
    except ValueError:
        return resp.text


def decode_generate_reply(obj: dict, want_logprobs: bool) -> GeneratorResponse:
    """Validate a /generate reply against the wire contract."""
    for key in ("text", "model_tag"):
        if key not in obj:
            raise ProtocolError(f"generate reply missing {key!r}")
    if not obj["text"]:
        raise ProtocolError("generate reply has empty text")
    logprobs = obj.get("token_logprobs")
    if want_logprobs:
        if logprobs is None:
            raise ProtocolError(
                "generate reply missing token_logprobs although requested"
            )
        if any(lp > 0 or math.isnan(lp) for lp in logprobs):
            raise ProtocolError("token_logprobs contain positive entries")
        logprobs = tuple(float(lp) for lp in logprobs)
    else:
        logprobs = tuple(logprobs) if logprobs is not None else None
    return GeneratorResponse(
        text=obj["text"], token_logprobs=logprobs, model_tag=obj["model_tag"]
    )
