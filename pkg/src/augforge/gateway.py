"""Client for the candidate-generating language model endpoint.

Speaks the chat-completions JSON shape (single user message per request) so
any compatible server works: a hosted model, a local inference server, or
the bundled mock. Sampling defaults match the generation experiments:
temperature 0.8, top_p 0.9, top_k 70, up to 16384 new tokens. top_k is sent
as a vendor extension field; servers that ignore it still function.

Each generation slot is independent: per-slot retries with exponential
backoff, and a slot that exhausts its retries yields an error marker rather
than aborting the batch.
"""

from __future__ import annotations

import random
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import requests

from .repository import CandidateRecord, Repository

DEFAULT_TEMPERATURE = 0.8
DEFAULT_TOP_P = 0.9
DEFAULT_TOP_K = 70
DEFAULT_MAX_NEW_TOKENS = 16 * 1024

DEFAULT_TIMEOUT_S = 300.0
DEFAULT_RETRIES = 3
DEFAULT_BACKOFF_S = 1.0

REFERENCE_COUNT = 2


@dataclass(frozen=True)
class SamplingParams:
    temperature: float = DEFAULT_TEMPERATURE
    top_p: float = DEFAULT_TOP_P
    top_k: int = DEFAULT_TOP_K
    max_new_tokens: int = DEFAULT_MAX_NEW_TOKENS

    def __post_init__(self):
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if not 0 < self.top_p <= 1:
            raise ValueError("top_p must lie in (0, 1]")
        if self.top_k < 1:
            raise ValueError("top_k must be >= 1")
        if self.max_new_tokens < 1:
            raise ValueError("max_new_tokens must be >= 1")


@dataclass(frozen=True)
class EndpointConfig:
    url: str
    model: str
    api_key: str | None = None
    timeout_s: float = DEFAULT_TIMEOUT_S
    retries: int = DEFAULT_RETRIES
    backoff_s: float = DEFAULT_BACKOFF_S
    parallelism: int = 1

    def __post_init__(self):
        if not self.url:
            raise ValueError("endpoint url must be non-empty")
        if self.retries < 1:
            raise ValueError("retries must be >= 1")
        if self.parallelism < 1:
            raise ValueError("parallelism must be >= 1")


@dataclass(frozen=True)
class GenerationResult:
    """One generation slot's outcome: raw model text or a transport error."""

    slot: int
    text: str | None = None
    error: str | None = None
    attempts: int = 1

    def __post_init__(self):
        if (self.text is None) == (self.error is None):
            raise ValueError("exactly one of text/error must be set")

    @property
    def ok(self) -> bool:
        return self.text is not None


def select_references(
    repo: Repository, seed: int, count: int = REFERENCE_COUNT
) -> list[CandidateRecord]:
    """Draw reference candidates for prompt construction.

    Eligible records are the valid, evaluated ones, considered in record_id
    order so the draw is reproducible for a given store content and seed.
    The draw is uniform without replacement.

    Raises:
        ValueError: fewer eligible records than requested.
    """
    eligible = [
        r
        for r in sorted(repo.records(), key=lambda r: r.record_id)
        if r.validity == "valid" and r.error_class is None and r.accuracy is not None
    ]
    if len(eligible) < count:
        raise ValueError(
            f"reference selection needs {count} evaluated records, store has {len(eligible)}"
        )
    rng = random.Random(seed)
    return rng.sample(eligible, count)


def build_chat_body(prompt: str, params: SamplingParams, model: str) -> dict:
    return {
        "model": model,
        "messages": [{"role": "user", "content": prompt}],
        "temperature": params.temperature,
        "top_p": params.top_p,
        "top_k": params.top_k,
        "max_tokens": params.max_new_tokens,
    }


def _parse_chat_response(payload: dict) -> str:
    try:
        content = payload["choices"][0]["message"]["content"]
    except (KeyError, IndexError, TypeError) as exc:
        raise ValueError(f"malformed chat response: {exc}") from exc
    if not isinstance(content, str):
        raise ValueError("chat response content is not text")
    return content


def _generate_slot(
    slot: int, prompt: str, params: SamplingParams, endpoint: EndpointConfig
) -> GenerationResult:
    body = build_chat_body(prompt, params, endpoint.model)
    headers = {}
    if endpoint.api_key:
        headers["Authorization"] = f"Bearer {endpoint.api_key}"
    last_error = "no attempt made"
    for attempt in range(1, endpoint.retries + 1):
        try:
            response = requests.post(
                endpoint.url, json=body, headers=headers, timeout=endpoint.timeout_s
            )
            if response.status_code != 200:
                raise ValueError(f"endpoint returned HTTP {response.status_code}")
            text = _parse_chat_response(response.json())
            return GenerationResult(slot=slot, text=text, attempts=attempt)
        except (requests.RequestException, ValueError) as exc:
            last_error = str(exc)
            if attempt < endpoint.retries:
                time.sleep(endpoint.backoff_s * (2 ** (attempt - 1)))
    return GenerationResult(slot=slot, error=last_error, attempts=endpoint.retries)


def generate_candidates(
    prompt: str,
    n: int,
    endpoint: EndpointConfig,
    params: SamplingParams | None = None,
) -> list[GenerationResult]:
    """Request n independent completions of the same prompt.

    Returns one result per slot, in slot order. Transport failures surface
    as per-slot error markers after retries are exhausted; the batch itself
    never raises for them.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    params = params or SamplingParams()
    with ThreadPoolExecutor(max_workers=endpoint.parallelism) as pool:
        futures = [pool.submit(_generate_slot, slot, prompt, params, endpoint) for slot in range(n)]
        return [f.result() for f in futures]
