"""Descriptor elicitation: prompt construction, pluggable LLM clients, caching.

The client is deliberately small — anything with a ``complete(messages)``
method works. The live HTTP client never reads its credential from config
files and never writes it anywhere; only the environment variable *name* is
configured.
"""

from __future__ import annotations

import hashlib
import json
import os
import time
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Protocol, Sequence

import httpx

from .corpus import Dataset, DescriptorAnnotation, TextSample, normalize_descriptors
from .errors import CacheCorruption, ClientError, ParseError

DEFAULT_SYSTEM_PROMPT = (
    "You are an emotionally-intelligent and empathetic agent. You will be given a "
    "piece of text, and your task is to identify the emotions expressed by the "
    "writer of the text. Reply with only the emotion descriptors (words or "
    'phrases), separated by commas. If no emotion is clearly expressed, reply '
    'with "neutral".'
)


@dataclass(frozen=True)
class PromptTemplate:
    """Versioned system prompt; the version participates in cache keys so a
    prompt edit invalidates every stale cache entry."""

    version: str
    system: str


DEFAULT_TEMPLATE = PromptTemplate(version="descriptor-v1", system=DEFAULT_SYSTEM_PROMPT)


@dataclass(frozen=True)
class PromptMessages:
    system: str
    user: str


def build_annotation_prompt(text: str, template: PromptTemplate = DEFAULT_TEMPLATE) -> PromptMessages:
    """System message is the template verbatim; user message is the raw text."""
    if not text:
        raise ValueError("cannot build an annotation prompt for empty text")
    return PromptMessages(system=template.system, user=text)


def parse_descriptor_response(raw: str, sample_id: str = "") -> DescriptorAnnotation:
    """Split a comma-separated reply into normalized, deduplicated descriptors.

    Multiword phrases survive intact; empty pieces are dropped; duplicates keep
    their first occurrence.
    """
    descriptors = normalize_descriptors(raw.split(","))
    if not descriptors:
        raise ParseError(f"response {raw!r} contains no usable descriptor")
    return DescriptorAnnotation(sample_id=sample_id, descriptors=descriptors)


class AnnotationClient(Protocol):
    def complete(self, messages: PromptMessages) -> str: ...


class MockClient:
    """Deterministic stand-in: keyword table lookup, pure in (text, table).

    Responses for every table keyword found in the text (case-insensitive
    substring match) are joined in table order; no match yields the fallback.
    """

    def __init__(self, table: dict[str, str], fallback: str = "neutral"):
        self.table = dict(table)
        self.fallback = fallback
        self.calls = 0

    def complete(self, messages: PromptMessages) -> str:
        self.calls += 1
        text = messages.user.lower()
        hits = [resp for kw, resp in self.table.items() if kw.lower() in text]
        return ", ".join(hits) if hits else self.fallback


@dataclass
class LiveClientConfig:
    """Connection settings for a chat-completions style HTTP endpoint.

    ``credential_env`` names the environment variable holding the API key;
    the key itself is never persisted or logged.
    """

    endpoint: str
    deployment: str
    credential_env: str
    temperature: Optional[float] = None
    max_tokens: Optional[int] = None
    timeout: float = 30.0

    @classmethod
    def from_file(cls, path) -> "LiveClientConfig":
        with Path(path).open("r", encoding="utf-8") as handle:
            return cls(**json.load(handle))


class LiveClient:
    """Minimal HTTP client for a hosted chat model.

    ``transport`` is injectable for offline tests (httpx.MockTransport).
    """

    def __init__(self, config: LiveClientConfig, transport=None):
        self.config = config
        self._http = httpx.Client(timeout=config.timeout, transport=transport)

    def complete(self, messages: PromptMessages) -> str:
        key = os.environ.get(self.config.credential_env)
        if not key:
            raise ClientError(
                f"environment variable {self.config.credential_env!r} is not set"
            )
        payload: dict = {
            "model": self.config.deployment,
            "messages": [
                {"role": "system", "content": messages.system},
                {"role": "user", "content": messages.user},
            ],
        }
        if self.config.temperature is not None:
            payload["temperature"] = self.config.temperature
        if self.config.max_tokens is not None:
            payload["max_tokens"] = self.config.max_tokens
        response = self._http.post(self.config.endpoint, json=payload, headers={"api-key": key})
        response.raise_for_status()
        return response.json()["choices"][0]["message"]["content"]


def cache_key(template_version: str, text: str) -> str:
    """Collision-resistant key over the full text content and prompt version."""
    blob = f"{template_version}\x00{text}".encode("utf-8")
    return hashlib.sha256(blob).hexdigest()


class AnnotationCache:
    """Append-only JSONL cache of raw responses and their parsed descriptors."""

    def __init__(self, path):
        self.path = Path(path)
        self.entries: dict[str, dict] = {}
        if self.path.exists():
            with self.path.open("r", encoding="utf-8") as handle:
                for row, line in enumerate(handle):
                    if not line.strip():
                        continue
                    try:
                        entry = json.loads(line)
                        self.entries[entry["key"]] = entry
                    except (json.JSONDecodeError, TypeError, KeyError) as exc:
                        raise CacheCorruption(f"{self.path}: line {row}: {exc}") from None

    def get(self, key: str) -> Optional[dict]:
        return self.entries.get(key)

    def put(self, key: str, template_version: str, raw_response: str,
            descriptors: Sequence[str]) -> None:
        entry = {
            "key": key,
            "template_version": template_version,
            "raw_response": raw_response,
            "descriptors": list(descriptors),
            "timestamp": time.time(),
        }
        self.entries[key] = entry
        with self.path.open("a", encoding="utf-8") as handle:
            handle.write(json.dumps(entry, ensure_ascii=False) + "\n")
            handle.flush()


def annotate(
    dataset,
    client: AnnotationClient,
    cache_path,
    template: PromptTemplate = DEFAULT_TEMPLATE,
    max_attempts: int = 3,
    backoff: float = 0.5,
    max_in_flight: int = 1,
) -> list[DescriptorAnnotation]:
    """Annotate every sample, one DescriptorAnnotation each, caching responses.

    Cache hits never touch the client. Client calls run concurrently up to
    ``max_in_flight``; cache writes happen only on the calling thread. Samples
    that still fail after ``max_attempts`` retries (exponential backoff) are
    collected and surfaced in one ClientError — never silently dropped.
    """
    samples: list[TextSample] = dataset.samples if isinstance(dataset, Dataset) else list(dataset)
    cache = AnnotationCache(cache_path)
    results: dict[str, tuple[str, ...]] = {}
    pending: list[TextSample] = []
    for sample in samples:
        entry = cache.get(cache_key(template.version, sample.text))
        if entry is not None:
            results[sample.id] = tuple(entry["descriptors"])
        else:
            pending.append(sample)

    def call_with_retries(sample: TextSample):
        messages = build_annotation_prompt(sample.text, template)
        delay = backoff
        last_error: Exception | None = None
        for attempt in range(max_attempts):
            try:
                raw = client.complete(messages)
                parsed = parse_descriptor_response(raw, sample.id)
                return raw, parsed.descriptors
            except Exception as exc:  # noqa: BLE001 - client backends vary
                last_error = exc
                if attempt + 1 < max_attempts and delay > 0:
                    time.sleep(delay)
                    delay *= 2
        raise ClientError(f"sample {sample.id!r}: {last_error}", [sample.id])

    failed: list[str] = []
    with ThreadPoolExecutor(max_workers=max(1, max_in_flight)) as pool:
        futures = {pool.submit(call_with_retries, s): s for s in pending}
        for future in as_completed(futures):
            sample = futures[future]
            try:
                raw, descriptors = future.result()
            except ClientError:
                failed.append(sample.id)
                continue
            cache.put(cache_key(template.version, sample.text), template.version, raw, descriptors)
            results[sample.id] = descriptors

    if failed:
        raise ClientError(
            f"annotation failed after {max_attempts} attempts for "
            f"{len(failed)} sample(s): {sorted(failed)}",
            sorted(failed),
        )
    return [DescriptorAnnotation(sample_id=s.id, descriptors=results[s.id]) for s in samples]
