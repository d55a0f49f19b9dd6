"""Inference backends: HTTP wire contract plus a deterministic mock.

The mock answers both pipeline stages from the dictionary matcher, so a
full run is a pure function of corpus, dictionaries, strategy, and seed.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from typing import Optional, Protocol

import httpx

from .errors import BackendExhausted
from .lexicon import DictionaryName, Matcher, default_matcher

# Abstracts containing this token make the mock emit unparseable stage-2
# output, exercising the Failed/Unclassifiable path deterministically.
GARBLE_MARKER = "zzgarble"

SENTENCE_SEP = ". "


@dataclass(frozen=True)
class BackendConfig:
    endpoint: str
    model: str
    token_env: str = "SCHOLARPIPE_TOKEN"
    max_in_flight: int = 1
    timeout: float = 60.0
    retries: int = 2
    temperature: float = 0.0
    max_tokens: int = 512
    response_path: str = "choices.0.message.content"

    def __post_init__(self) -> None:
        if self.max_in_flight < 1:
            raise ValueError("max_in_flight must be >= 1")

    def audit_fields(self) -> dict:
        return {
            "model": self.model,
            "temperature": self.temperature,
            "max_tokens": self.max_tokens,
        }


class Backend(Protocol):
    def generate(self, prompt: str) -> str: ...


def extract_response_text(payload: dict, path: str) -> str:
    node = payload
    for part in path.split("."):
        if isinstance(node, list):
            node = node[int(part)]
        else:
            node = node[part]
    return str(node)


class HTTPBackend:
    """POSTs chat-style requests to a configured endpoint."""

    def __init__(self, config: BackendConfig, client: Optional[httpx.Client] = None):
        self.config = config
        self._client = client or httpx.Client(timeout=config.timeout)

    def generate(self, prompt: str) -> str:
        cfg = self.config
        headers = {}
        token = os.environ.get(cfg.token_env)
        if token:
            headers["Authorization"] = f"Bearer {token}"
        body = {
            "model": cfg.model,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": cfg.temperature,
            "max_tokens": cfg.max_tokens,
        }
        last_error: Optional[Exception] = None
        for _ in range(cfg.retries + 1):
            try:
                resp = self._client.post(cfg.endpoint, json=body, headers=headers)
                resp.raise_for_status()
                return extract_response_text(resp.json(), cfg.response_path)
            except (httpx.HTTPError, KeyError, IndexError, ValueError) as exc:
                last_error = exc
        raise BackendExhausted(f"backend failed after {cfg.retries + 1} attempts: {last_error}")

    def close(self) -> None:
        self._client.close()


def _quoted_block(prompt: str, marker: str) -> str:
    """Text between the opening quote after `marker` and the matching
    unescaped closing quote."""
    at = prompt.index(marker)
    start = prompt.index('"', at) + 1
    i = start
    while i < len(prompt):
        if prompt[i] == "\\":
            i += 2
            continue
        if prompt[i] == '"':
            break
        i += 1
    return prompt[start:i].replace('\\"', '"').replace("\\\\", "\\")


class MockBackend:
    """Deterministic stand-in for the remote model.

    Stage 1 returns the abstract sentences containing any dictionary term;
    stage 2 answers Yes iff those sentences contain an AI term, listing
    every matched term. Ignores prompt examples entirely.
    """

    def __init__(self, matcher: Optional[Matcher] = None):
        self._matcher = matcher or default_matcher()

    def generate(self, prompt: str) -> str:
        if "**Sentences:**" in prompt:
            return self._stage2(_quoted_block(prompt, "**Sentences:**"))
        return self._stage1(_quoted_block(prompt, "**Paragraph:**"))

    def _stage1(self, abstract: str) -> str:
        sentences = abstract.split(SENTENCE_SEP)
        kept = [s for s in sentences if self._matcher.find(s)]
        return SENTENCE_SEP.join(kept)

    def _stage2(self, sentences: str) -> str:
        if GARBLE_MARKER in sentences:
            return "I cannot help with that."
        hits = self._matcher.find(sentences)
        terms: list[str] = []
        for h in hits:
            if h.term not in terms:
                terms.append(h.term)
        has_ai = any(h.dictionary == DictionaryName.AI_TERMS for h in hits)
        return json.dumps(
            {"Answer": "Yes" if has_ai else "No", "Methods": ", ".join(terms)}
        )
