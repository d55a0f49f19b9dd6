"""Full-text section segmentation and methods-section location.

Keyword matching on section titles comes first; when no title matches, a
semantic fallback embeds a fixed query and every section body and picks
the most similar section.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Iterable, Iterator, Optional, Protocol, Sequence

import numpy as np

from .errors import EmptyDocument, ZeroVector

METHODS_TITLE_KEYWORDS = ("methods", "materials", "experimental", "procedure")
DEFAULT_METHODS_QUERY = "research methods materials and procedures used in this study"
MAX_HEADING_CHARS = 120
EMBED_TOKEN_BUDGET = 512


@dataclass(frozen=True)
class Section:
    title: str
    body: str


@dataclass(frozen=True)
class Document:
    doc_id: str
    sections: tuple[Section, ...]


class SelectionStrategy(Enum):
    KEYWORD_MATCH = "KeywordMatch"
    SEMANTIC_FALLBACK = "SemanticFallback"


class Embedder(Protocol):
    dimension: int

    def embed(self, text: str) -> np.ndarray: ...


class HashEmbedder:
    """Deterministic mock embedder: the text hash seeds a unit vector."""

    def __init__(self, dimension: int = 32):
        self.dimension = dimension

    def embed(self, text: str) -> np.ndarray:
        digest = hashlib.sha256(text.encode("utf-8")).digest()
        seed = int.from_bytes(digest[:8], "big")
        vec = np.random.default_rng(seed).standard_normal(self.dimension)
        return vec / np.linalg.norm(vec)


def _looks_like_heading(line: str) -> bool:
    text = line.strip()
    if not text or len(text) > MAX_HEADING_CHARS or text.endswith("."):
        return False
    words = [w for w in text.split() if any(c.isalpha() for c in w)]
    if not words:
        return False
    if text == text.upper():
        return True
    return all(w[0].isupper() for w in words if w[0].isalpha())


def segment_sections(
    doc_id: str,
    fulltext: Optional[str] = None,
    sections: Optional[Sequence[tuple[str, str]]] = None,
) -> Document:
    """Build a Document from tagged sections or from plain text.

    Plain text is split on a heading heuristic (short line, title-case or
    all-caps, no trailing period); text before the first heading becomes a
    PREAMBLE section.
    """
    if sections is not None:
        parsed = tuple(Section(title, body) for title, body in sections)
        if not parsed:
            raise EmptyDocument(doc_id)
        return Document(doc_id, parsed)
    if fulltext is None or not fulltext.strip():
        raise EmptyDocument(doc_id)
    out: list[Section] = []
    title = "PREAMBLE"
    buf: list[str] = []
    for line in fulltext.splitlines():
        if _looks_like_heading(line):
            body = "\n".join(buf).strip()
            if title != "PREAMBLE" or body:
                out.append(Section(title, body))
            title = line.strip()
            buf = []
        else:
            buf.append(line)
    out.append(Section(title, "\n".join(buf).strip()))
    return Document(doc_id, tuple(out))


def cosine_similarity(a: np.ndarray, b: np.ndarray) -> float:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        raise ZeroVector("cosine similarity of a zero vector")
    return float(np.dot(a, b) / (na * nb))


def _truncate_for_embedding(body: str) -> str:
    tokens = body.split()
    if len(tokens) <= EMBED_TOKEN_BUDGET:
        return body
    return " ".join(tokens[:EMBED_TOKEN_BUDGET])


def find_methods_section(
    doc: Document,
    embedder: Embedder,
    query: str = DEFAULT_METHODS_QUERY,
) -> tuple[Section, SelectionStrategy]:
    """Keyword scan over titles, first hit wins; semantic fallback otherwise.

    Fallback ranks full section bodies (truncated for embedding only) by
    cosine similarity to the query; ties resolve to document order.
    """
    if not doc.sections:
        raise EmptyDocument(doc.doc_id)
    for section in doc.sections:
        title = section.title.lower()
        if any(kw in title for kw in METHODS_TITLE_KEYWORDS):
            return section, SelectionStrategy.KEYWORD_MATCH
    query_vec = embedder.embed(query)
    best_idx = 0
    best_score = -np.inf
    for i, section in enumerate(doc.sections):
        text = _truncate_for_embedding(section.body) or section.title
        score = cosine_similarity(query_vec, embedder.embed(text))
        if score > best_score:
            best_idx, best_score = i, score
    return doc.sections[best_idx], SelectionStrategy.SEMANTIC_FALLBACK


def load_documents(path: str | Path) -> Iterator[Document]:
    """Line-delimited {doc_id, sections:[{title, body}]} records."""
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            obj = json.loads(line)
            yield segment_sections(
                str(obj["doc_id"]),
                sections=[(s.get("title", ""), s.get("body", "")) for s in obj["sections"]],
            )


def extraction_record(doc: Document, section: Section, strategy: SelectionStrategy) -> str:
    return json.dumps(
        {"doc_id": doc.doc_id, "chosen_title": section.title, "strategy": strategy.value},
        sort_keys=True,
        ensure_ascii=False,
    )
