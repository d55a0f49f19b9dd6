"""Deterministic fixture builders shared by the test suite.

The synthetic corpus plants a known label composition (120 AIMethods,
430 NonAIMethods, 440 NoMethods, 10 Unclassifiable) by controlling which
dictionary terms each abstract contains; the generator asserts its own
planting so a dictionary change cannot silently skew the composition.
"""

from __future__ import annotations

import json
from pathlib import Path

from scholarpipe import lexicon
from scholarpipe.backends import GARBLE_MARKER
from scholarpipe.lexicon import DictionaryName

N_WORKS = 1000
COMPOSITION = {"AIMethods": 120, "NonAIMethods": 430, "NoMethods": 440, "Unclassifiable": 10}

# Filler prose verified term-free against the expanded dictionaries.
SAFE_SENTENCES = (
    "The cohort comprised teachers recruited across several urban districts",
    "Participants completed a battery of written exercises during spring",
    "Findings highlight notable differences in outcomes over the decade",
    "The discussion situates these results within broader policy debates",
    "Archival records from municipal offices supplied contextual detail",
    "Limitations and directions for further inquiry are considered in depth",
)

WORK_TYPES = ("article", "book", "book-chapter", "dissertation", "preprint")
LANGUAGES = ("en", "de", "es", "fr", "id", "pt", "zz")

POPULATION_ROWS = (
    ("US", 331_000_000),
    ("DE", 83_000_000),
    ("BR", 213_000_000),
    ("NL", 17_000_000),
    ("SM", 34_000),
    ("IS", 370_000),
)


def _country_for(i: int) -> str | None:
    if i < 400:
        return "US"
    if i < 700:
        return "DE"
    if i < 850:
        return "BR"
    if i < 910:
        return "SM"  # population below one million
    if i < 940:
        return "XX"  # absent from the population table
    if i < 960:
        return None  # no first-author country
    return "NL"  # fewer than 100 publications


def planted_label(i: int) -> str:
    r = i % 100
    if r < 12:
        return "AIMethods"
    if r < 55:
        return "NonAIMethods"
    if r < 99:
        return "NoMethods"
    return "Unclassifiable"


def _term_pools() -> tuple[list[str], list[str]]:
    """(AI-only terms, stats terms that trigger no AI hit)."""
    matcher = lexicon.default_matcher()
    ai_pool = []
    for term in lexicon.bundled_dictionary(DictionaryName.AI_TERMS).terms:
        hits = matcher.find(f"the study used {term} throughout")
        if any(h.dictionary is DictionaryName.AI_TERMS for h in hits):
            ai_pool.append(term)
    stats_pool = []
    for name in (DictionaryName.LINEAR_MODEL_TERMS, DictionaryName.OTHER_STATS_TERMS):
        for term in lexicon.bundled_dictionary(name).terms:
            hits = matcher.find(f"the study used {term} throughout")
            if hits and not any(h.dictionary is DictionaryName.AI_TERMS for h in hits):
                stats_pool.append(term)
    assert len(ai_pool) >= 8 and len(stats_pool) >= 8
    return ai_pool, stats_pool


def build_abstract(i: int, label: str, ai_pool: list[str], stats_pool: list[str]) -> str:
    filler = [SAFE_SENTENCES[(i + k) % len(SAFE_SENTENCES)] for k in range(3)]
    if label == "AIMethods":
        filler.insert(1, f"The empirical part relied on {ai_pool[i % len(ai_pool)]} throughout")
    elif label == "NonAIMethods":
        filler.insert(1, f"Estimates were obtained with {stats_pool[i % len(stats_pool)]} on the pooled data")
    elif label == "Unclassifiable":
        filler.insert(1, f"Researchers applied {ai_pool[i % len(ai_pool)]} {GARBLE_MARKER} in the pilot phase")
    text = ". ".join(filler) + "."
    assert len(text) >= 200, text
    return text


def corpus_records() -> list[dict]:
    ai_pool, stats_pool = _term_pools()
    matcher = lexicon.default_matcher()
    records = []
    for i in range(N_WORKS):
        label = planted_label(i)
        abstract = build_abstract(i, label, ai_pool, stats_pool)
        hits = matcher.find(abstract)
        if label == "NoMethods":
            assert not hits, (abstract, hits)
        elif label == "NonAIMethods":
            assert hits and not any(h.dictionary is DictionaryName.AI_TERMS for h in hits)
        else:
            assert any(h.dictionary is DictionaryName.AI_TERMS for h in hits)
        field_n = i % 8
        rec = {
            "id": f"W{i:04d}",
            "type": WORK_TYPES[i % len(WORK_TYPES)],
            "publication_date": f"{2000 + i % 25}-0{1 + i % 9}-15",
            "language": LANGUAGES[i % len(LANGUAGES)],
            "title": f"Study {i}",
            "domain_id": f"D{field_n % 4 + 1}",
            "field_id": f"F{field_n + 1}",
            "subfield_id": f"S{field_n + 1}",
            "topic_id": f"T{field_n + 1}_{i % 6 + 1}",
            "referenced_works": [f"W{(i + 1) % N_WORKS:04d}", f"W{(i + 7) % N_WORKS:04d}", "EXT1"],
            "citations_3y": i % 13,
            "is_retracted": (i * 37 + 11) % 97 < 13,
            "first_author_country": _country_for(i),
        }
        if i % 10 == 0:
            tokens = abstract.split(" ")
            inv: dict[str, list[int]] = {}
            for pos, tok in enumerate(tokens):
                inv.setdefault(tok, []).append(pos)
            rec["abstract_inverted_index"] = inv
        else:
            rec["abstract"] = abstract
        records.append(rec)
    return records


REJECT_LINES = (
    # unknown publication type
    json.dumps({"id": "R1", "type": "journal-issue", "publication_date": "2010-01-01",
                "abstract": "x" * 250}),
    # out of range dates
    json.dumps({"id": "R2", "type": "article", "publication_date": "1955-06-01",
                "abstract": "x" * 250}),
    json.dumps({"id": "R3", "type": "article", "publication_date": "2025-01-02",
                "abstract": "x" * 250}),
    # short / missing abstracts
    json.dumps({"id": "R4", "type": "article", "publication_date": "2010-01-01",
                "abstract": "too short"}),
    json.dumps({"id": "R5", "type": "article", "publication_date": "2010-01-01"}),
    # malformed lines
    "{this is not json",
    json.dumps({"id": "R6", "type": "article"}),  # no date
    json.dumps({"id": "R7", "type": "article", "publication_date": "2010-01-01",
                "citations_3y": -3, "abstract": "x" * 250}),
)


def write_corpus(path: Path) -> None:
    records = corpus_records()
    lines = [json.dumps(r, sort_keys=True) for r in records]
    # Interleave rejects/malformed so ingest filtering is exercised mid-stream.
    for k, bad in enumerate(REJECT_LINES):
        lines.insert(k * 100, bad)
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def write_taxonomy(path: Path) -> None:
    domains = {f"D{d}": [f"F{d}", f"F{d + 4}"] for d in range(1, 5)}
    topic_to_field = {
        f"T{f}_{t}": f"F{f}" for f in range(1, 9) for t in range(1, 7)
    }
    path.write_text(json.dumps({
        "domains": domains,
        "topic_to_field": topic_to_field,
        "cs_field_id": "F1",
    }, indent=2, sort_keys=True), encoding="utf-8")


def write_population(path: Path) -> None:
    lines = ["country,population"]
    lines += [f"{c},{p}" for c, p in POPULATION_ROWS]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


N_DOCS = 200
N_KEYWORD_DOCS = 190

FALLBACK_TITLES = ("Background", "Approach", "Analysis Plan", "Findings", "Conclusion")


def write_fulltext(path: Path) -> None:
    """200 documents: 190 with keyword-matchable section titles, 10 without."""
    docs = []
    for i in range(N_DOCS):
        if i < N_KEYWORD_DOCS:
            sections = [
                {"title": "Introduction", "body": f"Context for study {i}."},
                {"title": "Materials and Methods", "body": f"We describe the protocol for study {i}."},
                {"title": "Results", "body": f"Outcomes for study {i}."},
            ]
        else:
            sections = [
                {"title": FALLBACK_TITLES[k % len(FALLBACK_TITLES)],
                 "body": f"Narrative passage {k} of document {i}."}
                for k in range(4)
            ]
        docs.append(json.dumps({"doc_id": f"DOC{i:03d}", "sections": sections}, sort_keys=True))
    path.write_text("\n".join(docs) + "\n", encoding="utf-8")


def write_config(path: Path, corpus: Path, output_dir: Path, taxonomy: Path,
                 fulltext: Path, population: Path, **extra: str) -> None:
    lines = [
        f"corpus = {corpus}",
        f"output_dir = {output_dir}",
        f"taxonomy = {taxonomy}",
        f"fulltext = {fulltext}",
        f"population = {population}",
        "strategy = baseline",
        "seed = 7",
        "mock_backend = true",
    ]
    lines += [f"{k} = {v}" for k, v in extra.items()]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
