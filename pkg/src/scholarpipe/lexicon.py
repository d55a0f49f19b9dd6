"""Method-term dictionaries, expansion rules, and multi-pattern matching.

Dictionaries are semicolon-separated plain-text term lists. Matching is
case-insensitive, word-boundary anchored, and treats hyphens and spaces
inside phrases as interchangeable. The matcher is a token-level
Aho-Corasick automaton: one pass over the abstract regardless of how many
patterns are loaded.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from enum import Enum
from importlib import resources
from pathlib import Path
from typing import Iterable, Mapping, Optional, Sequence

from .corpus import WorkRecord
from .errors import EmptyPattern


class DictionaryName(Enum):
    AI_TERMS = "AiTerms"
    LINEAR_MODEL_TERMS = "LinearModelTerms"
    OTHER_STATS_TERMS = "OtherStatsTerms"


_BUNDLED_FILES = {
    DictionaryName.AI_TERMS: "ai_terms.txt",
    DictionaryName.LINEAR_MODEL_TERMS: "linear_model_terms.txt",
    DictionaryName.OTHER_STATS_TERMS: "other_stats_terms.txt",
}


@dataclass(frozen=True)
class Dictionary:
    name: DictionaryName
    terms: tuple[str, ...]

    def __post_init__(self) -> None:
        if not self.terms:
            raise ValueError(f"dictionary {self.name.value} is empty")


def parse_term_list(text: str) -> tuple[str, ...]:
    """Split a semicolon-separated term list; trims, lowercases, dedupes."""
    seen: set[str] = set()
    terms = []
    for raw in text.split(";"):
        term = raw.strip().strip(".").strip().lower()
        if term and term not in seen:
            seen.add(term)
            terms.append(term)
    return tuple(terms)


def load_dictionary(path: str | Path, name: DictionaryName) -> Dictionary:
    return Dictionary(name, parse_term_list(Path(path).read_text(encoding="utf-8")))


def bundled_dictionary(name: DictionaryName) -> Dictionary:
    text = resources.files("scholarpipe.data").joinpath(_BUNDLED_FILES[name]).read_text(encoding="utf-8")
    return Dictionary(name, parse_term_list(text))


def bundled_dictionaries() -> dict[DictionaryName, Dictionary]:
    return {name: bundled_dictionary(name) for name in DictionaryName}


# Spelling alternations applied to a phrase's final token (suffix swaps,
# both directions) plus verbatim token variants the term lists themselves
# alternate between.
SPELLING_SUFFIX_PAIRS: tuple[tuple[str, str], ...] = (
    ("ize", "ise"),
    ("yze", "yse"),
    ("or", "our"),
)

TOKEN_VARIANT_PAIRS: tuple[tuple[str, str], ...] = (
    ("modeling", "modelling"),
    ("modelling", "modeling"),
)


@dataclass(frozen=True)
class ExpansionRuleSet:
    plural: bool = True
    spelling: bool = True
    variant_pairs: tuple[tuple[str, str], ...] = TOKEN_VARIANT_PAIRS


DEFAULT_RULES = ExpansionRuleSet()


@dataclass(frozen=True)
class ExpandedDictionary:
    source: Dictionary
    expanded_terms: tuple[str, ...]
    provenance: Mapping[str, str]

    @property
    def name(self) -> DictionaryName:
        return self.source.name


def _pluralize_token(token: str) -> str:
    if token.endswith(("s", "x", "z", "ch", "sh")):
        return token + "es"
    return token + "s"


def _final_token_variants(term: str, rules: ExpansionRuleSet) -> list[tuple[str, str]]:
    """Spelling/naming variants of a term, tagged with the rule that made them."""
    tokens = term.split(" ")
    head, last = tokens[:-1], tokens[-1]
    out: list[tuple[str, str]] = []

    def emit(new_last: str, rule: str) -> None:
        out.append((" ".join(head + [new_last]), rule))

    if rules.spelling:
        for a, b in SPELLING_SUFFIX_PAIRS:
            if last.endswith(a):
                emit(last[: -len(a)] + b, f"spelling:{a}->{b}")
            if last.endswith(b):
                emit(last[: -len(b)] + a, f"spelling:{b}->{a}")
    for a, b in rules.variant_pairs:
        if last == a:
            emit(b, f"variant:{a}->{b}")
    return out


def expand_terms(
    source: Dictionary | ExpandedDictionary,
    rules: ExpansionRuleSet = DEFAULT_RULES,
) -> ExpandedDictionary:
    """Add plural and spelling variants of each core term.

    Expanding an already-expanded dictionary re-expands its source, so the
    operation is idempotent.
    """
    base = source.source if isinstance(source, ExpandedDictionary) else source
    provenance: dict[str, str] = {}
    order: list[str] = []

    def add(term: str, origin: str) -> None:
        if term not in provenance:
            provenance[term] = origin
            order.append(term)

    for term in base.terms:
        add(term, "core")
        variants = [(term, "core")] + _final_token_variants(term, rules)
        for variant, rule in variants[1:]:
            add(variant, rule)
        if rules.plural:
            for variant, rule in variants:
                tokens = variant.split(" ")
                plural = " ".join(tokens[:-1] + [_pluralize_token(tokens[-1])])
                add(plural, "plural" if rule == "core" else f"{rule}+plural")
    return ExpandedDictionary(base, tuple(order), provenance)


def tokenize(text: str) -> list[tuple[str, int, int]]:
    """Lowercased alphanumeric token runs with (start, end) offsets."""
    tokens: list[tuple[str, int, int]] = []
    start = None
    for i, ch in enumerate(text):
        if ch.isalnum():
            if start is None:
                start = i
        elif start is not None:
            tokens.append((text[start:i].lower(), start, i))
            start = None
    if start is not None:
        tokens.append((text[start:].lower(), start, len(text)))
    return tokens


def phrase_tokens(phrase: str) -> tuple[str, ...]:
    return tuple(tok for tok, _, _ in tokenize(phrase))


@dataclass(frozen=True)
class Hit:
    term: str
    dictionary: DictionaryName
    start: int
    end: int


@dataclass(frozen=True)
class MatchResult:
    work_id: str
    hits: tuple[Hit, ...]
    engaged_ai: bool
    uses_linear_terms: bool
    uses_other_stats_terms: bool


class _Node:
    __slots__ = ("children", "fail", "outputs")

    def __init__(self) -> None:
        self.children: dict[str, _Node] = {}
        self.fail: Optional[_Node] = None
        self.outputs: list[tuple[str, DictionaryName, int]] = []


class Matcher:
    """Token-level Aho-Corasick automaton over expanded dictionaries."""

    def __init__(self, dictionaries: Sequence[ExpandedDictionary]):
        if not dictionaries:
            raise EmptyPattern("no dictionaries given")
        self._root = _Node()
        n_patterns = 0
        for d in dictionaries:
            for term in d.expanded_terms:
                toks = phrase_tokens(term)
                if not toks:
                    raise EmptyPattern(f"term {term!r} has no tokens")
                node = self._root
                for tok in toks:
                    node = node.children.setdefault(tok, _Node())
                node.outputs.append((term, d.name, len(toks)))
                n_patterns += 1
        if n_patterns == 0:
            raise EmptyPattern("no patterns compiled")
        self._build_failure_links()
        self.tokens_scanned = 0  # instrumentation: total token steps taken

    def _build_failure_links(self) -> None:
        queue: deque[_Node] = deque()
        for child in self._root.children.values():
            child.fail = self._root
            queue.append(child)
        while queue:
            node = queue.popleft()
            for tok, child in node.children.items():
                fail = node.fail
                while fail is not None and tok not in fail.children:
                    fail = fail.fail
                child.fail = fail.children[tok] if fail is not None and tok in fail.children else self._root
                child.outputs.extend(child.fail.outputs)
                queue.append(child)

    def find(self, text: str) -> list[Hit]:
        """All distinct pattern occurrences, spans in original offsets."""
        tokens = tokenize(text)
        hits: list[Hit] = []
        node = self._root
        for i, (tok, _, end) in enumerate(tokens):
            self.tokens_scanned += 1
            while node is not self._root and tok not in node.children:
                node = node.fail
            node = node.children.get(tok, self._root)
            for term, dict_name, length in node.outputs:
                start = tokens[i - length + 1][1]
                hits.append(Hit(term, dict_name, start, end))
        return hits


def compile_matcher(dictionaries: Sequence[ExpandedDictionary]) -> Matcher:
    return Matcher(dictionaries)


def match_text(matcher: Matcher, work_id: str, text: str) -> MatchResult:
    hits = tuple(matcher.find(text))
    names = {h.dictionary for h in hits}
    return MatchResult(
        work_id=work_id,
        hits=hits,
        engaged_ai=DictionaryName.AI_TERMS in names,
        uses_linear_terms=DictionaryName.LINEAR_MODEL_TERMS in names,
        uses_other_stats_terms=DictionaryName.OTHER_STATS_TERMS in names,
    )


def match_abstract(matcher: Matcher, work: WorkRecord) -> MatchResult:
    return match_text(matcher, work.work_id, work.abstract_text)


def default_matcher(
    extra_dictionaries: Iterable[Dictionary] = (),
    rules: ExpansionRuleSet = DEFAULT_RULES,
) -> Matcher:
    """Matcher over the three bundled dictionaries plus optional extras
    (e.g. translated term files loaded at runtime)."""
    expanded = [expand_terms(d, rules) for d in bundled_dictionaries().values()]
    expanded.extend(expand_terms(d, rules) for d in extra_dictionaries)
    return compile_matcher(expanded)
