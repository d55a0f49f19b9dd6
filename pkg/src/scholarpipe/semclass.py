"""Two-stage method classification over a pluggable inference backend.

Stage 1 extracts method sentences from the abstract; stage 2 turns them
into a method list with a Yes/No AI verdict. Three prompting strategies
vary the examples embedded in the stage-2 template.
"""

from __future__ import annotations

import hashlib
import json
import os
import random
from dataclasses import dataclass, field
from enum import Enum
from importlib import resources
from pathlib import Path
from typing import Iterable, Iterator, Optional

from .backends import Backend
from .corpus import WorkRecord
from .errors import PoolTooSmall
from .lexicon import Dictionary

EXAMPLES_PER_POOL = 8


class StrategyKind(Enum):
    BASELINE = "baseline"
    FIXED_EXAMPLES = "fixed"
    RANDOM_EXAMPLES = "random"


class MethodLabel(Enum):
    NO_METHODS = "NoMethods"
    NON_AI_METHODS = "NonAIMethods"
    AI_METHODS = "AIMethods"
    UNCLASSIFIABLE = "Unclassifiable"


class ParseStatus(Enum):
    OK = "Ok"
    REPAIRED = "Repaired"
    FAILED = "Failed"


@dataclass(frozen=True)
class PromptStrategy:
    kind: StrategyKind
    seed: int = 0
    ai_pool: tuple[str, ...] = ()
    non_ai_pool: tuple[str, ...] = ()

    @classmethod
    def from_dictionaries(
        cls, kind: StrategyKind, ai: Dictionary, non_ai: Dictionary, seed: int = 0
    ) -> "PromptStrategy":
        return cls(kind=kind, seed=seed, ai_pool=ai.terms, non_ai_pool=non_ai.terms)


@dataclass(frozen=True)
class PromptTemplates:
    stage1: str
    stage2: str

    @classmethod
    def bundled(cls) -> "PromptTemplates":
        data = resources.files("scholarpipe.data")
        return cls(
            stage1=data.joinpath("stage1_prompt.txt").read_text(encoding="utf-8"),
            stage2=data.joinpath("stage2_prompt.txt").read_text(encoding="utf-8"),
        )

    @classmethod
    def from_files(cls, stage1: str | Path, stage2: str | Path) -> "PromptTemplates":
        return cls(
            stage1=Path(stage1).read_text(encoding="utf-8"),
            stage2=Path(stage2).read_text(encoding="utf-8"),
        )


def escape_quoted(text: str) -> str:
    """Escape the template's quote delimiters inside substituted text."""
    return text.replace("\\", "\\\\").replace('"', '\\"')


def unescape_quoted(text: str) -> str:
    return text.replace('\\"', '"').replace("\\\\", "\\")


def build_stage1_prompt(abstract: str, templates: Optional[PromptTemplates] = None) -> str:
    if not abstract:
        raise ValueError("abstract must be non-empty")
    templates = templates or PromptTemplates.bundled()
    return templates.stage1.format(abstract=escape_quoted(abstract))


def _work_seed(seed: int, work_id: str) -> int:
    digest = hashlib.sha256(f"{seed}:{work_id}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big")


def strategy_examples(strategy: PromptStrategy, work_id: str) -> tuple[tuple[str, ...], tuple[str, ...]]:
    """The (AI, non-AI) example terms a strategy embeds for one work."""
    if strategy.kind is StrategyKind.BASELINE:
        return ("...",), ("...",)
    for pool_name, pool in (("ai", strategy.ai_pool), ("non_ai", strategy.non_ai_pool)):
        if len(pool) < EXAMPLES_PER_POOL:
            raise PoolTooSmall(f"{pool_name} pool has {len(pool)} terms, need {EXAMPLES_PER_POOL}")
    if strategy.kind is StrategyKind.FIXED_EXAMPLES:
        return strategy.ai_pool[:EXAMPLES_PER_POOL], strategy.non_ai_pool[:EXAMPLES_PER_POOL]
    rng = random.Random(_work_seed(strategy.seed, work_id))
    ai = tuple(rng.sample(strategy.ai_pool, EXAMPLES_PER_POOL))
    non_ai = tuple(rng.sample(strategy.non_ai_pool, EXAMPLES_PER_POOL))
    return ai, non_ai


def build_stage2_prompt(
    sentences: str,
    strategy: PromptStrategy,
    work_id: str = "",
    templates: Optional[PromptTemplates] = None,
) -> str:
    templates = templates or PromptTemplates.bundled()
    yes_examples, no_examples = strategy_examples(strategy, work_id)
    return templates.stage2.format(
        sentences=escape_quoted(sentences),
        yes_examples=", ".join(yes_examples),
        no_examples=", ".join(no_examples),
    )


@dataclass(frozen=True)
class StageTwoResult:
    work_id: str
    answer: Optional[bool]  # True=Yes, None when parse failed
    methods: tuple[str, ...]
    raw_output: str
    parse_status: ParseStatus


def _strip_code_fences(raw: str) -> str:
    text = raw.strip()
    if text.startswith("```"):
        text = text.split("\n", 1)[1] if "\n" in text else ""
        if text.rstrip().endswith("```"):
            text = text.rstrip()[:-3]
    return text.strip()


def _first_balanced_object(text: str) -> Optional[str]:
    start = text.find("{")
    if start < 0:
        return None
    depth = 0
    in_string = False
    i = start
    while i < len(text):
        ch = text[i]
        if in_string:
            if ch == "\\":
                i += 1
            elif ch == '"':
                in_string = False
        elif ch == '"':
            in_string = True
        elif ch == "{":
            depth += 1
        elif ch == "}":
            depth -= 1
            if depth == 0:
                return text[start : i + 1]
        i += 1
    return None


def _try_parse_object(text: str) -> Optional[dict]:
    try:
        obj = json.loads(text)
        return obj if isinstance(obj, dict) else None
    except json.JSONDecodeError:
        return None


def parse_stage2_output(raw: str, work_id: str = "") -> StageTwoResult:
    """Strict JSON parse with one repair pass; never raises."""

    def failed() -> StageTwoResult:
        return StageTwoResult(work_id, None, (), raw, ParseStatus.FAILED)

    obj = _try_parse_object(raw.strip())
    status = ParseStatus.OK
    if obj is None:
        candidate = _strip_code_fences(raw)
        obj = _try_parse_object(candidate)
        if obj is None:
            balanced = _first_balanced_object(candidate)
            obj = _try_parse_object(balanced) if balanced else None
        if obj is None:
            return failed()
        status = ParseStatus.REPAIRED
    answer_raw = obj.get("Answer")
    if not isinstance(answer_raw, str) or answer_raw.strip().lower() not in ("yes", "no"):
        return failed()
    answer = answer_raw.strip().lower() == "yes"
    methods_raw = obj.get("Methods", "")
    if isinstance(methods_raw, list):
        methods = tuple(str(m).strip() for m in methods_raw if str(m).strip())
    elif isinstance(methods_raw, str):
        methods = tuple(m.strip() for m in methods_raw.split(",") if m.strip())
    else:
        return failed()
    return StageTwoResult(work_id, answer, methods, raw, status)


@dataclass(frozen=True)
class ClassificationResult:
    work_id: str
    strategy: StrategyKind
    label: MethodLabel
    methods: tuple[str, ...]
    parse_status: ParseStatus
    audit: dict = field(default_factory=dict, compare=False)

    def to_json(self) -> str:
        return json.dumps(
            {
                "work_id": self.work_id,
                "strategy": self.strategy.value,
                "label": self.label.value,
                "methods": list(self.methods),
                "parse_status": self.parse_status.value,
                "audit": self.audit,
            },
            sort_keys=True,
            ensure_ascii=False,
        )

    @classmethod
    def from_json(cls, line: str) -> "ClassificationResult":
        obj = json.loads(line)
        return cls(
            work_id=obj["work_id"],
            strategy=StrategyKind(obj["strategy"]),
            label=MethodLabel(obj["label"]),
            methods=tuple(obj.get("methods", [])),
            parse_status=ParseStatus(obj["parse_status"]),
            audit=obj.get("audit", {}),
        )


def classify_work(
    work: WorkRecord,
    strategy: PromptStrategy,
    backend: Backend,
    templates: Optional[PromptTemplates] = None,
) -> ClassificationResult:
    """Run both stages for one work and map the outputs to a label."""
    templates = templates or PromptTemplates.bundled()
    audit: dict = {}
    stage1_raw = backend.generate(build_stage1_prompt(work.abstract_text, templates))
    sentences = stage1_raw.strip()
    if not sentences:
        audit["stage1_empty"] = True
        return ClassificationResult(work.work_id, strategy.kind, MethodLabel.NO_METHODS, (), ParseStatus.OK, audit)
    prompt2 = build_stage2_prompt(sentences, strategy, work.work_id, templates)
    result = parse_stage2_output(backend.generate(prompt2), work.work_id)
    if result.parse_status is ParseStatus.FAILED:
        # One retry with the identical prompt before giving up.
        audit["retried"] = True
        result = parse_stage2_output(backend.generate(prompt2), work.work_id)
    if result.parse_status is ParseStatus.FAILED:
        return ClassificationResult(work.work_id, strategy.kind, MethodLabel.UNCLASSIFIABLE, (), ParseStatus.FAILED, audit)
    if result.answer:
        if not result.methods:
            audit["yes_with_empty_methods"] = True
        label = MethodLabel.AI_METHODS
    elif result.methods:
        label = MethodLabel.NON_AI_METHODS
    else:
        label = MethodLabel.NO_METHODS
    return ClassificationResult(work.work_id, strategy.kind, label, result.methods, result.parse_status, audit)


@dataclass
class CampaignStats:
    classified: int = 0
    resumed: int = 0
    duplicates: int = 0
    unclassifiable: int = 0


def run_campaign(
    works: Iterable[WorkRecord],
    strategy: PromptStrategy,
    backend: Backend,
    checkpoint_path: str | Path,
    templates: Optional[PromptTemplates] = None,
    stats: Optional[CampaignStats] = None,
) -> Iterator[ClassificationResult]:
    """Exactly-once labeling per work id, resumable via the checkpoint file.

    The checkpoint is the result store: completed records are appended and
    fsynced, so a killed run resumes where it stopped and the final file is
    byte-identical to an uninterrupted run.
    """
    if stats is None:
        stats = CampaignStats()
    templates = templates or PromptTemplates.bundled()
    path = Path(checkpoint_path)
    done: dict[str, ClassificationResult] = {}
    if path.exists():
        with open(path, "r", encoding="utf-8") as fh:
            for line in fh:
                if line.strip():
                    prior = ClassificationResult.from_json(line)
                    done[prior.work_id] = prior
    seen_this_run: set[str] = set()
    with open(path, "a", encoding="utf-8") as out:
        for work in works:
            if work.work_id in seen_this_run:
                stats.duplicates += 1
                continue
            seen_this_run.add(work.work_id)
            if work.work_id in done:
                stats.resumed += 1
                yield done[work.work_id]
                continue
            result = classify_work(work, strategy, backend, templates)
            out.write(result.to_json())
            out.write("\n")
            out.flush()
            os.fsync(out.fileno())
            stats.classified += 1
            if result.label is MethodLabel.UNCLASSIFIABLE:
                stats.unclassifiable += 1
            yield result


def load_results(path: str | Path) -> list[ClassificationResult]:
    with open(path, "r", encoding="utf-8") as fh:
        return [ClassificationResult.from_json(line) for line in fh if line.strip()]


def label_cross_table(
    a: Iterable[ClassificationResult], b: Iterable[ClassificationResult]
) -> dict[tuple[MethodLabel, MethodLabel], int]:
    """3x3 (plus Unclassifiable) cross-table between two strategy runs;
    off-diagonal mass is the disagreement rate's numerator."""
    by_id = {r.work_id: r.label for r in b}
    table: dict[tuple[MethodLabel, MethodLabel], int] = {}
    for r in a:
        if r.work_id in by_id:
            key = (r.label, by_id[r.work_id])
            table[key] = table.get(key, 0) + 1
    return table
