"""Human-validation math: sampling design, confusion metrics, Cohen's
Kappa, Krippendorff's Alpha, and the two-step adjudication that produces
ground truth."""

from __future__ import annotations

import csv
import math
from collections import Counter, defaultdict
from dataclasses import dataclass
from pathlib import Path
from typing import Hashable, Iterable, Mapping, Optional, Sequence

from .errors import FrameTooSmall, IncompleteTriplet, UndefinedMetric
from .semclass import MethodLabel

ADJUDICATED_CODER = "ADJUDICATED"


def plan_sample(
    frame_sizes: Sequence[int],
    target: int,
    inflation: float = 0.0,
) -> list[int]:
    """Per-stratum draw counts for an as-equal-as-possible allocation.

    The target is inflated by the given fraction (floored), split evenly
    across non-empty strata, remainder spread in stratum order, and capped
    at each stratum's frame size with deterministic redistribution.
    """
    if target <= 0:
        raise ValueError("target must be positive")
    inflated = math.floor(target * (1 + inflation))
    if sum(frame_sizes) < inflated:
        raise FrameTooSmall(f"frame holds {sum(frame_sizes)}, need {inflated}")
    counts = [0] * len(frame_sizes)
    nonempty = [i for i, size in enumerate(frame_sizes) if size > 0]
    base, remainder = divmod(inflated, len(nonempty))
    for rank, i in enumerate(nonempty):
        want = base + (1 if rank < remainder else 0)
        counts[i] = min(want, frame_sizes[i])
    shortfall = inflated - sum(counts)
    while shortfall > 0:
        progressed = False
        for i in nonempty:
            if shortfall == 0:
                break
            if counts[i] < frame_sizes[i]:
                counts[i] += 1
                shortfall -= 1
                progressed = True
        if not progressed:  # unreachable given the frame-size check
            raise FrameTooSmall("cannot place remaining draws")
    return counts


@dataclass(frozen=True)
class ConfusionTable:
    tp: int
    fp: int
    fn: int
    tn: int

    def __post_init__(self) -> None:
        if min(self.tp, self.fp, self.fn, self.tn) < 0:
            raise ValueError("confusion counts must be non-negative")

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn

    @classmethod
    def from_labels(cls, pred: Sequence[Hashable], truth: Sequence[Hashable], positive: Hashable) -> "ConfusionTable":
        if len(pred) != len(truth):
            raise ValueError("pred and truth must align")
        tp = fp = fn = tn = 0
        for p, t in zip(pred, truth):
            if p == positive and t == positive:
                tp += 1
            elif p == positive:
                fp += 1
            elif t == positive:
                fn += 1
            else:
                tn += 1
        return cls(tp, fp, fn, tn)


@dataclass(frozen=True)
class PrfReport:
    precision: float  # percent
    recall: float  # percent
    f1: float  # percent
    n: int

    def rounded(self) -> tuple[float, float, float]:
        return round(self.precision, 1), round(self.recall, 1), round(self.f1, 1)


def f1_from_pr(precision_pct: float, recall_pct: float) -> float:
    """Harmonic mean on the percent scale."""
    if precision_pct + recall_pct == 0:
        raise UndefinedMetric("precision + recall is zero")
    return 2 * precision_pct * recall_pct / (precision_pct + recall_pct)


def prf(table: ConfusionTable) -> PrfReport:
    if table.tp + table.fp == 0:
        raise UndefinedMetric("no positive predictions: precision undefined")
    if table.tp + table.fn == 0:
        raise UndefinedMetric("no positive truths: recall undefined")
    precision = 100.0 * table.tp / (table.tp + table.fp)
    recall = 100.0 * table.tp / (table.tp + table.fn)
    return PrfReport(precision, recall, f1_from_pr(precision, recall), table.total)


def prf_from_labels(pred: Sequence[Hashable], truth: Sequence[Hashable], positive: Hashable) -> PrfReport:
    return prf(ConfusionTable.from_labels(pred, truth, positive))


def cohens_kappa(table: ConfusionTable) -> float:
    """Chance-corrected agreement for a 2x2 table."""
    n = table.total
    if n == 0:
        raise ValueError("empty table")
    p_o = (table.tp + table.tn) / n
    pred_pos = (table.tp + table.fp) / n
    truth_pos = (table.tp + table.fn) / n
    p_e = pred_pos * truth_pos + (1 - pred_pos) * (1 - truth_pos)
    if p_e == 1.0:
        return 1.0
    return (p_o - p_e) / (1 - p_e)


def krippendorff_alpha(
    labels: Mapping[Hashable, Mapping[Hashable, Hashable]] | Sequence[Sequence[Optional[Hashable]]],
    ) -> float:
    """Nominal-data alpha via the coincidence matrix, tolerating missing
    entries; units with fewer than two labels are excluded.

    A degenerate single-value universe returns 1.0 by convention.
    """
    if not isinstance(labels, Mapping):
        units = {
            i: {j: v for j, v in enumerate(row) if v is not None}
            for i, row in enumerate(labels)
        }
    else:
        units = {u: dict(coders) for u, coders in labels.items()}
    coincidence: Counter = Counter()
    for values in units.values():
        vals = list(values.values())
        m = len(vals)
        if m < 2:
            continue
        for i, a in enumerate(vals):
            for j, b in enumerate(vals):
                if i != j:
                    coincidence[(a, b)] += 1.0 / (m - 1)
    if not coincidence:
        raise ValueError("no unit has two or more labels")
    categories = sorted({c for pair in coincidence for c in pair}, key=repr)
    if len(categories) == 1:
        return 1.0
    n_c = {c: sum(coincidence[(c, k)] for k in categories) for c in categories}
    n = sum(n_c.values())
    observed_disagreement = sum(v for (a, b), v in coincidence.items() if a != b) / n
    expected_disagreement = sum(
        n_c[a] * n_c[b] for a in categories for b in categories if a != b
    ) / (n * (n - 1))
    if expected_disagreement == 0:
        return 1.0
    return 1.0 - observed_disagreement / expected_disagreement


@dataclass(frozen=True)
class CoderLabel:
    work_id: str
    coder_id: str
    q1_has_methods: bool
    q2_is_ai: bool  # meaningful only when q1_has_methods


@dataclass(frozen=True)
class GroundTruth:
    work_id: str
    label: MethodLabel
    flagged: bool  # coder consensus conflicted with the machine label
    source: str  # "consensus" or "override"


def _majority(votes: Sequence[bool]) -> bool:
    return sum(votes) * 2 > len(votes)


def consensus_label(triplet: Sequence[CoderLabel]) -> MethodLabel:
    """Majority on Q1, then majority on Q2 among coders who saw methods."""
    if len(triplet) != 3:
        raise IncompleteTriplet(f"{triplet[0].work_id if triplet else '?'}: {len(triplet)} labels")
    if not _majority([c.q1_has_methods for c in triplet]):
        return MethodLabel.NO_METHODS
    q2_votes = [c.q2_is_ai for c in triplet if c.q1_has_methods]
    return MethodLabel.AI_METHODS if _majority(q2_votes) else MethodLabel.NON_AI_METHODS


def adjudicate(
    coder_labels: Iterable[CoderLabel],
    machine: Mapping[str, MethodLabel],
    overrides: Optional[Mapping[str, MethodLabel]] = None,
) -> dict[str, GroundTruth]:
    """Two-step ground truth: coder consensus, then machine reconciliation.

    Works where consensus conflicts with the machine are flagged for
    re-review; an override entry resolves the flag, otherwise the coder
    majority stands.
    """
    overrides = overrides or {}
    by_work: dict[str, list[CoderLabel]] = defaultdict(list)
    for label in coder_labels:
        by_work[label.work_id].append(label)
    truth: dict[str, GroundTruth] = {}
    for work_id, triplet in by_work.items():
        consensus = consensus_label(triplet)
        flagged = work_id in machine and machine[work_id] != consensus
        if work_id in overrides:
            truth[work_id] = GroundTruth(work_id, overrides[work_id], flagged, "override")
        else:
            truth[work_id] = GroundTruth(work_id, consensus, flagged, "consensus")
    return truth


def load_coder_labels(path: str | Path) -> tuple[list[CoderLabel], dict[str, MethodLabel]]:
    """CSV with columns work_id, coder_id, q1, q2 (0/1).

    Rows with coder_id == ADJUDICATED are returned separately as overrides.
    """
    labels: list[CoderLabel] = []
    overrides: dict[str, MethodLabel] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            q1 = row["q1"].strip() == "1"
            q2 = row["q2"].strip() == "1"
            if row["coder_id"].strip() == ADJUDICATED_CODER:
                if not q1:
                    overrides[row["work_id"]] = MethodLabel.NO_METHODS
                else:
                    overrides[row["work_id"]] = MethodLabel.AI_METHODS if q2 else MethodLabel.NON_AI_METHODS
            else:
                labels.append(CoderLabel(row["work_id"], row["coder_id"], q1, q2))
    return labels, overrides


@dataclass(frozen=True)
class AgreementReport:
    precision: Optional[float]
    recall: Optional[float]
    f1: Optional[float]
    cohen_kappa: float
    kripp_alpha: float
    n: int

    def to_dict(self) -> dict:
        fmt = lambda v: None if v is None else round(v, 1)
        return {
            "precision": fmt(self.precision),
            "recall": fmt(self.recall),
            "f1": fmt(self.f1),
            "cohen_kappa": round(self.cohen_kappa, 3),
            "kripp_alpha": round(self.kripp_alpha, 3),
            "n": self.n,
        }


def agreement_report(
    coder_labels: Iterable[CoderLabel],
    machine: Mapping[str, MethodLabel],
    overrides: Optional[Mapping[str, MethodLabel]] = None,
    question: str = "q1",
) -> AgreementReport:
    """Machine-vs-truth confusion metrics plus agreement coefficients.

    question "q1" scores methods detection (any methods vs none);
    question "q2" scores AI classification on works whose ground truth
    reports methods.
    """
    coder_labels = list(coder_labels)
    truth = adjudicate(coder_labels, machine, overrides)
    pred: list[bool] = []
    actual: list[bool] = []
    alpha_units: dict[str, dict[str, Hashable]] = defaultdict(dict)
    for label in coder_labels:
        if question == "q1":
            alpha_units[label.work_id][label.coder_id] = label.q1_has_methods
        elif label.q1_has_methods:
            alpha_units[label.work_id][label.coder_id] = label.q2_is_ai
    for work_id, gt in truth.items():
        if work_id not in machine:
            continue
        if question == "q1":
            pred.append(machine[work_id] is not MethodLabel.NO_METHODS)
            actual.append(gt.label is not MethodLabel.NO_METHODS)
        else:
            if gt.label is MethodLabel.NO_METHODS:
                continue
            pred.append(machine[work_id] is MethodLabel.AI_METHODS)
            actual.append(gt.label is MethodLabel.AI_METHODS)
    table = ConfusionTable.from_labels(pred, actual, True)
    try:
        scores = prf(table)
        precision, recall, f1 = scores.precision, scores.recall, scores.f1
    except UndefinedMetric:
        precision = recall = f1 = None
    return AgreementReport(
        precision=precision,
        recall=recall,
        f1=f1,
        cohen_kappa=cohens_kappa(table),
        kripp_alpha=krippendorff_alpha(alpha_units),
        n=table.total,
    )
