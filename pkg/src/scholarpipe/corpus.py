"""Work record parsing, filtering, and normalization (ingest stream).

Records arrive as line-delimited JSON, optionally gzip-compressed. The
abstract may be stored as plain text or as an inverted index
(token -> positions); the inverted form is decoded on ingest.
"""

from __future__ import annotations

import datetime as dt
import gzip
import io
import json
from collections import Counter
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Callable, Iterable, Iterator, Mapping, Optional, Sequence

from .errors import DuplicatePosition, MalformedRecord, SourceIOError

MIN_DATE = dt.date(1960, 1, 1)
MAX_DATE = dt.date(2024, 12, 31)
MIN_ABSTRACT_CHARS = 200


class WorkType(Enum):
    ARTICLE = "article"
    BOOK = "book"
    BOOK_CHAPTER = "book-chapter"
    DISSERTATION = "dissertation"
    PREPRINT = "preprint"


ALLOWED_WORK_TYPES = frozenset(WorkType)


class RejectReason(Enum):
    BAD_WORK_TYPE = "BadWorkType"
    DATE_OUT_OF_RANGE = "DateOutOfRange"
    ABSTRACT_TOO_SHORT = "AbstractTooShort"
    MISSING_ABSTRACT = "MissingAbstract"


@dataclass(frozen=True)
class WorkRecord:
    work_id: str
    # Unknown publication types survive parsing as their raw string so the
    # filter can count them as BadWorkType rather than malformed.
    work_type: WorkType | str
    pub_date: dt.date
    language: str
    title: str
    abstract_text: str
    domain_id: Optional[str] = None
    field_id: Optional[str] = None
    subfield_id: Optional[str] = None
    topic_id: Optional[str] = None
    referenced_ids: tuple[str, ...] = ()
    citations_3y: int = 0
    retracted: bool = False
    first_author_country: Optional[str] = None

    @property
    def pub_year(self) -> int:
        return self.pub_date.year

    def to_json(self) -> str:
        obj = {
            "id": self.work_id,
            "type": self.work_type.value if isinstance(self.work_type, WorkType) else self.work_type,
            "publication_date": self.pub_date.isoformat(),
            "language": self.language,
            "title": self.title,
            "abstract": self.abstract_text,
            "domain_id": self.domain_id,
            "field_id": self.field_id,
            "subfield_id": self.subfield_id,
            "topic_id": self.topic_id,
            "referenced_works": list(self.referenced_ids),
            "citations_3y": self.citations_3y,
            "is_retracted": self.retracted,
            "first_author_country": self.first_author_country,
        }
        return json.dumps(obj, sort_keys=True, ensure_ascii=False)


@dataclass(frozen=True)
class Taxonomy:
    """Domain -> field hierarchy with a designated Computer Science field."""

    domains: Mapping[str, tuple[str, ...]]
    topic_to_field: Mapping[str, str]
    cs_field_id: str

    def __post_init__(self) -> None:
        seen: dict[str, str] = {}
        for domain, fields in self.domains.items():
            for f in fields:
                if f in seen:
                    raise ValueError(f"field {f} belongs to both {seen[f]} and {domain}")
                seen[f] = domain
        object.__setattr__(self, "_field_to_domain", seen)

    def domain_of_field(self, field_id: str) -> Optional[str]:
        return self._field_to_domain.get(field_id)

    def field_of_topic(self, topic_id: str) -> Optional[str]:
        return self.topic_to_field.get(topic_id)

    @property
    def field_ids(self) -> tuple[str, ...]:
        return tuple(self._field_to_domain)

    @classmethod
    def from_json(cls, path: str | Path) -> "Taxonomy":
        data = json.loads(Path(path).read_text(encoding="utf-8"))
        return cls(
            domains={d: tuple(fs) for d, fs in data["domains"].items()},
            topic_to_field=dict(data.get("topic_to_field", {})),
            cs_field_id=data["cs_field_id"],
        )


def decode_inverted_abstract(inv: Mapping[str, Sequence[int]]) -> str:
    """Reassemble an inverted abstract index into plain text.

    Gaps in the position range are skipped; duplicate positions raise.
    """
    placed: dict[int, str] = {}
    for token, positions in inv.items():
        for pos in positions:
            if pos in placed:
                raise DuplicatePosition(f"position {pos}: {placed[pos]!r} vs {token!r}")
            placed[pos] = token
    return " ".join(placed[p] for p in sorted(placed))


@dataclass(frozen=True)
class Accept:
    record: WorkRecord


@dataclass(frozen=True)
class Reject:
    reason: RejectReason


def parse_record(line: str) -> WorkRecord:
    """Parse one raw JSON line into a WorkRecord.

    Raises MalformedRecord for anything unparseable; filtering decisions
    are left to filter_work.
    """
    try:
        obj = json.loads(line)
        if not isinstance(obj, dict):
            raise ValueError("record is not an object")
        work_id = str(obj["id"])
        raw_type = str(obj["type"]).lower()
        try:
            work_type: WorkType | str = WorkType(raw_type)
        except ValueError:
            work_type = raw_type
        pub_date = _parse_date(obj["publication_date"])
        abstract = obj.get("abstract")
        if abstract is None and "abstract_inverted_index" in obj:
            abstract = decode_inverted_abstract(obj["abstract_inverted_index"])
        refs = obj.get("referenced_works") or []
        seen: set[str] = set()
        deduped = tuple(r for r in map(str, refs) if not (r in seen or seen.add(r)))
        citations = int(obj.get("citations_3y", 0))
        if citations < 0:
            raise ValueError("negative citation count")
        return WorkRecord(
            work_id=work_id,
            work_type=work_type,
            pub_date=pub_date,
            language=str(obj.get("language") or "other"),
            title=str(obj.get("title") or ""),
            abstract_text=str(abstract) if abstract is not None else "",
            domain_id=_opt_str(obj.get("domain_id")),
            field_id=_opt_str(obj.get("field_id")),
            subfield_id=_opt_str(obj.get("subfield_id")),
            topic_id=_opt_str(obj.get("topic_id")),
            referenced_ids=deduped,
            citations_3y=citations,
            retracted=bool(obj.get("is_retracted", False)),
            first_author_country=_opt_str(obj.get("first_author_country")),
        )
    except MalformedRecord:
        raise
    except DuplicatePosition as exc:
        raise MalformedRecord(str(exc)) from exc
    except (KeyError, ValueError, TypeError) as exc:
        raise MalformedRecord(str(exc)) from exc


def _opt_str(value) -> Optional[str]:
    return None if value is None else str(value)


def _parse_date(raw) -> dt.date:
    # Year-only precision is coerced to January 1 of that year.
    text = str(raw).strip()
    if len(text) == 4 and text.isdigit():
        return dt.date(int(text), 1, 1)
    return dt.date.fromisoformat(text)


def filter_work(record: WorkRecord) -> Accept | Reject:
    """Accept iff type, date range, and abstract length all pass."""
    if record.work_type not in ALLOWED_WORK_TYPES:
        return Reject(RejectReason.BAD_WORK_TYPE)
    if not (MIN_DATE <= record.pub_date <= MAX_DATE):
        return Reject(RejectReason.DATE_OUT_OF_RANGE)
    if not record.abstract_text:
        return Reject(RejectReason.MISSING_ABSTRACT)
    if len(record.abstract_text) < MIN_ABSTRACT_CHARS:
        return Reject(RejectReason.ABSTRACT_TOO_SHORT)
    return Accept(record)


@dataclass
class IngestStats:
    total_lines: int = 0
    accepted: int = 0
    malformed: int = 0
    rejected: Counter = field(default_factory=Counter)

    def merge(self, other: "IngestStats") -> "IngestStats":
        merged = IngestStats(
            total_lines=self.total_lines + other.total_lines,
            accepted=self.accepted + other.accepted,
            malformed=self.malformed + other.malformed,
            rejected=self.rejected + other.rejected,
        )
        return merged

    def to_dict(self) -> dict:
        return {
            "total_lines": self.total_lines,
            "accepted": self.accepted,
            "malformed": self.malformed,
            "rejected": {reason.value: n for reason, n in sorted(self.rejected.items(), key=lambda kv: kv[0].value)},
        }


def open_record_source(source: str | Path) -> io.TextIOBase:
    path = Path(source)
    try:
        if path.suffix == ".gz":
            return io.TextIOWrapper(gzip.open(path, "rb"), encoding="utf-8")
        return open(path, "r", encoding="utf-8")
    except OSError as exc:
        raise SourceIOError(str(exc)) from exc


def ingest_stream(
    source: str | Path | Iterable[str],
    stats: Optional[IngestStats] = None,
) -> Iterator[WorkRecord]:
    """Lazily yield accepted records; malformed lines are counted, not fatal.

    Pass an IngestStats to observe counts as the stream is consumed.
    """
    if stats is None:
        stats = IngestStats()
    lines: Iterable[str]
    close = None
    if isinstance(source, (str, Path)):
        handle = open_record_source(source)
        lines, close = handle, handle.close
    else:
        lines = source
    try:
        for line in lines:
            if not line.strip():
                continue
            stats.total_lines += 1
            try:
                record = parse_record(line)
            except MalformedRecord:
                stats.malformed += 1
                continue
            verdict = filter_work(record)
            if isinstance(verdict, Reject):
                stats.rejected[verdict.reason] += 1
                continue
            stats.accepted += 1
            yield verdict.record
    except OSError as exc:
        raise SourceIOError(str(exc)) from exc
    finally:
        if close is not None:
            close()


@dataclass(frozen=True)
class ReferenceFlags:
    cites_same_field: bool
    cites_cs: bool
    cites_other_excl_cs: bool
    unresolved: int


def reference_flags(
    work: WorkRecord,
    resolver: Callable[[str], Optional[str]],
    cs_field_id: str,
) -> ReferenceFlags:
    """Classify a work's references relative to its own field.

    Unresolvable reference ids are skipped and counted so callers can
    exclude works with incomplete citation information.
    """
    same = cs = other = False
    unresolved = 0
    for ref in work.referenced_ids:
        ref_field = resolver(ref)
        if ref_field is None:
            unresolved += 1
            continue
        if ref_field == cs_field_id:
            cs = True
        if ref_field == work.field_id:
            same = True
        elif ref_field != cs_field_id:
            other = True
    return ReferenceFlags(same, cs, other, unresolved)


def write_normalized(records: Iterable[WorkRecord], path: str | Path) -> int:
    """Write records as plain-abstract JSONL; returns the record count."""
    n = 0
    with open(path, "w", encoding="utf-8") as out:
        for record in records:
            out.write(record.to_json())
            out.write("\n")
            n += 1
    return n


def load_normalized(path: str | Path) -> Iterator[WorkRecord]:
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                yield parse_record(line)
