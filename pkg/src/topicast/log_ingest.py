"""Parse activity logs and bucket them per entity and time period."""

from __future__ import annotations

import csv
import hashlib
import json
import logging
from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import Iterable, Iterator

log = logging.getLogger(__name__)

FORMATS = ("jsonl", "csv")
MAX_MALFORMED_FRACTION = 0.5


class IngestError(Exception):
    pass


class LogFormatError(IngestError):
    """Too many lines could not be decoded."""


@dataclass(frozen=True)
class LogEntry:
    entity_id: str
    timestamp: int
    content: str

    def __post_init__(self):
        if not self.entity_id:
            raise ValueError("entity_id must be non-empty")
        if self.timestamp < 0:
            raise ValueError("timestamp must be >= 0")


@dataclass
class ParsedLog:
    entries: list[LogEntry]
    skipped: int = 0

    @property
    def line_count(self) -> int:
        return len(self.entries) + self.skipped


def _entry_from_fields(entity, ts, content) -> LogEntry:
    if not isinstance(entity, str) or not entity:
        raise ValueError("bad entity")
    if isinstance(ts, bool):
        raise ValueError("bad ts")
    if isinstance(ts, str):
        ts = int(ts.strip())
    elif isinstance(ts, float):
        if not ts.is_integer():
            raise ValueError("non-integral ts")
        ts = int(ts)
    elif not isinstance(ts, int):
        raise ValueError("bad ts")
    if content is None:
        raise ValueError("missing content")
    if not isinstance(content, str):
        raise ValueError("bad content")
    return LogEntry(entity, ts, content)


def _jsonl_records(lines: Iterable[str]) -> Iterator[LogEntry | None]:
    for line in lines:
        try:
            obj = json.loads(line)
            yield _entry_from_fields(obj["entity"], obj["ts"], obj["content"])
        except (ValueError, KeyError, TypeError):
            yield None


def _csv_records(lines: Iterable[str]) -> Iterator[LogEntry | None]:
    reader = csv.reader(lines)
    header = next(reader, None)
    if header is None:
        return
    header = [h.strip() for h in header]
    try:
        cols = [header.index(name) for name in ("entity", "ts", "content")]
    except ValueError:
        raise LogFormatError(f"CSV header must contain entity,ts,content; got {header}") from None
    for row in reader:
        try:
            if len(row) != len(header):
                raise ValueError("column count")
            yield _entry_from_fields(*(row[i] for i in cols))
        except (ValueError, TypeError):
            yield None


def parse_log(lines: Iterable[str], fmt: str = "jsonl") -> ParsedLog:
    """Decode log lines into :class:`LogEntry` records, preserving order.

    Malformed records are skipped and counted. More than half of them being
    malformed raises :class:`LogFormatError`. I/O errors from the underlying
    stream propagate unchanged.
    """
    if fmt not in FORMATS:
        raise ValueError(f"unknown log format {fmt!r}; expected one of {FORMATS}")
    records = _jsonl_records(lines) if fmt == "jsonl" else _csv_records(lines)
    entries: list[LogEntry] = []
    skipped = 0
    for rec in records:
        if rec is None:
            skipped += 1
        else:
            entries.append(rec)
    total = len(entries) + skipped
    if total and skipped / total > MAX_MALFORMED_FRACTION:
        raise LogFormatError(f"{skipped} of {total} records malformed")
    if skipped:
        log.warning("skipped %d malformed %s records", skipped, fmt)
    return ParsedLog(entries, skipped)


def read_log(path, fmt: str | None = None) -> ParsedLog:
    """Parse a log file; the format defaults to the file extension."""
    path = str(path)
    if fmt is None:
        fmt = "csv" if path.endswith(".csv") else "jsonl"
    newline = "" if fmt == "csv" else None
    with open(path, encoding="utf-8", newline=newline) as fh:
        return parse_log(fh, fmt)


def write_jsonl(entries: Iterable[LogEntry], fh) -> None:
    for e in entries:
        fh.write(json.dumps({"entity": e.entity_id, "ts": e.timestamp, "content": e.content}))
        fh.write("\n")


# ---------------------------------------------------------------------------
# bucketing
# ---------------------------------------------------------------------------


def content_key(content: str) -> str:
    return hashlib.sha256(content.encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class ActivitySet:
    """Unique content documents of one entity in one period.

    ``docs`` is kept sorted by content hash so that the set, and any float sum
    taken over it, does not depend on input order.
    """

    entity_id: str
    period: int
    docs: tuple[str, ...]

    def __len__(self):
        return len(self.docs)


@dataclass
class Buckets:
    sets: dict[tuple[str, int], ActivitySet] = field(default_factory=dict)
    entry_counts: dict[tuple[str, int], int] = field(default_factory=dict)
    dropped: int = 0

    def __getitem__(self, key):
        return self.sets[key]

    def __contains__(self, key):
        return key in self.sets

    def __len__(self):
        return len(self.sets)

    def entities(self) -> list[str]:
        return sorted({e for e, _ in self.sets})

    def periods(self) -> list[int]:
        return sorted({p for _, p in self.sets})

    def unique_docs(self) -> list[str]:
        seen = {}
        for key in sorted(self.sets):
            for d in self.sets[key].docs:
                seen.setdefault(content_key(d), d)
        return [seen[h] for h in sorted(seen)]

    @property
    def total_entries(self) -> int:
        return sum(self.entry_counts.values())

    def same_sets(self, other: "Buckets") -> bool:
        return self.sets == other.sets


def period_index(timestamp: int, epoch_start: int, period_length: int) -> int:
    """Half-open fixed-length periods [start + i*len, start + (i+1)*len)."""
    return (timestamp - epoch_start) // period_length


def month_index(timestamp: int, epoch_start: int) -> int:
    """Calendar-month periods in UTC, counted from the month of ``epoch_start``."""
    t = datetime.fromtimestamp(timestamp, tz=timezone.utc)
    s = datetime.fromtimestamp(epoch_start, tz=timezone.utc)
    return (t.year - s.year) * 12 + (t.month - s.month)


def bucket(
    entries: Iterable[LogEntry],
    epoch_start: int = 0,
    period_length: int = 86400,
    calendar_months: bool = False,
) -> Buckets:
    """Group entries into per-(entity, period) sets of unique documents.

    Entries older than ``epoch_start`` are dropped and counted.
    """
    if not calendar_months and period_length <= 0:
        raise ValueError("period_length must be positive")
    raw: dict[tuple[str, int], dict[str, str]] = {}
    counts: dict[tuple[str, int], int] = {}
    dropped = 0
    for e in entries:
        if e.timestamp < epoch_start:
            dropped += 1
            continue
        if calendar_months:
            p = month_index(e.timestamp, epoch_start)
        else:
            p = period_index(e.timestamp, epoch_start, period_length)
        key = (e.entity_id, p)
        raw.setdefault(key, {}).setdefault(content_key(e.content), e.content)
        counts[key] = counts.get(key, 0) + 1
    sets = {
        key: ActivitySet(key[0], key[1], tuple(docs[h] for h in sorted(docs)))
        for key, docs in sorted(raw.items())
    }
    return Buckets(sets, dict(sorted(counts.items())), dropped)


def merge_buckets(parts: Iterable[Buckets]) -> Buckets:
    """Union bucket maps computed on disjoint shards of the input."""
    raw: dict[tuple[str, int], dict[str, str]] = {}
    counts: dict[tuple[str, int], int] = {}
    dropped = 0
    for part in parts:
        dropped += part.dropped
        for key, aset in part.sets.items():
            target = raw.setdefault(key, {})
            for d in aset.docs:
                target.setdefault(content_key(d), d)
        for key, n in part.entry_counts.items():
            counts[key] = counts.get(key, 0) + n
    sets = {
        key: ActivitySet(key[0], key[1], tuple(docs[h] for h in sorted(docs)))
        for key, docs in sorted(raw.items())
    }
    return Buckets(sets, dict(sorted(counts.items())), dropped)


def unbucket(buckets: Buckets, epoch_start: int, period_length: int) -> list[LogEntry]:
    """One entry per stored document, stamped at the start of its period."""
    out = []
    for (entity, p), aset in buckets.sets.items():
        ts = epoch_start + p * period_length
        out.extend(LogEntry(entity, ts, d) for d in aset.docs)
    return out


def buckets_to_json(buckets: Buckets) -> dict:
    return {
        "dropped": buckets.dropped,
        "buckets": [
            {"entity": e, "period": p, "entries": buckets.entry_counts.get((e, p), 0), "docs": list(s.docs)}
            for (e, p), s in buckets.sets.items()
        ],
    }


def buckets_from_json(obj: dict) -> Buckets:
    sets = {}
    counts = {}
    for b in obj["buckets"]:
        key = (b["entity"], int(b["period"]))
        sets[key] = ActivitySet(key[0], key[1], tuple(b["docs"]))
        counts[key] = int(b["entries"])
    return Buckets(sets, counts, int(obj.get("dropped", 0)))
