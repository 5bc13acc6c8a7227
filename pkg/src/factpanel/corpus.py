"""Article corpus ingestion, gold labels, taxonomy, and stratified sampling.

Corpora arrive as files: the canonical format is JSON-lines with one
article object per line; CSV with a fixed header is also accepted.
All loaders validate records and never mutate their inputs.
"""

from __future__ import annotations

import csv
import enum
import json
import random
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from pathlib import Path
from typing import Iterable, Optional

import yaml

CSV_HEADER = ["id", "url", "source", "topic", "published_at", "title", "text"]


class CorpusError(ValueError):
    """Fatal corpus problem: unreadable file, unknown format, duplicate ids."""


class Label(enum.Enum):
    """The two factuality verdicts an annotator may assign."""

    FACTUALLY_CORRECT = "Factually Correct"
    FACTUALLY_INCORRECT = "Factually Incorrect"

    def __str__(self) -> str:
        return self.value


def parse_label(text: str) -> Label:
    """Parse a label surface form, case-insensitively and whitespace-tolerant.

    Anything other than the two exact surface forms is a parse failure,
    never silently coerced.
    """
    norm = " ".join(text.split()).lower()
    if norm == "factually correct":
        return Label.FACTUALLY_CORRECT
    if norm == "factually incorrect":
        return Label.FACTUALLY_INCORRECT
    raise ValueError(f"unparseable label: {text!r}")


class Provenance(enum.Enum):
    HUMAN_REVIEWED = "HumanReviewed"
    IMPORTED = "Imported"


@dataclass(frozen=True)
class Article:
    """One news item: source/topic metadata plus the body text to annotate."""

    id: str
    url: str
    source: str
    topic: str
    published_at: datetime
    title: str
    text: str

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "url": self.url,
            "source": self.source,
            "topic": self.topic,
            "published_at": self.published_at.isoformat().replace("+00:00", "Z"),
            "title": self.title,
            "text": self.text,
        }


@dataclass(frozen=True)
class GoldLabel:
    article_id: str
    label: Label
    provenance: Provenance = Provenance.IMPORTED


@dataclass(frozen=True)
class Taxonomy:
    """Configured topic/source/candidate/party vocabulary.

    Ships as a checked-in config file and is used for validation and
    stratification, never hardcoded.
    """

    topics: tuple[str, ...]
    sources: tuple[str, ...]
    candidates: tuple[str, ...]
    parties: tuple[str, ...]

    def __post_init__(self) -> None:
        for name in ("topics", "sources", "candidates", "parties"):
            entries = getattr(self, name)
            if not entries:
                raise ValueError(f"taxonomy {name} must be non-empty")
            if len(set(entries)) != len(entries):
                raise ValueError(f"taxonomy {name} entries must be unique")


def load_taxonomy(path: str | Path) -> Taxonomy:
    """Load a taxonomy from a JSON or YAML file with keys topics/sources/candidates/parties."""
    path = Path(path)
    raw = path.read_text(encoding="utf-8")
    data = yaml.safe_load(raw) if path.suffix in (".yaml", ".yml") else json.loads(raw)
    try:
        return Taxonomy(
            topics=tuple(data["topics"]),
            sources=tuple(data["sources"]),
            candidates=tuple(data["candidates"]),
            parties=tuple(data["parties"]),
        )
    except KeyError as exc:
        raise CorpusError(f"taxonomy file missing key {exc}") from exc


@dataclass(frozen=True)
class SkippedRow:
    """One rejected input row with its position and the reason."""

    position: int  # 1-based line/row number in the source file
    reason: str


@dataclass
class LoadResult:
    """All valid articles plus a per-row account of what was skipped."""

    articles: list[Article]
    skipped: list[SkippedRow] = field(default_factory=list)

    @property
    def skipped_count(self) -> int:
        return len(self.skipped)


def _parse_timestamp(value: str) -> datetime:
    ts = datetime.fromisoformat(value.replace("Z", "+00:00"))
    if ts.tzinfo is None:
        ts = ts.replace(tzinfo=timezone.utc)
    return ts.astimezone(timezone.utc)


def _validate_article(
    record: dict,
    taxonomy: Optional[Taxonomy],
    window: Optional[tuple[datetime, datetime]],
) -> Article:
    missing = [key for key in CSV_HEADER if key not in record or record[key] is None]
    if missing:
        raise ValueError(f"missing fields: {', '.join(missing)}")
    text = str(record["text"])
    if not text.strip():
        raise ValueError("empty text")
    try:
        published_at = _parse_timestamp(str(record["published_at"]))
    except ValueError as exc:
        raise ValueError(f"bad published_at: {exc}") from exc
    if window is not None and not (window[0] <= published_at <= window[1]):
        raise ValueError("published_at outside collection window")
    source = str(record["source"])
    topic = str(record["topic"])
    if taxonomy is not None:
        if source not in taxonomy.sources:
            raise ValueError(f"unknown source: {source!r}")
        if topic not in taxonomy.topics:
            raise ValueError(f"unknown topic: {topic!r}")
    return Article(
        id=str(record["id"]),
        url=str(record["url"]),
        source=source,
        topic=topic,
        published_at=published_at,
        title=str(record["title"]),
        text=text,
    )


def _iter_records(path: Path, format: str) -> Iterable[tuple[int, dict | str]]:
    """Yield (position, record) pairs; a str record is a row-level parse error."""
    if format == "jsonl":
        with path.open(encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                if not line.strip():
                    continue
                try:
                    yield lineno, json.loads(line)
                except json.JSONDecodeError as exc:
                    yield lineno, f"invalid JSON: {exc.msg}"
    elif format == "csv":
        with path.open(encoding="utf-8", newline="") as fh:
            reader = csv.DictReader(fh)
            if reader.fieldnames is None or [f.strip() for f in reader.fieldnames] != CSV_HEADER:
                raise CorpusError(
                    f"csv header must be exactly {','.join(CSV_HEADER)}"
                )
            for rowno, row in enumerate(reader, start=2):
                yield rowno, row
    else:
        raise CorpusError(f"unknown corpus format: {format!r}")


def load_articles(
    path: str | Path,
    format: str = "jsonl",
    *,
    taxonomy: Optional[Taxonomy] = None,
    window: Optional[tuple[datetime, datetime]] = None,
) -> LoadResult:
    """Load and validate an article corpus file.

    Per-row validation failures are collected and skipped, not fatal.
    Duplicate article ids are fatal: the corpus is rejected outright.
    """
    path = Path(path)
    if not path.is_file():
        raise CorpusError(f"corpus file not found: {path}")

    articles: list[Article] = []
    skipped: list[SkippedRow] = []
    seen_ids: set[str] = set()
    for position, record in _iter_records(path, format):
        if isinstance(record, str):
            skipped.append(SkippedRow(position, record))
            continue
        try:
            article = _validate_article(record, taxonomy, window)
        except ValueError as exc:
            skipped.append(SkippedRow(position, str(exc)))
            continue
        if article.id in seen_ids:
            raise CorpusError(f"duplicate article id: {article.id!r}")
        seen_ids.add(article.id)
        articles.append(article)
    return LoadResult(articles=articles, skipped=skipped)


def write_articles(articles: Iterable[Article], path: str | Path) -> None:
    """Serialize articles to canonical JSON-lines, one object per line."""
    path = Path(path)
    with path.open("w", encoding="utf-8") as fh:
        for article in articles:
            fh.write(json.dumps(article.to_dict(), ensure_ascii=False) + "\n")


def load_gold_labels(path: str | Path) -> dict[str, GoldLabel]:
    """Load a gold-label CSV with header article_id,label[,provenance]."""
    path = Path(path)
    if not path.is_file():
        raise CorpusError(f"gold label file not found: {path}")
    gold: dict[str, GoldLabel] = {}
    with path.open(encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        fields = [f.strip() for f in (reader.fieldnames or [])]
        if fields[:2] != ["article_id", "label"]:
            raise CorpusError("gold csv header must start with article_id,label")
        for row in reader:
            article_id = row["article_id"].strip()
            if article_id in gold:
                raise CorpusError(f"duplicate gold article_id: {article_id!r}")
            try:
                label = parse_label(row["label"])
            except ValueError as exc:
                raise CorpusError(str(exc)) from exc
            provenance = Provenance.IMPORTED
            raw_prov = (row.get("provenance") or "").strip()
            if raw_prov:
                provenance = Provenance(raw_prov)
            gold[article_id] = GoldLabel(article_id, label, provenance)
    return gold


def write_gold_labels(gold: Iterable[GoldLabel], path: str | Path) -> None:
    path = Path(path)
    with path.open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["article_id", "label", "provenance"])
        for entry in gold:
            writer.writerow([entry.article_id, entry.label.value, entry.provenance.value])


def _allocate_largest_remainder(sizes: dict[str, int], n: int) -> dict[str, int]:
    """Proportional allocation of n slots over strata via largest remainder.

    Guarantees every stratum count is within 1 of its exact quota and the
    counts sum to n.
    """
    total = sum(sizes.values())
    quotas = {key: n * size / total for key, size in sizes.items()}
    counts = {key: int(quota) for key, quota in quotas.items()}
    leftover = n - sum(counts.values())
    # Ties broken by stratum key so the allocation is deterministic.
    by_remainder = sorted(
        quotas, key=lambda key: (-(quotas[key] - counts[key]), key)
    )
    for key in by_remainder[:leftover]:
        counts[key] += 1
    return counts


def stratified_sample(
    articles: list[Article],
    n: int,
    by: str = "topic",
    seed: int = 0,
) -> list[Article]:
    """Draw a proportional stratified sample, deterministic for a given seed.

    `by` is one of topic, source, both. n=0 returns an empty list.
    """
    if by not in ("topic", "source", "both"):
        raise ValueError(f"unknown stratification axis: {by!r}")
    if n == 0:
        return []
    if not articles:
        raise ValueError("cannot sample from an empty corpus")
    if n > len(articles):
        raise ValueError(f"sample size {n} exceeds corpus size {len(articles)}")

    def key_of(article: Article) -> str:
        if by == "topic":
            return article.topic
        if by == "source":
            return article.source
        return f"{article.topic}\x1f{article.source}"

    strata: dict[str, list[Article]] = {}
    for article in articles:
        strata.setdefault(key_of(article), []).append(article)

    counts = _allocate_largest_remainder(
        {key: len(members) for key, members in strata.items()}, n
    )
    rng = random.Random(seed)
    sample: list[Article] = []
    for key in sorted(strata):
        take = counts.get(key, 0)
        if take:
            sample.extend(rng.sample(strata[key], take))
    return sample
