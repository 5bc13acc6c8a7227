"""Majority voting over panel annotations and review-queue selection.

Ties are never auto-broken: a tied electorate (possible once parse or
transport failures shrink it) is forced into the human review queue.
"""

from __future__ import annotations

import enum
import json
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional, Sequence, Union

from .annotator import Annotation, AnnotationRun
from .corpus import Label, parse_label


class _TieType:
    """Singleton outcome when the top two label tallies are equal (or empty)."""

    _instance: Optional["_TieType"] = None

    def __new__(cls) -> "_TieType":
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self) -> str:
        return "Tie"


TIE = _TieType()

Majority = Union[Label, _TieType]


def majority_vote(votes: Sequence[Label]) -> tuple[Majority, Counter]:
    """Return the strictly most frequent label, or TIE when counts equal.

    Empty input is a tie. Invariant under permutation of the votes.
    """
    counts: Counter = Counter(votes)
    if not counts:
        return TIE, counts
    ranked = counts.most_common()
    if len(ranked) > 1 and ranked[0][1] == ranked[1][1]:
        return TIE, counts
    return ranked[0][0], counts


@dataclass(frozen=True)
class VoteRecord:
    """The panel's labels for one article plus the majority outcome."""

    article_id: str
    votes: dict[str, Label]  # endpoint name -> parsed label
    majority_label: Majority
    unanimous: bool
    valid_vote_count: int
    excluded_count: int

    @property
    def is_tie(self) -> bool:
        return self.majority_label is TIE

    def to_dict(self) -> dict:
        return {
            "article_id": self.article_id,
            "votes": {name: label.value for name, label in self.votes.items()},
            "majority_label": "tie" if self.is_tie else self.majority_label.value,
            "unanimous": self.unanimous,
            "valid_vote_count": self.valid_vote_count,
            "excluded_count": self.excluded_count,
        }

    @classmethod
    def from_dict(cls, record: dict) -> "VoteRecord":
        majority: Majority
        majority = TIE if record["majority_label"] == "tie" else parse_label(record["majority_label"])
        return cls(
            article_id=record["article_id"],
            votes={name: parse_label(value) for name, value in record["votes"].items()},
            majority_label=majority,
            unanimous=record["unanimous"],
            valid_vote_count=record["valid_vote_count"],
            excluded_count=record["excluded_count"],
        )


def vote_record_for(article_id: str, annotations: Sequence[Annotation]) -> VoteRecord:
    """Tally one article's panel annotations, excluding failed ones."""
    votes = {a.endpoint_name: a.label for a in annotations if a.ok and a.label is not None}
    excluded = sum(1 for a in annotations if not a.ok)
    majority, _counts = majority_vote(list(votes.values()))
    unanimous = len(votes) > 0 and len(set(votes.values())) == 1
    return VoteRecord(
        article_id=article_id,
        votes=votes,
        majority_label=majority,
        unanimous=unanimous,
        valid_vote_count=len(votes),
        excluded_count=excluded,
    )


def build_vote_records(run: AnnotationRun) -> list[VoteRecord]:
    """One VoteRecord per article, in the run's article order."""
    grouped = run.by_article()
    return [vote_record_for(article_id, group) for article_id, group in grouped.items()]


class ReviewPolicy(enum.Enum):
    """Which records go to humans: just the contested ones, or everything."""

    DEFAULT = "default"
    AUDIT_ALL = "audit_all"


def select_for_review(
    records: Sequence[VoteRecord],
    policy: ReviewPolicy = ReviewPolicy.DEFAULT,
) -> list[str]:
    """Pick article ids needing human review, preserving record order.

    The default policy selects ties, non-unanimous records, and records
    with excluded votes; AUDIT_ALL selects every record (full human audit).
    """
    if policy is ReviewPolicy.AUDIT_ALL:
        return [record.article_id for record in records]
    if policy is ReviewPolicy.DEFAULT:
        return [
            record.article_id
            for record in records
            if record.is_tie or not record.unanimous or record.excluded_count > 0
        ]
    raise ValueError(f"unknown review policy: {policy!r}")


def write_vote_records(records: Iterable[VoteRecord], path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for record in records:
            fh.write(json.dumps(record.to_dict(), ensure_ascii=False) + "\n")


def read_vote_records(path: str | Path) -> list[VoteRecord]:
    records = []
    with Path(path).open(encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                records.append(VoteRecord.from_dict(json.loads(line)))
    return records


def write_review_queue(article_ids: Iterable[str], path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for article_id in article_ids:
            fh.write(json.dumps({"article_id": article_id}) + "\n")


def read_review_queue(path: str | Path) -> list[str]:
    ids = []
    with Path(path).open(encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                ids.append(json.loads(line)["article_id"])
    return ids
