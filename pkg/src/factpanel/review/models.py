"""Review-task domain types and the resolution state machine rules.

Legal transitions, and only these:
    Open -> Resolved
    Open -> AwaitingEscalation
    AwaitingEscalation -> Resolved

Three distinct non-senior decisions always resolve (binary labels admit
no three-way tie); senior decisions resolve only escalated tasks.
"""

from __future__ import annotations

import enum
from collections import Counter
from dataclasses import dataclass, field
from typing import Optional

from ..annotator import Annotation
from ..aggregator import VoteRecord
from ..corpus import Label


class ReviewError(Exception):
    """Rule violation: wrong state, duplicate decision, unknown actor."""

    def __init__(self, message: str, code: str = "review_error"):
        super().__init__(message)
        self.code = code


class ReviewerRole(enum.Enum):
    REVIEWER = "reviewer"
    SENIOR = "senior"


@dataclass(frozen=True)
class Reviewer:
    id: str
    display_name: str
    role: ReviewerRole = ReviewerRole.REVIEWER


class TaskState(enum.Enum):
    OPEN = "open"
    AWAITING_ESCALATION = "awaiting_escalation"
    RESOLVED = "resolved"


class ResolutionKind(enum.Enum):
    REVIEWER_MAJORITY = "reviewer_majority"
    SENIOR_DECISION = "senior_decision"
    CONSENSUS = "consensus"


@dataclass(frozen=True)
class ReviewerDecision:
    """One reviewer's label for one task; immutable once recorded."""

    article_id: str
    reviewer_id: str
    label: Label
    note: str
    decided_at: str  # UTC, RFC 3339

    def to_dict(self) -> dict:
        return {
            "article_id": self.article_id,
            "reviewer_id": self.reviewer_id,
            "label": self.label.value,
            "note": self.note,
            "decided_at": self.decided_at,
        }


@dataclass
class ReviewTask:
    """A contested article moving through the review state machine."""

    article_id: str
    vote_record: VoteRecord
    annotations: list[Annotation]
    state: TaskState = TaskState.OPEN
    decisions: list[ReviewerDecision] = field(default_factory=list)
    resolution: Optional[Label] = None
    resolved_by: Optional[ResolutionKind] = None
    opened_at: str = ""
    version: int = 0
    # Serialized Article for reviewer context, when the corpus was supplied.
    article: Optional[dict] = None

    def decision_by(self, reviewer_id: str) -> Optional[ReviewerDecision]:
        for decision in self.decisions:
            if decision.reviewer_id == reviewer_id:
                return decision
        return None

    def to_dict(self) -> dict:
        return {
            "article_id": self.article_id,
            "vote_record": self.vote_record.to_dict(),
            "annotations": [annotation.to_dict() for annotation in self.annotations],
            "state": self.state.value,
            "decisions": [decision.to_dict() for decision in self.decisions],
            "resolution": self.resolution.value if self.resolution else None,
            "resolved_by": self.resolved_by.value if self.resolved_by else None,
            "opened_at": self.opened_at,
            "version": self.version,
            "article": self.article,
        }


def check_submission(
    task: ReviewTask, reviewer: Reviewer
) -> None:
    """Validate the preconditions for recording a decision; raise ReviewError."""
    if task.state is TaskState.RESOLVED:
        raise ReviewError(
            f"task {task.article_id} already resolved", code="wrong_state"
        )
    if task.decision_by(reviewer.id) is not None:
        raise ReviewError(
            f"reviewer {reviewer.id} already decided task {task.article_id}",
            code="duplicate_decision",
        )
    if reviewer.role is ReviewerRole.SENIOR and task.state is not TaskState.AWAITING_ESCALATION:
        raise ReviewError(
            "senior decisions are accepted only on escalated tasks",
            code="wrong_state",
        )


def resolution_after(
    task: ReviewTask,
    decision: ReviewerDecision,
    reviewer: Reviewer,
    roles: dict[str, ReviewerRole],
) -> Optional[tuple[Label, ResolutionKind]]:
    """Resolution triggered by appending `decision`, if any.

    Senior decisions resolve immediately. Otherwise, once three distinct
    non-senior decisions exist the strict majority resolves, recorded as
    Consensus when all three agree.
    """
    if reviewer.role is ReviewerRole.SENIOR:
        return decision.label, ResolutionKind.SENIOR_DECISION
    non_senior = [
        d
        for d in [*task.decisions, decision]
        if roles.get(d.reviewer_id, ReviewerRole.REVIEWER) is not ReviewerRole.SENIOR
    ]
    if len(non_senior) < 3:
        return None
    counts = Counter(d.label for d in non_senior)
    label, top = counts.most_common(1)[0]
    if top == len(non_senior):
        return label, ResolutionKind.CONSENSUS
    # Binary labels over an odd slate always yield a strict majority.
    return label, ResolutionKind.REVIEWER_MAJORITY
