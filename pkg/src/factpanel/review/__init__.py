"""Human review workflow: three-reviewer majority with senior escalation."""

from .models import (
    ResolutionKind,
    Reviewer,
    ReviewerDecision,
    ReviewerRole,
    ReviewError,
    ReviewTask,
    TaskState,
)
from .store import ReviewStore, replay_events
from .service import create_app, load_reviewers

__all__ = [
    "ResolutionKind",
    "Reviewer",
    "ReviewerDecision",
    "ReviewerRole",
    "ReviewError",
    "ReviewStore",
    "ReviewTask",
    "TaskState",
    "create_app",
    "load_reviewers",
    "replay_events",
]
