"""Event-sourced review store.

Persistence is an append-only event log (task opened, decision submitted,
escalation flagged, task resolved, gold promoted) plus in-memory derived
state; replaying the log reconstructs the store exactly. Events are the
only mutation path, for both live operations and replay.
"""

from __future__ import annotations

import json
import threading
from datetime import datetime, timezone
from pathlib import Path
from typing import Iterable, Optional, Sequence

from ..aggregator import VoteRecord
from ..annotator import Annotation, AnnotationRun
from ..corpus import Article, GoldLabel, Label, Provenance, parse_label
from .models import (
    ResolutionKind,
    Reviewer,
    ReviewerDecision,
    ReviewerRole,
    ReviewError,
    ReviewTask,
    TaskState,
    check_submission,
    resolution_after,
)


def _utc_now() -> str:
    return datetime.now(timezone.utc).isoformat().replace("+00:00", "Z")


class ReviewStore:
    """Holds review tasks for one annotation run. Thread-safe single writer."""

    def __init__(
        self,
        reviewers: Sequence[Reviewer] = (),
        event_log_path: Optional[str | Path] = None,
        run_id: str = "default",
    ):
        self.run_id = run_id
        self.reviewers: dict[str, Reviewer] = {}
        for reviewer in reviewers:
            if reviewer.id in self.reviewers:
                raise ValueError(f"duplicate reviewer id {reviewer.id!r}")
            self.reviewers[reviewer.id] = reviewer
        self.tasks: dict[str, ReviewTask] = {}
        self.promoted: dict[str, GoldLabel] = {}
        self._seq = 0
        self._lock = threading.RLock()
        self._log_fh = None
        if event_log_path is not None:
            path = Path(event_log_path)
            if path.exists():
                for event in read_events(path):
                    self._apply(event)
            self._log_fh = path.open("a", encoding="utf-8")

    # ------------------------------------------------------------------
    # Event machinery

    def _emit(self, event: dict) -> dict:
        self._seq += 1
        event = {"seq": self._seq, "at": _utc_now(), **event}
        self._apply(event)
        if self._log_fh is not None:
            self._log_fh.write(json.dumps(event, ensure_ascii=False) + "\n")
            self._log_fh.flush()
        return event

    def _apply(self, event: dict) -> None:
        """Literal state mutation for one event; shared by live ops and replay."""
        kind = event["type"]
        self._seq = max(self._seq, event.get("seq", 0))
        if kind == "task_opened":
            payload = event["task"]
            task = ReviewTask(
                article_id=payload["article_id"],
                vote_record=VoteRecord.from_dict(payload["vote_record"]),
                annotations=[Annotation.from_dict(a) for a in payload["annotations"]],
                opened_at=event["at"],
                article=payload.get("article"),
            )
            self.tasks[task.article_id] = task
        elif kind == "decision_submitted":
            task = self.tasks[event["article_id"]]
            decision = event["decision"]
            task.decisions.append(
                ReviewerDecision(
                    article_id=event["article_id"],
                    reviewer_id=decision["reviewer_id"],
                    label=parse_label(decision["label"]),
                    note=decision.get("note", ""),
                    decided_at=decision["decided_at"],
                )
            )
            task.version += 1
        elif kind == "escalation_flagged":
            task = self.tasks[event["article_id"]]
            task.state = TaskState.AWAITING_ESCALATION
            task.version += 1
        elif kind == "task_resolved":
            task = self.tasks[event["article_id"]]
            task.state = TaskState.RESOLVED
            task.resolution = parse_label(event["resolution"])
            task.resolved_by = ResolutionKind(event["resolved_by"])
            task.version += 1
        elif kind == "gold_promoted":
            self.promoted[event["article_id"]] = GoldLabel(
                article_id=event["article_id"],
                label=parse_label(event["label"]),
                provenance=Provenance.HUMAN_REVIEWED,
            )
        else:
            raise ValueError(f"unknown event type {kind!r}")

    def close(self) -> None:
        if self._log_fh is not None:
            self._log_fh.close()
            self._log_fh = None

    # ------------------------------------------------------------------
    # Operations

    def open_tasks(
        self,
        queue: Sequence[str],
        run: AnnotationRun,
        records: Sequence[VoteRecord],
        articles: Optional[dict[str, Article]] = None,
    ) -> list[ReviewTask]:
        """Open one task per queued article id, carrying the panel's output.

        Every queued id must have a vote record; already-open ids are
        skipped so re-opening the same queue is idempotent. When the corpus
        is supplied, the article body rides along for reviewer context.
        """
        by_id = {record.article_id: record for record in records}
        grouped = run.by_article()
        opened = []
        with self._lock:
            for article_id in queue:
                if article_id not in by_id:
                    raise ReviewError(
                        f"article {article_id!r} has no vote record", code="unknown_article"
                    )
                if article_id in self.tasks:
                    continue
                article = articles.get(article_id) if articles else None
                self._emit(
                    {
                        "type": "task_opened",
                        "task": {
                            "article_id": article_id,
                            "vote_record": by_id[article_id].to_dict(),
                            "annotations": [
                                annotation.to_dict()
                                for annotation in grouped.get(article_id, [])
                            ],
                            "article": article.to_dict() if article else None,
                        },
                    }
                )
                opened.append(self.tasks[article_id])
        return opened

    def get_task(self, article_id: str) -> ReviewTask:
        task = self.tasks.get(article_id)
        if task is None:
            raise ReviewError(f"no such task {article_id!r}", code="not_found")
        return task

    def list_tasks(self, state: Optional[TaskState] = None) -> list[ReviewTask]:
        tasks = list(self.tasks.values())
        if state is not None:
            tasks = [task for task in tasks if task.state is state]
        return tasks

    def submit_decision(
        self,
        article_id: str,
        reviewer_id: str,
        label: Label,
        note: str = "",
        expected_version: Optional[int] = None,
    ) -> ReviewTask:
        """Record one reviewer's decision and resolve the task when the rules say so."""
        with self._lock:
            task = self.get_task(article_id)
            reviewer = self.reviewers.get(reviewer_id)
            if reviewer is None:
                raise ReviewError(f"unknown reviewer {reviewer_id!r}", code="unknown_reviewer")
            if expected_version is not None and expected_version != task.version:
                raise ReviewError(
                    f"task {article_id} is at version {task.version}, not {expected_version}",
                    code="version_conflict",
                )
            check_submission(task, reviewer)
            decision = ReviewerDecision(
                article_id=article_id,
                reviewer_id=reviewer_id,
                label=label,
                note=note,
                decided_at=_utc_now(),
            )
            roles = {rid: r.role for rid, r in self.reviewers.items()}
            outcome = resolution_after(task, decision, reviewer, roles)
            self._emit(
                {
                    "type": "decision_submitted",
                    "article_id": article_id,
                    "decision": decision.to_dict(),
                }
            )
            if outcome is not None:
                resolution, kind = outcome
                self._emit(
                    {
                        "type": "task_resolved",
                        "article_id": article_id,
                        "resolution": resolution.value,
                        "resolved_by": kind.value,
                    }
                )
            return self.tasks[article_id]

    def flag_escalation(self, article_id: str, reviewer_id: str) -> ReviewTask:
        """Explicitly route an open task to the senior queue."""
        with self._lock:
            task = self.get_task(article_id)
            if reviewer_id != "deadline" and reviewer_id not in self.reviewers:
                raise ReviewError(f"unknown reviewer {reviewer_id!r}", code="unknown_reviewer")
            if task.state is not TaskState.OPEN:
                raise ReviewError(
                    f"task {article_id} is {task.state.value}, not open",
                    code="wrong_state",
                )
            self._emit(
                {"type": "escalation_flagged", "article_id": article_id, "by": reviewer_id}
            )
            return self.tasks[article_id]

    def escalate_stale(self, older_than_s: float, now: Optional[datetime] = None) -> list[str]:
        """Deadline policy: flag open tasks stuck below three decisions."""
        now = now or datetime.now(timezone.utc)
        flagged = []
        with self._lock:
            for task in list(self.tasks.values()):
                if task.state is not TaskState.OPEN or len(task.decisions) >= 3:
                    continue
                opened = datetime.fromisoformat(task.opened_at.replace("Z", "+00:00"))
                if (now - opened).total_seconds() >= older_than_s:
                    self._emit(
                        {
                            "type": "escalation_flagged",
                            "article_id": task.article_id,
                            "by": "deadline",
                        }
                    )
                    flagged.append(task.article_id)
        return flagged

    def promote_resolutions(self) -> list[GoldLabel]:
        """Promote every resolved task to a gold label. Idempotent."""
        with self._lock:
            for task in self.tasks.values():
                if task.state is TaskState.RESOLVED and task.article_id not in self.promoted:
                    assert task.resolution is not None
                    self._emit(
                        {
                            "type": "gold_promoted",
                            "article_id": task.article_id,
                            "label": task.resolution.value,
                        }
                    )
            return sorted(self.promoted.values(), key=lambda gold: gold.article_id)

    def summary(self) -> dict:
        by_state = {state.value: 0 for state in TaskState}
        by_resolution: dict[str, int] = {}
        for task in self.tasks.values():
            by_state[task.state.value] += 1
            if task.resolution is not None:
                key = task.resolution.value
                by_resolution[key] = by_resolution.get(key, 0) + 1
        return {
            "run_id": self.run_id,
            "tasks": len(self.tasks),
            "by_state": by_state,
            "by_resolution": by_resolution,
            "decisions": sum(len(task.decisions) for task in self.tasks.values()),
            "promoted": len(self.promoted),
        }


def read_events(path: str | Path) -> list[dict]:
    events = []
    with Path(path).open(encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            try:
                events.append(json.loads(line))
            except json.JSONDecodeError:
                continue  # torn tail from a killed process
    return events


def promote_from_tasks(tasks: Iterable[ReviewTask]) -> list[GoldLabel]:
    """Pure promotion of resolved tasks, for offline use; rejects unresolved input."""
    gold = []
    for task in tasks:
        if task.state is not TaskState.RESOLVED or task.resolution is None:
            raise ReviewError(
                f"task {task.article_id} is not resolved", code="wrong_state"
            )
        gold.append(
            GoldLabel(
                article_id=task.article_id,
                label=task.resolution,
                provenance=Provenance.HUMAN_REVIEWED,
            )
        )
    return gold


def replay_events(
    events: Iterable[dict], reviewers: Sequence[Reviewer] = ()
) -> ReviewStore:
    """Rebuild a store from its event log."""
    store = ReviewStore(reviewers=reviewers)
    for event in events:
        store._apply(event)
    return store
