"""HTTP JSON API for the review workflow.

Bearer tokens map to reviewer identities (pluggable; the default source
is a roster file that lists reviewers and their tokens). The built
reviewer UI bundle, when present, is served statically under /ui.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Callable, Optional

import yaml
from fastapi import Depends, FastAPI, HTTPException, Query, Request
from fastapi.responses import RedirectResponse
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel

from ..corpus import parse_label
from .models import Reviewer, ReviewerRole, ReviewError, TaskState
from .store import ReviewStore

TokenResolver = Callable[[str], Optional[Reviewer]]


def load_reviewers(path: str | Path) -> tuple[list[Reviewer], dict[str, str]]:
    """Load the roster file; returns (reviewers, token -> reviewer id)."""
    path = Path(path)
    raw = path.read_text(encoding="utf-8")
    data = yaml.safe_load(raw) if path.suffix in (".yaml", ".yml") else json.loads(raw)
    reviewers = []
    tokens: dict[str, str] = {}
    for entry in data["reviewers"]:
        reviewer = Reviewer(
            id=entry["id"],
            display_name=entry.get("display_name", entry["id"]),
            role=ReviewerRole(entry.get("role", "reviewer")),
        )
        reviewers.append(reviewer)
        token = entry.get("token")
        if token:
            if token in tokens:
                raise ValueError("reviewer tokens must be unique")
            tokens[token] = reviewer.id
    return reviewers, tokens


class DecisionBody(BaseModel):
    label: str
    note: str = ""
    version: Optional[int] = None


_ERROR_STATUS = {
    "not_found": 404,
    "unknown_article": 404,
    "wrong_state": 409,
    "duplicate_decision": 409,
    "version_conflict": 409,
    "unknown_reviewer": 403,
}


def create_app(
    store: ReviewStore,
    token_resolver: TokenResolver,
    ui_dir: Optional[str | Path] = None,
) -> FastAPI:
    app = FastAPI(title="factpanel review service")

    def current_reviewer(request: Request) -> Reviewer:
        header = request.headers.get("authorization", "")
        if not header.lower().startswith("bearer "):
            raise HTTPException(status_code=401, detail="bearer token required")
        reviewer = token_resolver(header[7:].strip())
        if reviewer is None:
            raise HTTPException(status_code=401, detail="unknown token")
        return reviewer

    def http_error(exc: ReviewError) -> HTTPException:
        return HTTPException(
            status_code=_ERROR_STATUS.get(exc.code, 400),
            detail={"code": exc.code, "message": str(exc)},
        )

    @app.get("/tasks")
    def list_tasks(
        state: Optional[str] = Query(default=None),
        reviewer: Reviewer = Depends(current_reviewer),
    ) -> dict:
        task_state = None
        if state is not None:
            try:
                task_state = TaskState(state)
            except ValueError:
                raise HTTPException(status_code=422, detail=f"unknown state {state!r}")
        tasks = store.list_tasks(task_state)
        return {"tasks": [task.to_dict() for task in tasks]}

    @app.get("/tasks/{article_id}")
    def get_task(article_id: str, reviewer: Reviewer = Depends(current_reviewer)) -> dict:
        try:
            return store.get_task(article_id).to_dict()
        except ReviewError as exc:
            raise http_error(exc)

    @app.post("/tasks/{article_id}/decisions")
    def submit_decision(
        article_id: str,
        body: DecisionBody,
        reviewer: Reviewer = Depends(current_reviewer),
    ) -> dict:
        try:
            label = parse_label(body.label)
        except ValueError as exc:
            raise HTTPException(status_code=422, detail=str(exc))
        try:
            task = store.submit_decision(
                article_id,
                reviewer.id,
                label,
                note=body.note,
                expected_version=body.version,
            )
        except ReviewError as exc:
            raise http_error(exc)
        return task.to_dict()

    @app.post("/tasks/{article_id}/escalate")
    def escalate(article_id: str, reviewer: Reviewer = Depends(current_reviewer)) -> dict:
        try:
            task = store.flag_escalation(article_id, reviewer.id)
        except ReviewError as exc:
            raise http_error(exc)
        return task.to_dict()

    @app.post("/promote")
    def promote(reviewer: Reviewer = Depends(current_reviewer)) -> dict:
        gold = store.promote_resolutions()
        return {
            "promoted_count": len(gold),
            "gold": [
                {
                    "article_id": entry.article_id,
                    "label": entry.label.value,
                    "provenance": entry.provenance.value,
                }
                for entry in gold
            ],
        }

    @app.get("/reviewers/me")
    def me(reviewer: Reviewer = Depends(current_reviewer)) -> dict:
        return {
            "id": reviewer.id,
            "display_name": reviewer.display_name,
            "role": reviewer.role.value,
        }

    @app.get("/runs/{run_id}/summary")
    def run_summary(run_id: str, reviewer: Reviewer = Depends(current_reviewer)) -> dict:
        if run_id != store.run_id:
            raise HTTPException(status_code=404, detail=f"unknown run {run_id!r}")
        return store.summary()

    if ui_dir is not None:
        app.mount("/ui", StaticFiles(directory=str(ui_dir), html=True), name="ui")

        @app.get("/")
        def index() -> RedirectResponse:
            return RedirectResponse(url="/ui/")

    return app
