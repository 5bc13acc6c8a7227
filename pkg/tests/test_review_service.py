from __future__ import annotations

import random

import pytest
from fastapi.testclient import TestClient

from conftest import make_annotation
from factpanel.aggregator import vote_record_for
from factpanel.annotator import AnnotationRun
from factpanel.corpus import Label, Provenance
from factpanel.review import (
    ResolutionKind,
    Reviewer,
    ReviewerRole,
    ReviewError,
    ReviewStore,
    TaskState,
    create_app,
    load_reviewers,
    replay_events,
)
from factpanel.review.store import promote_from_tasks, read_events

C = Label.FACTUALLY_CORRECT
I = Label.FACTUALLY_INCORRECT

REVIEWERS = [
    Reviewer("r1", "Reviewer One"),
    Reviewer("r2", "Reviewer Two"),
    Reviewer("r3", "Reviewer Three"),
    Reviewer("r4", "Reviewer Four"),
    Reviewer("s1", "Senior One", ReviewerRole.SENIOR),
]


def contested_run(n: int = 3) -> tuple[AnnotationRun, list]:
    annotations = []
    for i in range(n):
        article_id = f"a{i:03d}"
        annotations.extend(
            [
                make_annotation(article_id, "m1", C),
                make_annotation(article_id, "m2", I),
                make_annotation(article_id, "m3", C),
            ]
        )
    run = AnnotationRun(annotations=annotations, manifest={})
    records = [
        vote_record_for(article_id, group) for article_id, group in run.by_article().items()
    ]
    return run, records


def fresh_store(tmp_path=None, n: int = 3) -> ReviewStore:
    log = None if tmp_path is None else tmp_path / "review_events.jsonl"
    store = ReviewStore(reviewers=REVIEWERS, event_log_path=log)
    run, records = contested_run(n)
    store.open_tasks([record.article_id for record in records], run, records)
    return store


class TestOpenTasks:
    def test_one_task_per_queued_id(self):
        store = fresh_store()
        assert len(store.tasks) == 3
        assert all(task.state is TaskState.OPEN for task in store.tasks.values())

    def test_empty_queue(self):
        store = ReviewStore(reviewers=REVIEWERS)
        run, records = contested_run()
        assert store.open_tasks([], run, records) == []

    def test_id_without_record_rejected(self):
        store = ReviewStore(reviewers=REVIEWERS)
        run, records = contested_run()
        with pytest.raises(ReviewError, match="vote record"):
            store.open_tasks(["missing"], run, records)

    def test_tasks_carry_their_articles_annotations(self):
        # Relational check: task annotations == run annotations joined by id.
        store = fresh_store(n=7)
        run, _ = contested_run(n=7)
        joined = run.by_article()
        for article_id, task in store.tasks.items():
            assert task.annotations == joined[article_id]
            assert [a.article_id for a in task.annotations] == [article_id] * 3


class TestSubmitDecision:
    def test_unanimity_records_consensus(self):
        store = fresh_store()
        store.submit_decision("a000", "r1", C)
        store.submit_decision("a000", "r2", C)
        task = store.submit_decision("a000", "r3", C)
        assert task.state is TaskState.RESOLVED
        assert task.resolution is C
        assert task.resolved_by is ResolutionKind.CONSENSUS

    def test_two_of_three_majority(self):
        store = fresh_store()
        store.submit_decision("a000", "r1", C)
        store.submit_decision("a000", "r2", I)
        task = store.submit_decision("a000", "r3", C)
        assert task.state is TaskState.RESOLVED
        assert task.resolution is C
        assert task.resolved_by is ResolutionKind.REVIEWER_MAJORITY

    def test_senior_resolves_escalated_task(self):
        store = fresh_store()
        store.submit_decision("a000", "r1", C)
        store.submit_decision("a000", "r2", I)
        store.flag_escalation("a000", "r1")
        task = store.submit_decision("a000", "s1", I)
        assert task.state is TaskState.RESOLVED
        assert task.resolution is I
        assert task.resolved_by is ResolutionKind.SENIOR_DECISION

    def test_senior_rejected_on_open_task(self):
        store = fresh_store()
        with pytest.raises(ReviewError, match="escalated"):
            store.submit_decision("a000", "s1", C)

    def test_duplicate_reviewer_rejected(self):
        store = fresh_store()
        store.submit_decision("a000", "r1", C)
        with pytest.raises(ReviewError, match="already decided"):
            store.submit_decision("a000", "r1", I)

    def test_resolved_task_rejects_more_decisions(self):
        store = fresh_store()
        for reviewer in ("r1", "r2", "r3"):
            store.submit_decision("a000", reviewer, C)
        with pytest.raises(ReviewError, match="resolved"):
            store.submit_decision("a000", "r4", C)

    def test_unknown_reviewer_rejected(self):
        store = fresh_store()
        with pytest.raises(ReviewError, match="unknown reviewer"):
            store.submit_decision("a000", "ghost", C)

    def test_version_conflict(self):
        store = fresh_store()
        version = store.get_task("a000").version
        store.submit_decision("a000", "r1", C)
        with pytest.raises(ReviewError, match="version"):
            store.submit_decision("a000", "r2", C, expected_version=version)

    def test_decisions_are_append_only(self):
        store = fresh_store()
        store.submit_decision("a000", "r1", C)
        first = list(store.get_task("a000").decisions)
        store.submit_decision("a000", "r2", I)
        second = store.get_task("a000").decisions
        assert second[: len(first)] == first


class TestEscalation:
    def test_flag_moves_open_to_awaiting(self):
        store = fresh_store()
        task = store.flag_escalation("a000", "r1")
        assert task.state is TaskState.AWAITING_ESCALATION

    def test_reflag_rejected(self):
        store = fresh_store()
        store.flag_escalation("a000", "r1")
        with pytest.raises(ReviewError, match="not open"):
            store.flag_escalation("a000", "r2")

    def test_third_reviewer_decision_still_resolves_escalated_task(self):
        store = fresh_store()
        store.submit_decision("a000", "r1", C)
        store.submit_decision("a000", "r2", I)
        store.flag_escalation("a000", "r1")
        task = store.submit_decision("a000", "r3", I)
        assert task.state is TaskState.RESOLVED
        assert task.resolved_by is ResolutionKind.REVIEWER_MAJORITY

    def test_stale_sweep_flags_only_old_open_tasks(self):
        from datetime import datetime, timedelta, timezone

        store = fresh_store()
        store.submit_decision("a001", "r1", C)
        future = datetime.now(timezone.utc) + timedelta(hours=2)
        flagged = store.escalate_stale(older_than_s=3600, now=future)
        assert sorted(flagged) == ["a000", "a001", "a002"]
        assert store.get_task("a000").state is TaskState.AWAITING_ESCALATION

    def test_fresh_tasks_not_swept(self):
        store = fresh_store()
        assert store.escalate_stale(older_than_s=3600) == []


class TestPromotion:
    def test_single_resolved_task(self):
        store = fresh_store()
        for reviewer in ("r1", "r2", "r3"):
            store.submit_decision("a000", reviewer, I)
        gold = store.promote_resolutions()
        assert len(gold) == 1
        assert gold[0].article_id == "a000"
        assert gold[0].label is I
        assert gold[0].provenance is Provenance.HUMAN_REVIEWED

    def test_promotion_idempotent(self):
        store = fresh_store()
        for reviewer in ("r1", "r2", "r3"):
            store.submit_decision("a000", reviewer, C)
        assert store.promote_resolutions() == store.promote_resolutions()

    def test_ten_task_fixture_matches_extraction(self):
        store = ReviewStore(reviewers=REVIEWERS)
        run, records = contested_run(10)
        store.open_tasks([record.article_id for record in records], run, records)
        rng = random.Random(11)
        expected = {}
        for record in records:
            labels = [rng.choice([C, I]) for _ in range(3)]
            for reviewer, label in zip(("r1", "r2", "r3"), labels):
                store.submit_decision(record.article_id, reviewer, label)
            expected[record.article_id] = max(set(labels), key=labels.count)
        gold = store.promote_resolutions()
        assert {g.article_id: g.label for g in gold} == expected

    def test_offline_promotion_rejects_unresolved(self):
        store = fresh_store()
        with pytest.raises(ReviewError, match="not resolved"):
            promote_from_tasks(store.tasks.values())


class TestEventLogReplay:
    def test_replay_reconstructs_final_state(self, tmp_path):
        store = fresh_store(tmp_path)
        store.submit_decision("a000", "r1", C)
        store.submit_decision("a000", "r2", I)
        store.submit_decision("a000", "r3", C)
        store.flag_escalation("a001", "r2")
        store.submit_decision("a001", "s1", I)
        store.submit_decision("a002", "r1", C)
        store.promote_resolutions()
        store.close()

        events = read_events(tmp_path / "review_events.jsonl")
        replayed = replay_events(events, reviewers=REVIEWERS)
        assert replayed.tasks.keys() == store.tasks.keys()
        for article_id, task in store.tasks.items():
            twin = replayed.tasks[article_id]
            assert twin.to_dict() == task.to_dict()
        assert replayed.promoted == store.promoted

    def test_reopening_store_from_log_resumes(self, tmp_path):
        store = fresh_store(tmp_path)
        store.submit_decision("a000", "r1", C)
        store.close()
        reopened = ReviewStore(
            reviewers=REVIEWERS, event_log_path=tmp_path / "review_events.jsonl"
        )
        assert len(reopened.tasks) == 3
        assert len(reopened.get_task("a000").decisions) == 1
        # New decisions continue the same log.
        reopened.submit_decision("a000", "r2", C)
        reopened.submit_decision("a000", "r3", C)
        assert reopened.get_task("a000").state is TaskState.RESOLVED
        reopened.close()


class TestStateMachineProperties:
    LEGAL = {
        (TaskState.OPEN, TaskState.OPEN),
        (TaskState.OPEN, TaskState.RESOLVED),
        (TaskState.OPEN, TaskState.AWAITING_ESCALATION),
        (TaskState.AWAITING_ESCALATION, TaskState.AWAITING_ESCALATION),
        (TaskState.AWAITING_ESCALATION, TaskState.RESOLVED),
        (TaskState.RESOLVED, TaskState.RESOLVED),
    }

    def test_randomized_sequences_never_make_illegal_transitions(self):
        rng = random.Random(999)
        for trial in range(300):
            store = fresh_store(n=1)
            task = store.get_task("a000")
            state = task.state
            for _ in range(rng.randint(1, 12)):
                actor = rng.choice(["r1", "r2", "r3", "r4", "s1", "escalate"])
                try:
                    if actor == "escalate":
                        store.flag_escalation("a000", rng.choice(["r1", "r2"]))
                    else:
                        store.submit_decision("a000", actor, rng.choice([C, I]))
                except ReviewError:
                    pass
                new_state = store.get_task("a000").state
                assert (state, new_state) in self.LEGAL, (state, new_state)
                state = new_state

    def test_full_three_decision_slate_always_resolves(self):
        rng = random.Random(123)
        for _ in range(100):
            store = fresh_store(n=1)
            for reviewer in ("r1", "r2", "r3"):
                store.submit_decision("a000", reviewer, rng.choice([C, I]))
            task = store.get_task("a000")
            assert task.state is TaskState.RESOLVED
            assert task.resolved_by in (
                ResolutionKind.REVIEWER_MAJORITY,
                ResolutionKind.CONSENSUS,
            )


@pytest.fixture
def api_client(tmp_path):
    store = fresh_store(tmp_path)
    tokens = {"tok-r1": "r1", "tok-r2": "r2", "tok-r3": "r3", "tok-s1": "s1"}

    def resolver(token):
        reviewer_id = tokens.get(token)
        return store.reviewers.get(reviewer_id) if reviewer_id else None

    app = create_app(store, resolver)
    return TestClient(app), store


def auth(token: str) -> dict:
    return {"Authorization": f"Bearer {token}"}


class TestHttpApi:
    def test_requires_bearer_token(self, api_client):
        client, _ = api_client
        assert client.get("/tasks").status_code == 401
        assert client.get("/tasks", headers=auth("bogus")).status_code == 401

    def test_me(self, api_client):
        client, _ = api_client
        body = client.get("/reviewers/me", headers=auth("tok-s1")).json()
        assert body == {"id": "s1", "display_name": "Senior One", "role": "senior"}

    def test_list_and_filter_tasks(self, api_client):
        client, store = api_client
        everything = client.get("/tasks", headers=auth("tok-r1")).json()["tasks"]
        assert len(everything) == 3
        store.flag_escalation("a000", "r1")
        escalated = client.get(
            "/tasks", params={"state": "awaiting_escalation"}, headers=auth("tok-r1")
        ).json()["tasks"]
        assert [task["article_id"] for task in escalated] == ["a000"]

    def test_unknown_state_param(self, api_client):
        client, _ = api_client
        assert (
            client.get("/tasks", params={"state": "weird"}, headers=auth("tok-r1")).status_code
            == 422
        )

    def test_get_task_detail(self, api_client):
        client, _ = api_client
        body = client.get("/tasks/a000", headers=auth("tok-r2")).json()
        assert body["article_id"] == "a000"
        assert len(body["annotations"]) == 3
        assert body["vote_record"]["valid_vote_count"] == 3
        assert body["state"] == "open"
        assert client.get("/tasks/nope", headers=auth("tok-r2")).status_code == 404

    def test_decision_flow_over_http(self, api_client):
        client, _ = api_client
        for token in ("tok-r1", "tok-r2"):
            response = client.post(
                "/tasks/a000/decisions",
                json={"label": "Factually Correct"},
                headers=auth(token),
            )
            assert response.status_code == 200
        final = client.post(
            "/tasks/a000/decisions",
            json={"label": "Factually Correct", "note": "agreed"},
            headers=auth("tok-r3"),
        ).json()
        assert final["state"] == "resolved"
        assert final["resolved_by"] == "consensus"

    def test_duplicate_decision_conflict(self, api_client):
        client, _ = api_client
        client.post(
            "/tasks/a000/decisions", json={"label": "Factually Correct"}, headers=auth("tok-r1")
        )
        again = client.post(
            "/tasks/a000/decisions", json={"label": "Factually Correct"}, headers=auth("tok-r1")
        )
        assert again.status_code == 409
        assert again.json()["detail"]["code"] == "duplicate_decision"

    def test_version_conflict_over_http(self, api_client):
        client, _ = api_client
        version = client.get("/tasks/a000", headers=auth("tok-r1")).json()["version"]
        client.post(
            "/tasks/a000/decisions",
            json={"label": "Factually Correct", "version": version},
            headers=auth("tok-r1"),
        )
        stale = client.post(
            "/tasks/a000/decisions",
            json={"label": "Factually Correct", "version": version},
            headers=auth("tok-r2"),
        )
        assert stale.status_code == 409
        assert stale.json()["detail"]["code"] == "version_conflict"

    def test_bad_label_is_422(self, api_client):
        client, _ = api_client
        response = client.post(
            "/tasks/a000/decisions", json={"label": "sort of true"}, headers=auth("tok-r1")
        )
        assert response.status_code == 422

    def test_escalate_then_senior_decides(self, api_client):
        client, _ = api_client
        assert (
            client.post("/tasks/a000/escalate", headers=auth("tok-r1")).status_code == 200
        )
        body = client.post(
            "/tasks/a000/decisions",
            json={"label": "Factually Incorrect"},
            headers=auth("tok-s1"),
        ).json()
        assert body["state"] == "resolved"
        assert body["resolved_by"] == "senior_decision"

    def test_promote_and_summary(self, api_client):
        client, _ = api_client
        for token in ("tok-r1", "tok-r2", "tok-r3"):
            client.post(
                "/tasks/a001/decisions",
                json={"label": "Factually Incorrect"},
                headers=auth(token),
            )
        promoted = client.post("/promote", headers=auth("tok-s1")).json()
        assert promoted["promoted_count"] == 1
        assert promoted["gold"][0] == {
            "article_id": "a001",
            "label": "Factually Incorrect",
            "provenance": "HumanReviewed",
        }
        summary = client.get("/runs/default/summary", headers=auth("tok-r1")).json()
        assert summary["by_state"]["resolved"] == 1
        assert summary["promoted"] == 1
        assert client.get("/runs/other/summary", headers=auth("tok-r1")).status_code == 404


def test_load_reviewers_roster(tmp_path):
    path = tmp_path / "reviewers.json"
    path.write_text(
        '{"reviewers": [{"id": "r1", "display_name": "R", "role": "reviewer", "token": "t1"},'
        ' {"id": "s1", "role": "senior", "token": "t2"}]}',
        encoding="utf-8",
    )
    reviewers, tokens = load_reviewers(path)
    assert [r.id for r in reviewers] == ["r1", "s1"]
    assert reviewers[1].role is ReviewerRole.SENIOR
    assert tokens == {"t1": "r1", "t2": "s1"}
