from __future__ import annotations

from datetime import datetime, timezone

import pytest

from factpanel.annotator import Annotation, FailureKind, ShotMode
from factpanel.corpus import Article, Label

TOPICS = ["Healthcare", "Immigration", "Gun Control", "Democracy"]
SOURCES = ["CNN", "BBC", "Reuters", "Fox News"]


def make_article(i: int, topic: str | None = None, source: str | None = None,
                 text: str | None = None) -> Article:
    return Article(
        id=f"a{i:04d}",
        url=f"https://example.test/{i}",
        source=source or SOURCES[i % len(SOURCES)],
        topic=topic or TOPICS[i % len(TOPICS)],
        published_at=datetime(2024, 1, 1 + i % 28, 12, 0, tzinfo=timezone.utc),
        title=f"Synthetic headline {i}",
        text=f"[#a{i:04d}] Synthetic body text for article {i}.",
    )


def make_annotation(
    article_id: str,
    endpoint: str,
    label: Label | None,
    *,
    shot_mode: ShotMode = ShotMode.ZERO_SHOT,
    failure: FailureKind | None = None,
    explanation: str = "because",
) -> Annotation:
    if label is None and failure is None:
        failure = FailureKind.PARSE
    return Annotation(
        article_id=article_id,
        endpoint_name=endpoint,
        shot_mode=shot_mode,
        label=label,
        explanation=explanation if label is not None else "",
        raw_response="raw",
        exchange_ref="ref",
        failure=failure,
    )


@pytest.fixture
def articles_20() -> list[Article]:
    return [make_article(i) for i in range(20)]
