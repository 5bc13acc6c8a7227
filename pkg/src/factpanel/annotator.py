"""Fact-checking prompt assembly, panel fan-out, and response parsing.

Prompts are data, not code: the annotation template ships as a versioned
text file with a single `{article}` placeholder; annotation runs record
the template version, shot mode, and panel hash in a run manifest.
Parse failures are first-class values, never defaults.
"""

from __future__ import annotations

import dataclasses
import enum
import json
import os
import re
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from datetime import datetime, timezone
from importlib import resources
from pathlib import Path
from typing import Iterable, Optional, Sequence

from .corpus import Article, Label, parse_label
from .gateway import EndpointConfig, GatewayError, LlmGateway, panel_hash

ARTICLE_PLACEHOLDER = "{article}"
TARGET_MARKER = "Article to analyze:"


class ShotMode(enum.Enum):
    ZERO_SHOT = "zero_shot"
    FIVE_SHOT = "five_shot"


class FailureKind(enum.Enum):
    PARSE = "parse_failure"
    TRANSPORT = "transport_failure"


@dataclass(frozen=True)
class PromptTemplate:
    """A versioned annotation prompt with exactly one `{article}` placeholder."""

    name: str
    version: str
    body: str

    def __post_init__(self) -> None:
        count = self.body.count(ARTICLE_PLACEHOLDER)
        if count != 1:
            raise ValueError(
                f"template must contain exactly one {ARTICLE_PLACEHOLDER}, found {count}"
            )
        for marker in ("Classification:", "Explanation:"):
            if marker not in self.body:
                raise ValueError(f"template missing required section marker {marker!r}")


def load_template(path: Optional[str | Path] = None) -> PromptTemplate:
    """Load a prompt template file; defaults to the packaged annotator_v1."""
    if path is None:
        body = (
            resources.files("factpanel").joinpath("prompts/annotator_v1.txt").read_text("utf-8")
        )
        return PromptTemplate(name="annotator", version="v1", body=body)
    path = Path(path)
    stem = path.stem
    name, _, version = stem.rpartition("_")
    return PromptTemplate(name=name or stem, version=version or "v0", body=path.read_text("utf-8"))


@dataclass(frozen=True)
class FewShotExample:
    """One in-prompt demonstration: article text, label, explanation."""

    article_text: str
    label: Label
    explanation: str

    def __post_init__(self) -> None:
        if not self.explanation.strip():
            raise ValueError("demonstration explanation must be non-empty")


def load_shots(path: Optional[str | Path] = None) -> list[FewShotExample]:
    """Load demonstrations from a JSONL file; defaults to the packaged set."""
    if path is None:
        raw = (
            resources.files("factpanel")
            .joinpath("prompts/shots_default.jsonl")
            .read_text("utf-8")
        )
    else:
        raw = Path(path).read_text(encoding="utf-8")
    shots = []
    for line in raw.splitlines():
        if not line.strip():
            continue
        record = json.loads(line)
        shots.append(
            FewShotExample(
                article_text=record["article_text"],
                label=parse_label(record["label"]),
                explanation=record["explanation"],
            )
        )
    return shots


def render_annotation(label: Label, explanation: str) -> str:
    """Canonical response form the template instructs the model to emit."""
    return f"Classification: {label.value}\nExplanation: {explanation}"


def build_prompt(
    template: PromptTemplate,
    article: Article,
    shots: Sequence[FewShotExample] = (),
) -> list[tuple[str, str]]:
    """Assemble the single user message for one article.

    Zero demonstrations or exactly five; five-shot runs insert the
    demonstrations just before the target-article marker, each rendered in
    the same Classification/Explanation format the model must emit.
    """
    if len(shots) not in (0, 5):
        raise ValueError(f"expected 0 or 5 demonstrations, got {len(shots)}")
    body = template.body
    if shots:
        idx = body.rfind(TARGET_MARKER)
        if idx < 0:
            raise ValueError(f"template missing {TARGET_MARKER!r} marker")
        demos = ["Here are five examples:"]
        for i, shot in enumerate(shots, start=1):
            demos.append(
                f"Example {i}:\n"
                f"Article: {shot.article_text}\n"
                + render_annotation(shot.label, shot.explanation)
            )
        body = body[:idx] + "\n\n".join(demos) + "\n\n" + body[idx:]
    content = body.replace(ARTICLE_PLACEHOLDER, article.text)
    return [("user", content)]


_EMPHASIS = r"[\s*_#\[\]`>]*"
# Markdown-bold markers close after the colon ("**Explanation:**"); consume
# that closing run only when whitespace (or the end) follows, so explanations
# that legitimately open with emphasis survive untouched.
_CLOSING_RUN = r"(?:[*_`]+(?=\s|$))?"
_CLASSIFICATION_RE = re.compile(
    rf"^{_EMPHASIS}classification{_EMPHASIS}:", re.IGNORECASE
)
_CORRECT_RE = re.compile(r"factually\s+correct", re.IGNORECASE)
_INCORRECT_RE = re.compile(r"factually\s+incorrect", re.IGNORECASE)
_EXPLANATION_RE = re.compile(
    rf"{_EMPHASIS}explanation{_EMPHASIS}:{_CLOSING_RUN}", re.IGNORECASE
)


def parse_annotation(raw: str) -> tuple[Optional[Label], str]:
    """Extract (label, explanation) from a model response.

    Total over strings: returns (None, explanation) on parse failure. The
    label comes from the first line carrying a Classification marker and a
    label surface form; a line carrying both surface forms is ambiguous
    and fails. The explanation is everything after the first Explanation
    marker, stripped.
    """
    label: Optional[Label] = None
    for line in raw.splitlines():
        match = _CLASSIFICATION_RE.match(line)
        if not match:
            continue
        rest = line[match.end():]
        incorrect = _INCORRECT_RE.search(rest)
        # "Factually incorrect" contains no "factually correct" substring,
        # so the two matches are independent.
        correct = _CORRECT_RE.search(rest)
        if correct and incorrect:
            label = None
            break
        if incorrect:
            label = Label.FACTUALLY_INCORRECT
            break
        if correct:
            label = Label.FACTUALLY_CORRECT
            break
        # Marker line with no label: keep scanning later lines.

    explanation = ""
    expl_match = _EXPLANATION_RE.search(raw)
    if expl_match:
        explanation = raw[expl_match.end():].strip()
    return label, explanation


@dataclass(frozen=True)
class Annotation:
    """One model's verdict for one article; failures are annotated, not dropped."""

    article_id: str
    endpoint_name: str
    shot_mode: ShotMode
    label: Optional[Label]
    explanation: str
    raw_response: str
    exchange_ref: str
    failure: Optional[FailureKind] = None
    truncated: bool = False
    error: str = ""

    def __post_init__(self) -> None:
        if (self.label is None) == (self.failure is None):
            raise ValueError("exactly one of label/failure must be set")

    @property
    def ok(self) -> bool:
        return self.failure is None

    def to_dict(self) -> dict:
        return {
            "article_id": self.article_id,
            "endpoint": self.endpoint_name,
            "shot_mode": self.shot_mode.value,
            "label": self.label.value if self.label else None,
            "failure": self.failure.value if self.failure else None,
            "explanation": self.explanation,
            "raw_response": self.raw_response,
            "exchange_ref": self.exchange_ref,
            "truncated": self.truncated,
            "error": self.error,
        }

    @classmethod
    def from_dict(cls, record: dict) -> "Annotation":
        return cls(
            article_id=record["article_id"],
            endpoint_name=record["endpoint"],
            shot_mode=ShotMode(record["shot_mode"]),
            label=parse_label(record["label"]) if record.get("label") else None,
            explanation=record.get("explanation", ""),
            raw_response=record.get("raw_response", ""),
            exchange_ref=record.get("exchange_ref", ""),
            failure=FailureKind(record["failure"]) if record.get("failure") else None,
            truncated=record.get("truncated", False),
            error=record.get("error", ""),
        )


@dataclass
class AnnotationRun:
    """All annotations of one run plus its manifest."""

    annotations: list[Annotation]
    manifest: dict

    def by_article(self) -> dict[str, list[Annotation]]:
        grouped: dict[str, list[Annotation]] = {}
        for annotation in self.annotations:
            grouped.setdefault(annotation.article_id, []).append(annotation)
        return grouped


def read_annotations(path: str | Path) -> list[Annotation]:
    """Read an annotations.jsonl file, tolerating a torn trailing line."""
    annotations = []
    with Path(path).open(encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError:
                # A run killed mid-write leaves at most one torn tail line.
                continue
            annotations.append(Annotation.from_dict(record))
    return annotations


def write_annotations(annotations: Iterable[Annotation], path: str | Path) -> None:
    path = Path(path)
    tmp = path.with_suffix(path.suffix + ".tmp")
    with tmp.open("w", encoding="utf-8") as fh:
        for annotation in annotations:
            fh.write(json.dumps(annotation.to_dict(), ensure_ascii=False) + "\n")
    os.replace(tmp, path)


def _utc_now() -> str:
    return datetime.now(timezone.utc).isoformat().replace("+00:00", "Z")


class _Journal:
    """Append-only checkpoint journal behind a run; one writer, flushed lines."""

    def __init__(self, path: Path):
        self.path = path
        self._lock = threading.Lock()
        self._fh = path.open("a", encoding="utf-8")

    def append(self, annotation: Annotation) -> None:
        line = json.dumps(annotation.to_dict(), ensure_ascii=False)
        with self._lock:
            self._fh.write(line + "\n")
            self._fh.flush()

    def close(self) -> None:
        self._fh.close()


def annotate_corpus(
    articles: Sequence[Article],
    panel: Sequence[EndpointConfig],
    template: PromptTemplate,
    shot_mode: ShotMode,
    shots: Sequence[FewShotExample] = (),
    *,
    gateway: LlmGateway,
    out_dir: str | Path,
    concurrency: int = 4,
    max_article_chars: Optional[int] = None,
    resume: bool = True,
    config_hash: str = "",
) -> AnnotationRun:
    """Annotate every (article, endpoint) pair, checkpointing as it goes.

    The journal at out_dir/annotations.jsonl is append-only during the run
    and rewritten in canonical (article, endpoint) order on completion, so
    an interrupted-then-resumed run produces a byte-identical artifact.
    """
    if not panel:
        raise ValueError("panel must be non-empty")
    if shot_mode is ShotMode.FIVE_SHOT and len(shots) != 5:
        raise ValueError("five_shot mode requires exactly 5 demonstrations")
    if shot_mode is ShotMode.ZERO_SHOT:
        shots = ()

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    journal_path = out_dir / "annotations.jsonl"

    done: dict[tuple[str, str], Annotation] = {}
    if resume and journal_path.exists():
        for annotation in read_annotations(journal_path):
            done[(annotation.article_id, annotation.endpoint_name)] = annotation
    elif journal_path.exists():
        journal_path.unlink()

    started_at = _utc_now()
    journal = _Journal(journal_path)
    endpoint_spans: dict[str, list[float]] = {}
    span_lock = threading.Lock()

    def annotate_one(article: Article, endpoint: EndpointConfig) -> Annotation:
        truncated = False
        if max_article_chars is not None and len(article.text) > max_article_chars:
            article = dataclasses.replace(article, text=article.text[:max_article_chars])
            truncated = True
        messages = build_prompt(template, article, shots)
        request_started = time.monotonic()
        try:
            exchange = gateway.complete(endpoint.name, messages)
        except GatewayError as exc:
            return Annotation(
                article_id=article.id,
                endpoint_name=endpoint.name,
                shot_mode=shot_mode,
                label=None,
                explanation="",
                raw_response="",
                exchange_ref="",
                failure=FailureKind.TRANSPORT,
                truncated=truncated,
                error=str(exc),
            )
        finally:
            with span_lock:
                endpoint_spans.setdefault(endpoint.name, []).extend(
                    [request_started, time.monotonic()]
                )
        label, explanation = parse_annotation(exchange.response_text)
        return Annotation(
            article_id=article.id,
            endpoint_name=endpoint.name,
            shot_mode=shot_mode,
            label=label,
            explanation=explanation,
            raw_response=exchange.response_text,
            exchange_ref=exchange.ref,
            failure=None if label is not None else FailureKind.PARSE,
            truncated=truncated,
        )

    pending = [
        (article, endpoint)
        for article in articles
        for endpoint in panel
        if (article.id, endpoint.name) not in done
    ]

    def run_task(pair: tuple[Article, EndpointConfig]) -> None:
        annotation = annotate_one(*pair)
        journal.append(annotation)
        done[(annotation.article_id, annotation.endpoint_name)] = annotation

    try:
        if pending:
            with ThreadPoolExecutor(max_workers=concurrency) as pool:
                list(pool.map(run_task, pending))
    finally:
        journal.close()

    # Canonical order: corpus order, then panel order.
    ordered = [
        done[(article.id, endpoint.name)] for article in articles for endpoint in panel
    ]
    write_annotations(ordered, journal_path)

    per_endpoint = {}
    for endpoint in panel:
        spans = endpoint_spans.get(endpoint.name, [])
        per_endpoint[endpoint.name] = {
            "requests": len(spans) // 2,
            "wall_clock_s": round(max(spans) - min(spans), 6) if spans else 0.0,
        }
    manifest = {
        "stage": "annotate",
        "run_id": (config_hash or panel_hash(panel))[:12],
        "template": {"name": template.name, "version": template.version},
        "shot_mode": shot_mode.value,
        "panel_hash": panel_hash(panel),
        "panel": [endpoint.name for endpoint in panel],
        "article_count": len(articles),
        "annotation_count": len(ordered),
        "parse_failures": sum(
            1 for annotation in ordered if annotation.failure is FailureKind.PARSE
        ),
        "transport_failures": sum(
            1 for annotation in ordered if annotation.failure is FailureKind.TRANSPORT
        ),
        "truncated_count": sum(1 for annotation in ordered if annotation.truncated),
        "max_article_chars": max_article_chars,
        "per_endpoint": per_endpoint,
        "config_hash": config_hash,
        "started_at": started_at,
        "finished_at": _utc_now(),
    }
    (out_dir / "run_manifest.json").write_text(
        json.dumps(manifest, indent=2) + "\n", encoding="utf-8"
    )
    return AnnotationRun(annotations=ordered, manifest=manifest)
