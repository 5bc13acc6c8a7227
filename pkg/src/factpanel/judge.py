"""LLM-as-a-judge evaluation of panel annotations.

Two modes ship because they answer different questions: binary agreement
(does the judge agree with one model's annotation, yes/no) and
comparative (which model's annotation best fits the text and label).
Reports always carry the mode that produced them.
"""

from __future__ import annotations

import enum
import json
import random
import re
import warnings
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterable, Optional, Sequence

from .annotator import Annotation
from .corpus import Article, GoldLabel, Label
from .gateway import EndpointConfig, GatewayError, LlmGateway


class JudgeMode(enum.Enum):
    BINARY_AGREEMENT = "binary_agreement"
    COMPARATIVE = "comparative"


class SelfEnhancementWarning(UserWarning):
    """Judge and annotator share a model family; results may be inflated."""


def _load_prompt(filename: str) -> str:
    return resources.files("factpanel").joinpath(f"prompts/judge/{filename}").read_text("utf-8")


def model_alias(index: int) -> str:
    return f"Model {chr(ord('A') + index)}"


def build_judge_prompt(
    mode: JudgeMode,
    article: Article,
    annotations: Sequence[Annotation],
    gold: Optional[Label] = None,
) -> list[tuple[str, str]]:
    """Render the judge prompt for one article.

    Binary agreement takes exactly one annotation; comparative takes two
    or more, presented under anonymous Model A/B/C aliases.
    """
    if mode is JudgeMode.BINARY_AGREEMENT:
        if len(annotations) != 1:
            raise ValueError("binary agreement judging requires exactly 1 annotation")
        annotation = annotations[0]
        if annotation.label is None:
            raise ValueError("cannot judge a failed annotation")
        body = _load_prompt("binary_v1.txt").format(
            article=article.text,
            label=annotation.label.value,
            explanation=annotation.explanation,
        )
        return [("user", body)]
    if mode is JudgeMode.COMPARATIVE:
        if len(annotations) < 2:
            raise ValueError("comparative judging requires at least 2 annotations")
        rendered = []
        for index, annotation in enumerate(annotations):
            label = annotation.label.value if annotation.label else "(no label)"
            rendered.append(
                f"{model_alias(index)}:\n"
                f"Classification: {label}\n"
                f"Explanation: {annotation.explanation}"
            )
        body = _load_prompt("comparative_v1.txt").format(
            text=article.text,
            label=gold.value if gold else "(unspecified)",
            annotations="\n\n".join(rendered),
        )
        return [("user", body)]
    raise ValueError(f"unknown judge mode {mode!r}")


@dataclass(frozen=True)
class JudgeVerdict:
    """One judge decision, parsed from (and stored with) the raw response."""

    article_id: str
    annotator_endpoint: str
    judge_endpoint: str
    mode: JudgeMode
    agrees: Optional[bool] = None
    preferred_model: Optional[str] = None
    justification: str = ""
    raw_response: str = ""
    parse_failed: bool = False

    def __post_init__(self) -> None:
        if self.parse_failed:
            if self.agrees is not None or self.preferred_model is not None:
                raise ValueError("a failed verdict carries no decision")
        elif self.mode is JudgeMode.BINARY_AGREEMENT:
            if self.agrees is None or self.preferred_model is not None:
                raise ValueError("binary verdicts set agrees and nothing else")
        elif self.mode is JudgeMode.COMPARATIVE:
            if self.preferred_model is None or self.agrees is not None:
                raise ValueError("comparative verdicts set preferred_model and nothing else")

    def to_dict(self) -> dict:
        return {
            "article_id": self.article_id,
            "annotator_endpoint": self.annotator_endpoint,
            "judge_endpoint": self.judge_endpoint,
            "mode": self.mode.value,
            "agrees": self.agrees,
            "preferred_model": self.preferred_model,
            "justification": self.justification,
            "raw_response": self.raw_response,
            "parse_failed": self.parse_failed,
        }

    @classmethod
    def from_dict(cls, record: dict) -> "JudgeVerdict":
        return cls(
            article_id=record["article_id"],
            annotator_endpoint=record["annotator_endpoint"],
            judge_endpoint=record["judge_endpoint"],
            mode=JudgeMode(record["mode"]),
            agrees=record.get("agrees"),
            preferred_model=record.get("preferred_model"),
            justification=record.get("justification", ""),
            raw_response=record.get("raw_response", ""),
            parse_failed=record.get("parse_failed", False),
        )


_YES_NO_RE = re.compile(r"\b(yes|no)\b", re.IGNORECASE)


@dataclass(frozen=True)
class ParsedJudgeFields:
    agrees: Optional[bool] = None
    preferred_model: Optional[str] = None
    justification: str = ""
    parse_failed: bool = False


def parse_judge_response(
    mode: JudgeMode,
    raw: str,
    candidate_models: Sequence[str] = (),
) -> ParsedJudgeFields:
    """Extract the judge's decision. Total over strings; failures are values.

    Binary: the first standalone yes/no token decides. Comparative: the
    earliest-mentioned candidate name wins (longest match on overlapping
    names); no mention is a parse failure.
    """
    if mode is JudgeMode.BINARY_AGREEMENT:
        match = _YES_NO_RE.search(raw)
        if not match:
            return ParsedJudgeFields(parse_failed=True, justification=raw.strip())
        agrees = match.group(1).lower() == "yes"
        justification = raw[match.end():].lstrip(" \t.,:;-—").strip()
        return ParsedJudgeFields(agrees=agrees, justification=justification)
    if mode is JudgeMode.COMPARATIVE:
        lowered = raw.lower()
        best: Optional[tuple[int, int, str]] = None  # (position, -length, name)
        for name in candidate_models:
            pos = lowered.find(name.lower())
            if pos < 0:
                continue
            key = (pos, -len(name), name)
            if best is None or key < best:
                best = key
        if best is None:
            return ParsedJudgeFields(parse_failed=True, justification=raw.strip())
        return ParsedJudgeFields(preferred_model=best[2], justification=raw.strip())
    raise ValueError(f"unknown judge mode {mode!r}")


def agreement_rate(verdicts: Sequence[JudgeVerdict]) -> float:
    """Fraction of valid binary verdicts that agree with the annotation."""
    valid = [
        verdict
        for verdict in verdicts
        if verdict.mode is JudgeMode.BINARY_AGREEMENT and not verdict.parse_failed
    ]
    if not valid:
        raise ValueError("no valid binary verdicts to rate")
    return sum(1 for verdict in valid if verdict.agrees) / len(valid)


def ground_truth_agreement(
    annotations: Sequence[Annotation],
    gold: dict[str, GoldLabel],
) -> float:
    """Fraction of parsed annotations whose label matches the gold label.

    Computed only over articles that possess gold labels.
    """
    matched = 0
    total = 0
    for annotation in annotations:
        if annotation.label is None or annotation.article_id not in gold:
            continue
        total += 1
        if annotation.label is gold[annotation.article_id].label:
            matched += 1
    if total == 0:
        raise ValueError("no annotations overlap the gold labels")
    return matched / total


@dataclass
class AgreementRow:
    annotator: str
    per_judge: dict[str, float]  # judge endpoint -> AR
    ground_truth: Optional[float]


@dataclass
class AgreementReport:
    """Per-annotator agreement rates across judges plus the gold comparison."""

    rows: list[AgreementRow] = field(default_factory=list)
    sample_count: int = 0
    mode: JudgeMode = JudgeMode.BINARY_AGREEMENT

    def judges(self) -> list[str]:
        names: list[str] = []
        for row in self.rows:
            for judge in row.per_judge:
                if judge not in names:
                    names.append(judge)
        return names


def build_agreement_report(
    verdicts: Sequence[JudgeVerdict],
    annotations: Sequence[Annotation],
    gold: dict,
    sample_count: Optional[int] = None,
) -> AgreementReport:
    """Assemble Table-2-style rows from binary verdicts and gold labels."""
    by_annotator: dict[str, dict[str, list[JudgeVerdict]]] = {}
    for verdict in verdicts:
        if verdict.mode is not JudgeMode.BINARY_AGREEMENT:
            continue
        by_annotator.setdefault(verdict.annotator_endpoint, {}).setdefault(
            verdict.judge_endpoint, []
        ).append(verdict)

    annotations_by_endpoint: dict[str, list[Annotation]] = {}
    for annotation in annotations:
        annotations_by_endpoint.setdefault(annotation.endpoint_name, []).append(annotation)

    report = AgreementReport(sample_count=sample_count or 0)
    for annotator in sorted(by_annotator):
        per_judge = {
            judge: agreement_rate(judge_verdicts)
            for judge, judge_verdicts in sorted(by_annotator[annotator].items())
        }
        truth: Optional[float] = None
        endpoint_annotations = annotations_by_endpoint.get(annotator, [])
        if gold and endpoint_annotations:
            try:
                truth = ground_truth_agreement(endpoint_annotations, gold)
            except ValueError:
                truth = None
        report.rows.append(AgreementRow(annotator, per_judge, truth))
        if sample_count is None:
            report.sample_count = max(
                report.sample_count,
                max(len(v) for v in by_annotator[annotator].values()),
            )
    return report


def check_self_enhancement(
    judge: EndpointConfig,
    annotators: Iterable[EndpointConfig],
    *,
    strict: bool = False,
) -> list[str]:
    """Warn (or fail) when the judge shares a family tag with an annotator."""
    offenders = [
        endpoint.name
        for endpoint in annotators
        if judge.family and endpoint.family and judge.family == endpoint.family
    ]
    if offenders:
        message = (
            f"judge {judge.name!r} shares model family {judge.family!r} "
            f"with annotator(s): {', '.join(offenders)}"
        )
        if strict:
            raise ValueError(message)
        warnings.warn(message, SelfEnhancementWarning, stacklevel=2)
    return offenders


def run_binary_judging(
    articles: Sequence[Article],
    annotations: Sequence[Annotation],
    judge_endpoint: EndpointConfig,
    *,
    gateway: LlmGateway,
    sample_size: int = 500,
    seed: int = 0,
    annotator_filter: Optional[str] = None,
) -> list[JudgeVerdict]:
    """Judge a seeded sample of parsed annotations in binary-agreement mode.

    One verdict per sampled annotation; transport failures and unparseable
    judge responses become parse-failed verdicts, never dropped rows.
    """
    articles_by_id = {article.id: article for article in articles}
    judgeable = [
        annotation
        for annotation in annotations
        if annotation.ok and annotation.article_id in articles_by_id
        and (annotator_filter is None or annotation.endpoint_name == annotator_filter)
    ]
    if sample_size < len(judgeable):
        judgeable = random.Random(seed).sample(judgeable, sample_size)
    verdicts = []
    for annotation in judgeable:
        article = articles_by_id[annotation.article_id]
        messages = build_judge_prompt(JudgeMode.BINARY_AGREEMENT, article, [annotation])
        try:
            exchange = gateway.complete(judge_endpoint.name, messages)
            raw = exchange.response_text
            fields = parse_judge_response(JudgeMode.BINARY_AGREEMENT, raw)
        except GatewayError as exc:
            raw = ""
            fields = ParsedJudgeFields(parse_failed=True, justification=str(exc))
        verdicts.append(
            JudgeVerdict(
                article_id=annotation.article_id,
                annotator_endpoint=annotation.endpoint_name,
                judge_endpoint=judge_endpoint.name,
                mode=JudgeMode.BINARY_AGREEMENT,
                agrees=fields.agrees,
                preferred_model=None,
                justification=fields.justification,
                raw_response=raw,
                parse_failed=fields.parse_failed,
            )
        )
    return verdicts


def run_comparative_judging(
    articles: Sequence[Article],
    annotations: Sequence[Annotation],
    judge_endpoint: EndpointConfig,
    *,
    gateway: LlmGateway,
    gold: Optional[dict] = None,
    sample_size: int = 500,
    seed: int = 0,
) -> list[JudgeVerdict]:
    """Ask the judge which panel member annotated each sampled article best."""
    by_article: dict[str, list[Annotation]] = {}
    for annotation in annotations:
        if annotation.ok:
            by_article.setdefault(annotation.article_id, []).append(annotation)
    articles_by_id = {article.id: article for article in articles}
    eligible = [
        article_id
        for article_id in by_article
        if len(by_article[article_id]) >= 2 and article_id in articles_by_id
    ]
    if sample_size < len(eligible):
        eligible = random.Random(seed).sample(eligible, sample_size)
    verdicts = []
    for article_id in eligible:
        group = by_article[article_id]
        article = articles_by_id[article_id]
        gold_label = gold[article_id].label if gold and article_id in gold else None
        messages = build_judge_prompt(JudgeMode.COMPARATIVE, article, group, gold_label)
        aliases = [model_alias(index) for index in range(len(group))]
        alias_to_endpoint = {
            alias: annotation.endpoint_name for alias, annotation in zip(aliases, group)
        }
        try:
            exchange = gateway.complete(judge_endpoint.name, messages)
            raw = exchange.response_text
            fields = parse_judge_response(JudgeMode.COMPARATIVE, raw, aliases)
        except GatewayError as exc:
            raw = ""
            fields = ParsedJudgeFields(parse_failed=True, justification=str(exc))
        preferred = (
            alias_to_endpoint[fields.preferred_model]
            if fields.preferred_model is not None
            else None
        )
        verdicts.append(
            JudgeVerdict(
                article_id=article_id,
                annotator_endpoint="panel",
                judge_endpoint=judge_endpoint.name,
                mode=JudgeMode.COMPARATIVE,
                agrees=None,
                preferred_model=preferred,
                justification=fields.justification,
                raw_response=raw,
                parse_failed=fields.parse_failed,
            )
        )
    return verdicts


def write_verdicts(verdicts: Iterable[JudgeVerdict], path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for verdict in verdicts:
            fh.write(json.dumps(verdict.to_dict(), ensure_ascii=False) + "\n")


def read_verdicts(path: str | Path) -> list[JudgeVerdict]:
    verdicts = []
    with Path(path).open(encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                verdicts.append(JudgeVerdict.from_dict(json.loads(line)))
    return verdicts
