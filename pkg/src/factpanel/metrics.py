"""Reference-based evaluation against gold labels and report rendering.

Default averaging is weighted-by-support, under which recall always
equals accuracy; macro averaging is available as an option. Annotations
the panel failed to label are excluded from the metrics but counted,
with an optional pessimistic mode that scores them as wrong.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence

from .annotator import Annotation
from .corpus import GoldLabel, Label
from .judge import AgreementReport

CLASSES = (Label.FACTUALLY_CORRECT, Label.FACTUALLY_INCORRECT)


@dataclass
class ClassCounts:
    tp: int = 0
    fp: int = 0
    tn: int = 0
    fn: int = 0

    @property
    def support(self) -> int:
        return self.tp + self.fn


@dataclass
class ConfusionMatrix:
    """Per-class one-vs-rest counts over (gold, predicted) label pairs."""

    per_class: dict[Label, ClassCounts] = field(
        default_factory=lambda: {cls: ClassCounts() for cls in CLASSES}
    )
    excluded_count: int = 0

    @property
    def total(self) -> int:
        return sum(counts.support for counts in self.per_class.values())


def confusion_from_pairs(pairs: Sequence[tuple[Label, Label]]) -> ConfusionMatrix:
    """Build the confusion matrix from (gold, predicted) pairs."""
    matrix = ConfusionMatrix()
    for gold, predicted in pairs:
        for cls in CLASSES:
            counts = matrix.per_class[cls]
            if gold is cls and predicted is cls:
                counts.tp += 1
            elif gold is cls:
                counts.fn += 1
            elif predicted is cls:
                counts.fp += 1
            else:
                counts.tn += 1
    return matrix


def confusion(
    annotations: Sequence[Annotation],
    gold: dict[str, GoldLabel],
    *,
    failures_as_wrong: bool = False,
) -> ConfusionMatrix:
    """Join annotations with gold labels and tally the confusion matrix.

    Failed annotations are excluded and counted; in pessimistic mode they
    score as a prediction of the opposite of the gold label.
    """
    pairs: list[tuple[Label, Label]] = []
    excluded = 0
    for annotation in annotations:
        entry = gold.get(annotation.article_id)
        if entry is None:
            continue
        if annotation.label is None:
            excluded += 1
            if failures_as_wrong:
                wrong = (
                    Label.FACTUALLY_INCORRECT
                    if entry.label is Label.FACTUALLY_CORRECT
                    else Label.FACTUALLY_CORRECT
                )
                pairs.append((entry.label, wrong))
            continue
        pairs.append((entry.label, annotation.label))
    if not pairs:
        raise ValueError("no annotations overlap the gold labels")
    matrix = confusion_from_pairs(pairs)
    matrix.excluded_count = excluded
    return matrix


@dataclass
class MetricsRow:
    """One method's scores: a (endpoint, shot mode) pair against gold."""

    method: str
    accuracy: float
    precision: float
    recall: float
    f1: float
    evaluated_count: int
    excluded_count: int = 0
    wall_clock_s: Optional[float] = None


@dataclass
class MetricsReport:
    rows: list[MetricsRow] = field(default_factory=list)


def _safe_div(numerator: float, denominator: float) -> float:
    return numerator / denominator if denominator else 0.0


def classification_report(
    matrix: ConfusionMatrix,
    averaging: str = "weighted",
    method: str = "",
    wall_clock_s: Optional[float] = None,
) -> MetricsRow:
    """Accuracy/precision/recall/F1 from a confusion matrix.

    Per-class precision is tp/(tp+fp) and recall tp/(tp+fn), both 0 when
    undefined; F1 is the per-class harmonic mean. Averaging is by support
    weights (weighted) or an unweighted mean (macro).
    """
    if averaging not in ("weighted", "macro"):
        raise ValueError(f"unknown averaging mode {averaging!r}")
    total = matrix.total
    if total == 0:
        raise ValueError("cannot report metrics over zero evaluated pairs")

    per_class = {}
    for cls, counts in matrix.per_class.items():
        precision = _safe_div(counts.tp, counts.tp + counts.fp)
        recall = _safe_div(counts.tp, counts.tp + counts.fn)
        f1 = _safe_div(2 * precision * recall, precision + recall)
        per_class[cls] = (precision, recall, f1, counts.support)

    if averaging == "weighted":
        weights = {cls: stats[3] / total for cls, stats in per_class.items()}
    else:
        weights = {cls: 1 / len(per_class) for cls in per_class}

    precision = sum(stats[0] * weights[cls] for cls, stats in per_class.items())
    recall = sum(stats[1] * weights[cls] for cls, stats in per_class.items())
    f1 = sum(stats[2] * weights[cls] for cls, stats in per_class.items())
    accuracy = sum(counts.tp for counts in matrix.per_class.values()) / total

    return MetricsRow(
        method=method,
        accuracy=accuracy,
        precision=precision,
        recall=recall,
        f1=f1,
        evaluated_count=total,
        excluded_count=matrix.excluded_count,
        wall_clock_s=wall_clock_s,
    )


# ----------------------------------------------------------------------
# Rendering

def _percent(value: float) -> str:
    return f"{value * 100:.1f}%"


def _format_duration(seconds: float) -> str:
    minutes, _ = divmod(int(round(seconds)), 60)
    hours, minutes = divmod(minutes, 60)
    return f"{hours} hr. {minutes} min."


METRIC_COLUMNS = ("Acc.", "Prec.", "Rec.", "F1")


def render_metrics_markdown(report: MetricsReport) -> str:
    """Method-by-metric table: percents at one decimal, best per column bolded."""
    include_time = any(row.wall_clock_s is not None for row in report.rows)
    headers = ["Method", *METRIC_COLUMNS] + (["Time"] if include_time else [])
    values = [
        [row.accuracy, row.precision, row.recall, row.f1] for row in report.rows
    ]
    best = [max(column) if column else None for column in zip(*values)] if values else []
    lines = [
        "| " + " | ".join(headers) + " |",
        "| " + " | ".join("---" for _ in headers) + " |",
    ]
    for row, row_values in zip(report.rows, values):
        cells = [row.method]
        for metric_index, value in enumerate(row_values):
            cell = _percent(value)
            if best and value == best[metric_index]:
                cell = f"**{cell}**"
            cells.append(cell)
        if include_time:
            cells.append(
                _format_duration(row.wall_clock_s) if row.wall_clock_s is not None else ""
            )
        lines.append("| " + " | ".join(cells) + " |")
    return "\n".join(lines) + "\n"


def render_metrics_csv(report: MetricsReport) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(
        ["method", "accuracy", "precision", "recall", "f1", "evaluated_count",
         "excluded_count", "wall_clock_s"]
    )
    for row in report.rows:
        writer.writerow(
            [
                row.method,
                repr(row.accuracy),
                repr(row.precision),
                repr(row.recall),
                repr(row.f1),
                row.evaluated_count,
                row.excluded_count,
                "" if row.wall_clock_s is None else repr(row.wall_clock_s),
            ]
        )
    return buffer.getvalue()


def parse_metrics_csv(text: str) -> MetricsReport:
    reader = csv.DictReader(io.StringIO(text))
    report = MetricsReport()
    for record in reader:
        report.rows.append(
            MetricsRow(
                method=record["method"],
                accuracy=float(record["accuracy"]),
                precision=float(record["precision"]),
                recall=float(record["recall"]),
                f1=float(record["f1"]),
                evaluated_count=int(record["evaluated_count"]),
                excluded_count=int(record["excluded_count"]),
                wall_clock_s=float(record["wall_clock_s"]) if record["wall_clock_s"] else None,
            )
        )
    return report


def render_metrics_json(report: MetricsReport) -> str:
    return json.dumps(
        {
            "rows": [
                {
                    "method": row.method,
                    "accuracy": row.accuracy,
                    "precision": row.precision,
                    "recall": row.recall,
                    "f1": row.f1,
                    "evaluated_count": row.evaluated_count,
                    "excluded_count": row.excluded_count,
                    "wall_clock_s": row.wall_clock_s,
                }
                for row in report.rows
            ]
        },
        indent=2,
    ) + "\n"


def render_agreement_markdown(report: AgreementReport) -> str:
    """AR table: per-judge columns plus ground truth; best judge bolded per row."""
    judges = report.judges()
    headers = ["Method", *[f"AR ({judge})" for judge in judges], "AR (Ground Truth)"]
    lines = [
        "| " + " | ".join(headers) + " |",
        "| " + " | ".join("---" for _ in headers) + " |",
    ]
    for row in report.rows:
        rates = [row.per_judge.get(judge) for judge in judges]
        present = [rate for rate in rates if rate is not None]
        best = max(present) if present else None
        cells = [row.annotator]
        for rate in rates:
            if rate is None:
                cells.append("")
            elif best is not None and rate == best and len(present) > 1:
                cells.append(f"**{_percent(rate)}**")
            else:
                cells.append(_percent(rate))
        cells.append("" if row.ground_truth is None else _percent(row.ground_truth))
        lines.append("| " + " | ".join(cells) + " |")
    return "\n".join(lines) + "\n"


def render_agreement_csv(report: AgreementReport) -> str:
    judges = report.judges()
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(
        ["annotator", *[f"ar_{judge}" for judge in judges], "ar_ground_truth", "sample_count"]
    )
    for row in report.rows:
        writer.writerow(
            [
                row.annotator,
                *[
                    "" if row.per_judge.get(judge) is None else repr(row.per_judge[judge])
                    for judge in judges
                ],
                "" if row.ground_truth is None else repr(row.ground_truth),
                report.sample_count,
            ]
        )
    return buffer.getvalue()


def render_agreement_json(report: AgreementReport) -> str:
    return json.dumps(
        {
            "mode": report.mode.value,
            "sample_count": report.sample_count,
            "rows": [
                {
                    "annotator": row.annotator,
                    "per_judge": row.per_judge,
                    "ground_truth": row.ground_truth,
                }
                for row in report.rows
            ],
        },
        indent=2,
    ) + "\n"


def write_reports(
    out_dir: str | Path,
    metrics_report: Optional[MetricsReport] = None,
    agreement_report: Optional[AgreementReport] = None,
) -> list[Path]:
    """Emit markdown, CSV, and JSON renderings of the given reports."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    if metrics_report is not None:
        for suffix, renderer in (
            (".md", render_metrics_markdown),
            (".csv", render_metrics_csv),
            (".json", render_metrics_json),
        ):
            path = out_dir / f"metrics_report{suffix}"
            path.write_text(renderer(metrics_report), encoding="utf-8")
            written.append(path)
    if agreement_report is not None:
        for suffix, renderer in (
            (".md", render_agreement_markdown),
            (".csv", render_agreement_csv),
            (".json", render_agreement_json),
        ):
            path = out_dir / f"agreement_report{suffix}"
            path.write_text(renderer(agreement_report), encoding="utf-8")
            written.append(path)
    return written
