"""Command-line entry point wiring the pipeline end to end.

Configuration precedence is flags > FACTPANEL_* environment variables >
config file; the resolved configuration is hashed into each run manifest
so report provenance is auditable.
"""

from __future__ import annotations

import hashlib
import json
import sys
from datetime import datetime
from pathlib import Path

import click
import yaml

from . import __version__
from .aggregator import (
    ReviewPolicy,
    build_vote_records,
    read_vote_records,
    select_for_review,
    write_review_queue,
    write_vote_records,
    read_review_queue,
)
from .annotator import (
    AnnotationRun,
    ShotMode,
    annotate_corpus,
    load_shots,
    load_template,
    read_annotations,
)
from .corpus import (
    load_articles,
    load_gold_labels,
    load_taxonomy,
    stratified_sample,
    write_articles,
    write_gold_labels,
)
from .gateway import ExchangeLog, LlmGateway, load_panel
from .judge import (
    build_agreement_report,
    check_self_enhancement,
    run_binary_judging,
    run_comparative_judging,
    read_verdicts,
    write_verdicts,
)
from .metrics import (
    MetricsReport,
    classification_report,
    confusion,
    write_reports,
)
from .review import ReviewStore, TaskState, create_app, load_reviewers
from .review.store import promote_from_tasks, read_events, replay_events


def _fail(message: str) -> None:
    """Machine-readable runtime failure on stderr, exit 1."""
    click.echo(json.dumps({"error": message}), err=True)
    sys.exit(1)


def _config_hash(params: dict) -> str:
    blob = json.dumps(params, sort_keys=True, default=str)
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:12]


def _load_config_file(ctx: click.Context, param: click.Parameter, value: str | None):
    if value:
        raw = Path(value).read_text(encoding="utf-8")
        data = yaml.safe_load(raw) if value.endswith((".yaml", ".yml")) else json.loads(raw)
        ctx.default_map = data or {}
    return value


@click.group()
@click.version_option(version=__version__, prog_name="factpanel")
@click.option(
    "--config",
    type=click.Path(exists=True, dir_okay=False),
    callback=_load_config_file,
    expose_value=False,
    is_eager=True,
    help="Config file supplying per-subcommand option defaults.",
)
def main() -> None:
    """Panel-of-LLMs factuality annotation pipeline."""


@main.command()
@click.option("--input", "input_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--format", "fmt", type=click.Choice(["jsonl", "csv"]), default="jsonl", show_default=True)
@click.option("--taxonomy", "taxonomy_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--window-start", help="Earliest accepted published_at (RFC 3339).")
@click.option("--window-end", help="Latest accepted published_at (RFC 3339).")
@click.option("--output", required=True, type=click.Path(dir_okay=False))
def ingest(input_path, fmt, taxonomy_path, window_start, window_end, output) -> None:
    """Validate a corpus file and write it as canonical JSON-lines."""
    taxonomy = load_taxonomy(taxonomy_path) if taxonomy_path else None
    window = None
    if window_start or window_end:
        if not (window_start and window_end):
            raise click.UsageError("--window-start and --window-end must be given together")
        window = (
            datetime.fromisoformat(window_start.replace("Z", "+00:00")),
            datetime.fromisoformat(window_end.replace("Z", "+00:00")),
        )
    try:
        result = load_articles(input_path, fmt, taxonomy=taxonomy, window=window)
    except ValueError as exc:
        _fail(str(exc))
    write_articles(result.articles, output)
    click.echo(
        json.dumps(
            {
                "articles": len(result.articles),
                "skipped": result.skipped_count,
                "skipped_reasons": [
                    {"position": row.position, "reason": row.reason} for row in result.skipped
                ],
                "output": output,
            }
        )
    )


@main.command()
@click.option("--corpus", "corpus_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--n", required=True, type=int)
@click.option("--by", type=click.Choice(["topic", "source", "both"]), default="topic", show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--output", required=True, type=click.Path(dir_okay=False))
def sample(corpus_path, n, by, seed, output) -> None:
    """Draw a proportional stratified sample from a corpus."""
    try:
        articles = load_articles(corpus_path).articles
        sampled = stratified_sample(articles, n, by=by, seed=seed)
    except ValueError as exc:
        _fail(str(exc))
    write_articles(sampled, output)
    click.echo(json.dumps({"sampled": len(sampled), "output": output}))


@main.command()
@click.option("--corpus", "corpus_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--panel", "panel_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--models", "model_names", multiple=True,
              help="Annotate with these panel endpoints only (default: all).")
@click.option("--shots", "shot_count", type=int, default=0, show_default=True,
              help="Number of in-prompt demonstrations (0 or 5).")
@click.option("--allow-any-shots", is_flag=True, help="Lift the 0-or-5 restriction.")
@click.option("--shots-file", type=click.Path(exists=True, dir_okay=False),
              help="JSONL demonstrations; defaults to the packaged set.")
@click.option("--template", "template_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--out-dir", required=True, type=click.Path(file_okay=False))
@click.option("--concurrency", type=int, default=4, show_default=True)
@click.option("--max-article-chars", type=int, default=None)
@click.option("--fresh", is_flag=True, help="Discard any previous journal instead of resuming.")
def annotate(corpus_path, panel_path, model_names, shot_count, allow_any_shots, shots_file,
             template_path, out_dir, concurrency, max_article_chars, fresh) -> None:
    """Run the annotator panel over a corpus, checkpointing per pair."""
    if shot_count not in (0, 5) and not allow_any_shots:
        raise click.UsageError("--shots must be 0 or 5 (use --allow-any-shots to override)")
    try:
        articles = load_articles(corpus_path).articles
        panel = load_panel(panel_path)
        if model_names:
            known = {endpoint.name for endpoint in panel}
            missing = [name for name in model_names if name not in known]
            if missing:
                _fail(f"panel has no endpoint(s): {', '.join(missing)}")
            panel = [endpoint for endpoint in panel if endpoint.name in model_names]
        template = load_template(template_path)
        shot_mode = ShotMode.ZERO_SHOT if shot_count == 0 else ShotMode.FIVE_SHOT
        shots = load_shots(shots_file)[:shot_count] if shot_count else []
        if shot_count and len(shots) != shot_count:
            _fail(f"shots file provides {len(shots)} demonstrations, need {shot_count}")
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        config_hash = _config_hash(
            {
                "corpus": corpus_path,
                "panel": panel_path,
                "models": sorted(model_names),
                "shots": shot_count,
                "template": template.version,
                "max_article_chars": max_article_chars,
            }
        )
        with LlmGateway(panel, ExchangeLog(out / "exchanges.jsonl")) as gateway:
            run = annotate_corpus(
                articles,
                panel,
                template,
                shot_mode,
                shots,
                gateway=gateway,
                out_dir=out,
                concurrency=concurrency,
                max_article_chars=max_article_chars,
                resume=not fresh,
                config_hash=config_hash,
            )
    except ValueError as exc:
        _fail(str(exc))
    click.echo(
        json.dumps(
            {
                "annotations": len(run.annotations),
                "parse_failures": run.manifest["parse_failures"],
                "transport_failures": run.manifest["transport_failures"],
                "out_dir": str(out_dir),
            }
        )
    )


@main.command()
@click.option("--annotations", "annotations_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--output", required=True, type=click.Path(dir_okay=False))
@click.option("--review-queue", "queue_path", type=click.Path(dir_okay=False))
@click.option("--policy", type=click.Choice(["default", "audit-all"]), default="default",
              show_default=True)
def vote(annotations_path, output, queue_path, policy) -> None:
    """Aggregate annotations into per-article majority-vote records."""
    try:
        run = AnnotationRun(annotations=read_annotations(annotations_path), manifest={})
        records = build_vote_records(run)
    except ValueError as exc:
        _fail(str(exc))
    write_vote_records(records, output)
    selected = select_for_review(
        records,
        ReviewPolicy.AUDIT_ALL if policy == "audit-all" else ReviewPolicy.DEFAULT,
    )
    if queue_path:
        write_review_queue(selected, queue_path)
    click.echo(
        json.dumps(
            {
                "articles": len(records),
                "ties": sum(1 for record in records if record.is_tie),
                "contested": len(selected),
                "output": output,
            }
        )
    )


@main.command("serve-review")
@click.option("--queue", "queue_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--annotations", "annotations_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--votes", "votes_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--corpus", "corpus_path", type=click.Path(exists=True, dir_okay=False),
              help="Corpus file; supplies article text/metadata to the reviewer UI.")
@click.option("--reviewers", "reviewers_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--event-log", default="review_events.jsonl", show_default=True,
              type=click.Path(dir_okay=False))
@click.option("--ui-dir", type=click.Path(file_okay=False, exists=True))
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", type=int, default=8321, show_default=True)
@click.option("--run-id", default="default", show_default=True)
def serve_review(queue_path, annotations_path, votes_path, corpus_path, reviewers_path,
                 event_log, ui_dir, host, port, run_id) -> None:
    """Serve the human review API (and UI bundle, if given) over HTTP."""
    import uvicorn

    try:
        reviewers, tokens = load_reviewers(reviewers_path)
        store = ReviewStore(reviewers=reviewers, event_log_path=event_log, run_id=run_id)
        run = AnnotationRun(annotations=read_annotations(annotations_path), manifest={})
        records = read_vote_records(votes_path)
        queue = read_review_queue(queue_path)
        articles = None
        if corpus_path:
            articles = {a.id: a for a in load_articles(corpus_path).articles}
        store.open_tasks(queue, run, records, articles=articles)
    except ValueError as exc:
        _fail(str(exc))

    def resolver(token: str):
        reviewer_id = tokens.get(token)
        return store.reviewers.get(reviewer_id) if reviewer_id else None

    app = create_app(store, resolver, ui_dir=ui_dir)
    uvicorn.run(app, host=host, port=port, log_level="warning")


@main.command()
@click.option("--event-log", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--output", required=True, type=click.Path(dir_okay=False))
@click.option("--strict", is_flag=True, help="Fail if any task is still unresolved.")
def promote(event_log, output, strict) -> None:
    """Promote resolved review tasks from an event log to gold labels."""
    try:
        store = replay_events(read_events(event_log))
        tasks = list(store.tasks.values())
        if not strict:
            tasks = [task for task in tasks if task.state is TaskState.RESOLVED]
        gold = promote_from_tasks(tasks)
    except Exception as exc:
        _fail(str(exc))
    write_gold_labels(sorted(gold, key=lambda entry: entry.article_id), output)
    click.echo(json.dumps({"promoted": len(gold), "output": output}))


@main.command()
@click.option("--corpus", "corpus_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--annotations", "annotations_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--panel", "panel_path", required=True, type=click.Path(exists=True, dir_okay=False),
              help="Panel file that includes the judge endpoint.")
@click.option("--judge", "judge_name", required=True, help="Judge endpoint name in the panel file.")
@click.option("--mode", type=click.Choice(["binary", "comparative"]), default="binary",
              show_default=True)
@click.option("--gold", "gold_path", type=click.Path(exists=True, dir_okay=False),
              help="Gold labels (used as the comparative reference label).")
@click.option("--sample", "sample_size", type=int, default=500, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--strict-family-check", is_flag=True,
              help="Fail when judge and an annotator share a model family.")
@click.option("--output", required=True, type=click.Path(dir_okay=False))
def judge(corpus_path, annotations_path, panel_path, judge_name, mode, gold_path,
          sample_size, seed, strict_family_check, output) -> None:
    """Judge annotations with an LLM evaluator; writes verdicts.jsonl."""
    try:
        articles = load_articles(corpus_path).articles
        annotations = read_annotations(annotations_path)
        panel = load_panel(panel_path)
        by_name = {endpoint.name: endpoint for endpoint in panel}
        if judge_name not in by_name:
            _fail(f"judge endpoint {judge_name!r} not in panel file")
        judge_endpoint = by_name[judge_name]
        annotator_names = {annotation.endpoint_name for annotation in annotations}
        check_self_enhancement(
            judge_endpoint,
            [endpoint for endpoint in panel if endpoint.name in annotator_names],
            strict=strict_family_check,
        )
        gold = load_gold_labels(gold_path) if gold_path else {}
        with LlmGateway(panel, ExchangeLog(Path(output).parent / "judge_exchanges.jsonl")) as gateway:
            if mode == "binary":
                verdicts = []
                for annotator in sorted(annotator_names):
                    verdicts.extend(
                        run_binary_judging(
                            articles,
                            annotations,
                            judge_endpoint,
                            gateway=gateway,
                            sample_size=sample_size,
                            seed=seed,
                            annotator_filter=annotator,
                        )
                    )
            else:
                verdicts = run_comparative_judging(
                    articles,
                    annotations,
                    judge_endpoint,
                    gateway=gateway,
                    gold=gold,
                    sample_size=sample_size,
                    seed=seed,
                )
    except ValueError as exc:
        _fail(str(exc))
    write_verdicts(verdicts, output)
    click.echo(
        json.dumps(
            {
                "verdicts": len(verdicts),
                "parse_failures": sum(1 for verdict in verdicts if verdict.parse_failed),
                "output": output,
            }
        )
    )


@main.command()
@click.option("--annotations", "annotations_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--gold", "gold_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--averaging", type=click.Choice(["weighted", "macro"]), default="weighted",
              show_default=True)
@click.option("--failures-as-wrong", is_flag=True,
              help="Score unlabeled annotations as wrong instead of excluding them.")
@click.option("--manifest", "manifest_path", type=click.Path(exists=True, dir_okay=False),
              help="Run manifest supplying per-endpoint wall-clock times.")
@click.option("--out-dir", required=True, type=click.Path(file_okay=False))
def metrics(annotations_path, gold_path, averaging, failures_as_wrong,
            manifest_path, out_dir) -> None:
    """Score annotations against gold labels, one row per (endpoint, shot mode)."""
    try:
        annotations = read_annotations(annotations_path)
        gold = load_gold_labels(gold_path)
        manifest = (
            json.loads(Path(manifest_path).read_text(encoding="utf-8"))
            if manifest_path
            else {}
        )
        groups: dict[tuple[str, str], list] = {}
        for annotation in annotations:
            key = (annotation.endpoint_name, annotation.shot_mode.value)
            groups.setdefault(key, []).append(annotation)
        report = MetricsReport()
        shot_label = {"zero_shot": "zero-shot", "five_shot": "5-shot"}
        for (endpoint, mode), group in sorted(groups.items()):
            matrix = confusion(group, gold, failures_as_wrong=failures_as_wrong)
            wall_clock = (
                manifest.get("per_endpoint", {}).get(endpoint, {}).get("wall_clock_s")
            )
            report.rows.append(
                classification_report(
                    matrix,
                    averaging=averaging,
                    method=f"{endpoint} ({shot_label.get(mode, mode)})",
                    wall_clock_s=wall_clock,
                )
            )
        paths = write_reports(out_dir, metrics_report=report)
    except ValueError as exc:
        _fail(str(exc))
    click.echo(json.dumps({"rows": len(report.rows), "files": [str(p) for p in paths]}))


@main.command()
@click.option("--verdicts", "verdict_paths", multiple=True, required=True,
              type=click.Path(exists=True, dir_okay=False),
              help="One or more verdicts.jsonl files (one per judge run).")
@click.option("--annotations", "annotations_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--gold", "gold_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--sample-count", type=int, default=None)
@click.option("--out-dir", required=True, type=click.Path(file_okay=False))
def report(verdict_paths, annotations_path, gold_path, sample_count, out_dir) -> None:
    """Render the agreement-rate report from judge verdicts."""
    try:
        verdicts = []
        for path in verdict_paths:
            verdicts.extend(read_verdicts(path))
        annotations = read_annotations(annotations_path)
        gold = load_gold_labels(gold_path) if gold_path else {}
        agreement = build_agreement_report(
            verdicts, annotations, gold, sample_count=sample_count
        )
        paths = write_reports(out_dir, agreement_report=agreement)
    except ValueError as exc:
        _fail(str(exc))
    click.echo(json.dumps({"rows": len(agreement.rows), "files": [str(p) for p in paths]}))


@main.command("mock-llm")
@click.option("--script", "script_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", type=int, default=8099, show_default=True)
def mock_llm(script_path, host, port) -> None:
    """Start the deterministic scripted chat-completions server."""
    from .mockllm import serve_forever

    serve_forever(script_path, host, port)


if __name__ == "__main__":
    main()
