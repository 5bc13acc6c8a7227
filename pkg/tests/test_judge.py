from __future__ import annotations

import random

import pytest

from conftest import make_annotation, make_article
from factpanel.corpus import GoldLabel, Label
from factpanel.gateway import EndpointConfig, LlmGateway
from factpanel.judge import (
    AgreementReport,
    JudgeMode,
    JudgeVerdict,
    SelfEnhancementWarning,
    agreement_rate,
    build_agreement_report,
    build_judge_prompt,
    check_self_enhancement,
    ground_truth_agreement,
    model_alias,
    parse_judge_response,
    read_verdicts,
    run_binary_judging,
    write_verdicts,
)
from factpanel.mockllm import MockLlmServer, MockScript
from oracles import reference_judge_binary, reference_judge_comparative

C = Label.FACTUALLY_CORRECT
I = Label.FACTUALLY_INCORRECT


def verdict(agrees: bool | None, *, annotator="model-a", judge="judge-1",
            parse_failed=False) -> JudgeVerdict:
    return JudgeVerdict(
        article_id="a1",
        annotator_endpoint=annotator,
        judge_endpoint=judge,
        mode=JudgeMode.BINARY_AGREEMENT,
        agrees=agrees,
        parse_failed=parse_failed,
        raw_response="Yes" if agrees else "No",
    )


class TestBuildJudgePrompt:
    def test_binary_contains_single_annotation(self):
        article = make_article(1)
        annotation = make_annotation("a0001", "model-a", C, explanation="looks right")
        [(role, content)] = build_judge_prompt(JudgeMode.BINARY_AGREEMENT, article, [annotation])
        assert role == "user"
        assert article.text in content
        assert "Factually Correct" in content
        assert "looks right" in content
        assert "Yes or No" in content

    def test_binary_requires_exactly_one(self):
        article = make_article(1)
        annotations = [make_annotation("a0001", f"m{k}", C) for k in range(2)]
        with pytest.raises(ValueError, match="exactly 1"):
            build_judge_prompt(JudgeMode.BINARY_AGREEMENT, article, annotations)

    def test_comparative_lists_all_models(self):
        article = make_article(2)
        annotations = [
            make_annotation("a0002", "model-a", C, explanation="fine"),
            make_annotation("a0002", "model-b", I, explanation="wrong"),
        ]
        [(_, content)] = build_judge_prompt(
            JudgeMode.COMPARATIVE, article, annotations, gold=C
        )
        assert "Annotation from all Models:" in content
        assert "Model A:" in content and "Model B:" in content
        assert "fine" in content and "wrong" in content
        assert content.index("Model A:") < content.index("Model B:")

    def test_comparative_requires_two(self):
        with pytest.raises(ValueError, match="at least 2"):
            build_judge_prompt(
                JudgeMode.COMPARATIVE, make_article(1), [make_annotation("a", "m", C)]
            )


class TestParseJudgeResponse:
    def test_affirmative(self):
        fields = parse_judge_response(
            JudgeMode.BINARY_AGREEMENT, "Yes. The annotation matches official records."
        )
        assert fields.agrees is True
        assert fields.justification == "The annotation matches official records."

    def test_negative_with_dash(self):
        fields = parse_judge_response(
            JudgeMode.BINARY_AGREEMENT, "No — the article misstates the vote count."
        )
        assert fields.agrees is False

    def test_embedded_words_do_not_count(self):
        fields = parse_judge_response(
            JudgeMode.BINARY_AGREEMENT, "Nothing is eyes-deep here. no."
        )
        assert fields.agrees is False  # "no" token, not "Nothing"

    def test_no_token_is_parse_failure(self):
        fields = parse_judge_response(JudgeMode.BINARY_AGREEMENT, "Unclear either way.")
        assert fields.parse_failed is True
        assert fields.agrees is None

    def test_comparative_first_mention_wins(self):
        fields = parse_judge_response(
            JudgeMode.COMPARATIVE,
            "Model B provides the better-aligned annotation.",
            ["Model A", "Model B"],
        )
        assert fields.preferred_model == "Model B"

    def test_comparative_no_mention_fails(self):
        fields = parse_judge_response(
            JudgeMode.COMPARATIVE, "Both are adequate.", ["Model A", "Model B"]
        )
        assert fields.parse_failed is True

    def test_templated_responses_match_reference_oracle(self):
        rng = random.Random(17)
        candidates = [model_alias(k) for k in range(4)]
        binary_templates = [
            "Yes, the reasoning holds.",
            "no.",
            "  YES — verified against records.",
            "I think the answer is No, because the date is wrong.",
            "The assessment seems solid. Yes.",
            "Hard to say.",
            "Notably absent evidence. no basis to agree? yes actually.",
        ]
        for _ in range(100):
            raw = rng.choice(binary_templates) + " " + "filler " * rng.randint(0, 5)
            fields = parse_judge_response(JudgeMode.BINARY_AGREEMENT, raw)
            expected = reference_judge_binary(raw)
            assert fields.agrees == expected
            assert fields.parse_failed == (expected is None)

        comparative_templates = [
            "After review, {m} aligns best with the label.",
            "{m} is the strongest; the others drift.",
            "Between them, I prefer {m}.",
            "None of them align.",
        ]
        for _ in range(100):
            template = rng.choice(comparative_templates)
            raw = template.format(m=rng.choice(candidates))
            fields = parse_judge_response(JudgeMode.COMPARATIVE, raw, candidates)
            expected = reference_judge_comparative(raw, candidates)
            assert fields.preferred_model == expected
            assert fields.parse_failed == (expected is None)


class TestAgreementRate:
    def test_three_of_four(self):
        verdicts = [verdict(True), verdict(True), verdict(False), verdict(True)]
        assert agreement_rate(verdicts) == 0.75

    def test_all_agree(self):
        assert agreement_rate([verdict(True)] * 5) == 1.0

    def test_500_with_382_agreements_is_0_764(self):
        verdicts = [verdict(True) for _ in range(382)] + [
            verdict(False) for _ in range(118)
        ]
        rate = agreement_rate(verdicts)
        assert rate == pytest.approx(0.764, abs=1e-12)
        # Independent count:
        assert sum(1 for v in verdicts if v.agrees) / len(verdicts) == rate

    def test_parse_failures_excluded(self):
        verdicts = [verdict(True), verdict(None, parse_failed=True), verdict(False)]
        assert agreement_rate(verdicts) == 0.5

    def test_empty_valid_set_rejected(self):
        with pytest.raises(ValueError):
            agreement_rate([verdict(None, parse_failed=True)])

    def test_permutation_and_disjoint_additivity(self):
        rng = random.Random(3)
        verdicts = [verdict(rng.random() < 0.7) for _ in range(101)]
        shuffled = list(verdicts)
        rng.shuffle(shuffled)
        assert agreement_rate(verdicts) == agreement_rate(shuffled)
        a, b = verdicts[:40], verdicts[40:]
        combined = agreement_rate(verdicts) * len(verdicts)
        assert combined == pytest.approx(
            agreement_rate(a) * len(a) + agreement_rate(b) * len(b), abs=1e-9
        )


class TestGroundTruthAgreement:
    def test_identical_is_one(self):
        gold = {f"a{k}": GoldLabel(f"a{k}", C) for k in range(4)}
        annotations = [make_annotation(f"a{k}", "m", C) for k in range(4)]
        assert ground_truth_agreement(annotations, gold) == 1.0

    def test_half_matching(self):
        gold = {"a0": GoldLabel("a0", C), "a1": GoldLabel("a1", C)}
        annotations = [make_annotation("a0", "m", C), make_annotation("a1", "m", I)]
        assert ground_truth_agreement(annotations, gold) == 0.5

    def test_fixture_matches_join_and_count(self):
        rng = random.Random(31)
        gold = {f"a{k}": GoldLabel(f"a{k}", rng.choice([C, I])) for k in range(50)}
        annotations = [
            make_annotation(f"a{k}", "m", rng.choice([C, I])) for k in range(50)
        ]
        expected_matches = sum(
            1 for annotation in annotations
            if annotation.label is gold[annotation.article_id].label
        )
        assert ground_truth_agreement(annotations, gold) == expected_matches / 50

    def test_no_overlap_rejected(self):
        with pytest.raises(ValueError, match="overlap"):
            ground_truth_agreement([make_annotation("a1", "m", C)], {})


class TestSelfEnhancementGuard:
    def judge_cfg(self, family):
        return EndpointConfig(name="judge", base_url="http://x", model_id="j", family=family)

    def annotator_cfg(self, name, family):
        return EndpointConfig(name=name, base_url="http://x", model_id=name, family=family)

    def test_same_family_warns(self):
        with pytest.warns(SelfEnhancementWarning):
            offenders = check_self_enhancement(
                self.judge_cfg("llama"),
                [self.annotator_cfg("a", "llama"), self.annotator_cfg("b", "phi")],
            )
        assert offenders == ["a"]

    def test_strict_mode_fails(self):
        with pytest.raises(ValueError, match="family"):
            check_self_enhancement(
                self.judge_cfg("llama"), [self.annotator_cfg("a", "llama")], strict=True
            )

    def test_cross_family_is_quiet(self):
        import warnings

        with warnings.catch_warnings():
            warnings.simplefilter("error")
            assert check_self_enhancement(
                self.judge_cfg("gpt"), [self.annotator_cfg("a", "llama")]
            ) == []


class TestJudgeRun:
    def test_verdicts_persist_and_reparse_identically(self, tmp_path):
        articles = [make_article(i) for i in range(6)]
        annotations = [make_annotation(a.id, "model-a", C) for a in articles]
        script = MockScript(
            models={
                "judge-1": {
                    "responses": {
                        "a0000": "Yes, solid.",
                        "a0001": "No, off.",
                        "a0002": "Yes.",
                        "a0003": "unclear",
                        "a0004": "yes indeed",
                        "a0005": "No way.",
                    }
                }
            }
        )
        with MockLlmServer(script) as server:
            judge_endpoint = EndpointConfig(
                name="judge-1", base_url=server.base_url, model_id="judge-1",
                requests_per_minute=100_000, timeout_s=5.0,
            )
            with LlmGateway([judge_endpoint]) as gateway:
                verdicts = run_binary_judging(
                    articles, annotations, judge_endpoint,
                    gateway=gateway, sample_size=500, seed=0,
                )
        assert len(verdicts) == 6
        path = tmp_path / "verdicts.jsonl"
        write_verdicts(verdicts, path)
        loaded = read_verdicts(path)
        assert loaded == verdicts
        # Re-parsing stored raw responses reproduces stored verdicts exactly.
        for stored in loaded:
            fields = parse_judge_response(stored.mode, stored.raw_response)
            assert fields.agrees == stored.agrees
            assert fields.parse_failed == stored.parse_failed
        rate = agreement_rate(verdicts)
        assert rate == pytest.approx(3 / 5)  # one parse failure excluded

    def test_sampling_is_seeded_and_capped(self):
        articles = [make_article(i) for i in range(40)]
        annotations = [make_annotation(a.id, "model-a", C) for a in articles]
        with MockLlmServer(MockScript(default="Yes.")) as server:
            judge_endpoint = EndpointConfig(
                name="judge-1", base_url=server.base_url, model_id="judge-1",
                requests_per_minute=100_000, timeout_s=5.0,
            )
            with LlmGateway([judge_endpoint]) as gateway:
                first = run_binary_judging(
                    articles, annotations, judge_endpoint,
                    gateway=gateway, sample_size=10, seed=4,
                )
                second = run_binary_judging(
                    articles, annotations, judge_endpoint,
                    gateway=gateway, sample_size=10, seed=4,
                )
        assert len(first) == 10
        assert [v.article_id for v in first] == [v.article_id for v in second]


def test_build_agreement_report_rows():
    verdicts = (
        [verdict(True, judge="judge-1")] * 3
        + [verdict(False, judge="judge-1")] * 1
        + [verdict(True, judge="judge-2")] * 2
        + [verdict(False, judge="judge-2")] * 2
    )
    annotations = [make_annotation("a1", "model-a", C)]
    gold = {"a1": GoldLabel("a1", C)}
    report = build_agreement_report(verdicts, annotations, gold)
    assert len(report.rows) == 1
    row = report.rows[0]
    assert row.per_judge == {"judge-1": 0.75, "judge-2": 0.5}
    assert row.ground_truth == 1.0
    assert report.judges() == ["judge-1", "judge-2"]


def test_verdict_invariants_enforced():
    with pytest.raises(ValueError):
        JudgeVerdict(
            article_id="a", annotator_endpoint="m", judge_endpoint="j",
            mode=JudgeMode.BINARY_AGREEMENT, agrees=None,
        )
    with pytest.raises(ValueError):
        JudgeVerdict(
            article_id="a", annotator_endpoint="m", judge_endpoint="j",
            mode=JudgeMode.COMPARATIVE, agrees=True, preferred_model="x",
        )
