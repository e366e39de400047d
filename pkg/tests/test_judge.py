import json

import pytest

from pisearch.errors import JudgeError
from pisearch.judge import (
    JudgeOutcome,
    MockJudgeClient,
    build_judge_prompt,
    judge,
    parse_judge_output,
)


VALID = {
    "extracted_final_answer": "Crawley",
    "correct_answer": "Crawley",
    "reasoning": "exact match",
    "correct": True,
    "confidence": 98,
}


# -- prompt assembly -------------------------------------------------------------


def test_prompt_substitutions():
    prompt = build_judge_prompt("Q text?", "R text", "A text")
    assert "Question: Q text?" in prompt
    assert "Response:\nR text" in prompt
    assert "Correct answer: A text" in prompt
    assert "{question}" not in prompt and "{response}" not in prompt


def test_prompt_substitution_single_pass():
    # A response containing a placeholder token must not be re-expanded.
    prompt = build_judge_prompt("q", "sneaky {correct_answer} inside", "real")
    assert "sneaky {correct_answer} inside" in prompt
    assert prompt.rstrip().endswith("Correct answer: real")


# -- schema validation -------------------------------------------------------------


def test_valid_verdict_accepted():
    verdict = parse_judge_output(json.dumps(VALID), "Crawley")
    assert verdict.correct is True
    assert verdict.confidence == 98.0


def test_null_extracted_answer_allowed():
    payload = dict(VALID, extracted_final_answer=None, correct=False)
    verdict = parse_judge_output(json.dumps(payload), "Crawley")
    assert verdict.extracted_final_answer is None
    assert verdict.correct is False


def test_fenced_output_rejected():
    fenced = "```json\n" + json.dumps(VALID) + "\n```"
    with pytest.raises(JudgeError):
        parse_judge_output(fenced, "Crawley")


def test_extra_fields_rejected():
    payload = dict(VALID, notes="extra")
    with pytest.raises(JudgeError, match="extra"):
        parse_judge_output(json.dumps(payload), "Crawley")


def test_missing_fields_rejected():
    payload = {k: v for k, v in VALID.items() if k != "reasoning"}
    with pytest.raises(JudgeError, match="missing"):
        parse_judge_output(json.dumps(payload), "Crawley")


def test_surrounding_prose_rejected():
    with pytest.raises(JudgeError):
        parse_judge_output("Here you go: " + json.dumps(VALID), "Crawley")


def test_wrong_types_rejected():
    with pytest.raises(JudgeError):
        parse_judge_output(json.dumps(dict(VALID, correct="yes")), "Crawley")
    with pytest.raises(JudgeError):
        parse_judge_output(json.dumps(dict(VALID, confidence="high")), "Crawley")
    with pytest.raises(JudgeError):
        parse_judge_output(json.dumps(dict(VALID, confidence=150)), "Crawley")


def test_correct_answer_must_echo_ground_truth():
    with pytest.raises(JudgeError, match="echo"):
        parse_judge_output(json.dumps(VALID), "Paris")


# -- judge loop -----------------------------------------------------------------------


class CannedClient:
    def __init__(self, outputs):
        self.outputs = list(outputs)
        self.calls = 0

    def complete(self, prompt, timeout=None):
        self.calls += 1
        out = self.outputs.pop(0)
        if isinstance(out, Exception):
            raise out
        return out


def test_mock_judge_exact_match():
    client = MockJudgeClient()
    outcome = judge(
        "what town?",
        "Explanation: found it\nExact Answer: Crawley\nConfidence: 90%",
        "Crawley",
        client,
        query_id="q1",
    )
    assert outcome.ok and outcome.verdict.correct is True
    assert outcome.verdict.extracted_final_answer == "Crawley"


def test_mock_judge_mismatch():
    outcome = judge(
        "what town?",
        "Explanation: hmm\nExact Answer: Paris\nConfidence: 90%",
        "Crawley",
        MockJudgeClient(),
    )
    assert outcome.ok and outcome.verdict.correct is False


def test_mock_judge_no_final_answer_sets_null():
    outcome = judge("q", "no labels here at all", "Crawley", MockJudgeClient())
    assert outcome.ok
    assert outcome.verdict.extracted_final_answer is None
    assert outcome.verdict.correct is False


def test_fenced_then_valid_retries_once():
    fenced = "```json\n" + json.dumps(VALID) + "\n```"
    client = CannedClient([fenced, json.dumps(VALID)])
    outcome = judge("q", "r", "Crawley", client, query_id="q9")
    assert client.calls == 2
    assert outcome.ok and outcome.verdict.correct is True


def test_invalid_twice_is_judge_failure():
    client = CannedClient(["nonsense", "more nonsense"])
    log_lines = []
    outcome = judge("q", "r", "Crawley", client, log=log_lines.append)
    assert not outcome.ok
    assert outcome.failure
    assert client.calls == 2
    assert len(log_lines) == 2


def test_timeout_is_judge_failure():
    client = CannedClient([TimeoutError("180s"), TimeoutError("180s")])
    outcome = judge("q", "r", "Crawley", client)
    assert not outcome.ok
    assert "180s" in outcome.failure


def test_outcome_roundtrip():
    client = MockJudgeClient()
    outcome = judge(
        "q", "Explanation: e\nExact Answer: A\nConfidence: 5", "A", client, query_id="q1"
    )
    again = JudgeOutcome.from_dict(outcome.to_dict())
    assert again == outcome
