"""Gold-answer LLM judge: prompt assembly, strict JSON parsing, verdicts.

The judge must return exactly one JSON object (no fences, no extra text)
with exactly the five schema fields; anything else gets one retry and then
counts as a judge failure. Failures score as incorrect for accuracy and are
excluded from calibration.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from importlib import resources

from .errors import JudgeError

JUDGE_TIMEOUT_SECONDS = 180.0

_SCHEMA_FIELDS = ("extracted_final_answer", "correct_answer", "reasoning", "correct", "confidence")

_PLACEHOLDER_RE = re.compile(r"\{(question|response|correct_answer)\}")


def judge_prompt_template() -> str:
    return resources.files("pisearch").joinpath("templates", "judge_prompt.txt").read_text(
        encoding="utf-8"
    )


def build_judge_prompt(question: str, response_text: str, correct_answer: str) -> str:
    """Single-pass substitution so substituted text is never re-expanded."""
    values = {"question": question, "response": response_text, "correct_answer": correct_answer}
    return _PLACEHOLDER_RE.sub(lambda m: values[m.group(1)], judge_prompt_template())


@dataclass(frozen=True)
class JudgeVerdict:
    extracted_final_answer: str | None
    correct_answer: str
    reasoning: str
    correct: bool
    confidence: float

    def to_dict(self) -> dict:
        return {
            "extracted_final_answer": self.extracted_final_answer,
            "correct_answer": self.correct_answer,
            "reasoning": self.reasoning,
            "correct": self.correct,
            "confidence": self.confidence,
        }


@dataclass(frozen=True)
class JudgeOutcome:
    """Verdict or recorded failure for one query."""

    query_id: str
    verdict: JudgeVerdict | None
    failure: str | None
    raw_output: str

    @property
    def ok(self) -> bool:
        return self.verdict is not None

    def to_dict(self) -> dict:
        return {
            "query_id": self.query_id,
            "verdict": self.verdict.to_dict() if self.verdict else None,
            "failure": self.failure,
            "raw_output": self.raw_output,
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "JudgeOutcome":
        raw = payload.get("verdict")
        verdict = None
        if raw is not None:
            verdict = JudgeVerdict(
                extracted_final_answer=raw["extracted_final_answer"],
                correct_answer=raw["correct_answer"],
                reasoning=raw["reasoning"],
                correct=raw["correct"],
                confidence=raw["confidence"],
            )
        return cls(
            query_id=payload["query_id"],
            verdict=verdict,
            failure=payload.get("failure"),
            raw_output=payload.get("raw_output", ""),
        )


def parse_judge_output(text: str, correct_answer: str) -> JudgeVerdict:
    """Validate one judge reply: exactly one JSON object, exact field set.

    Fenced output, leading/trailing prose, extra or missing fields, wrong
    types, a confidence outside [0, 100], or a correct_answer that does not
    echo the provided ground truth all raise JudgeError.
    """
    stripped = text.strip()
    try:
        payload = json.loads(stripped)
    except json.JSONDecodeError as exc:
        raise JudgeError(f"judge output is not a bare JSON object: {exc.msg}") from exc
    if not isinstance(payload, dict):
        raise JudgeError("judge output is not a JSON object")
    extra = set(payload) - set(_SCHEMA_FIELDS)
    if extra:
        raise JudgeError(f"judge output has extra fields: {sorted(extra)}")
    missing = set(_SCHEMA_FIELDS) - set(payload)
    if missing:
        raise JudgeError(f"judge output is missing fields: {sorted(missing)}")
    extracted = payload["extracted_final_answer"]
    if extracted is not None and not isinstance(extracted, str):
        raise JudgeError("extracted_final_answer must be a string or null")
    if not isinstance(payload["correct_answer"], str):
        raise JudgeError("correct_answer must be a string")
    if payload["correct_answer"] != correct_answer:
        raise JudgeError("correct_answer does not echo the provided ground truth")
    if not isinstance(payload["reasoning"], str):
        raise JudgeError("reasoning must be a string")
    if not isinstance(payload["correct"], bool):
        raise JudgeError("correct must be a boolean")
    confidence = payload["confidence"]
    if isinstance(confidence, bool) or not isinstance(confidence, (int, float)):
        raise JudgeError("confidence must be a number")
    if not 0 <= confidence <= 100:
        raise JudgeError(f"confidence {confidence} outside [0, 100]")
    return JudgeVerdict(
        extracted_final_answer=extracted,
        correct_answer=payload["correct_answer"],
        reasoning=payload["reasoning"],
        correct=payload["correct"],
        confidence=float(confidence),
    )


def judge(
    question: str,
    response_text: str,
    correct_answer: str,
    judge_client,
    query_id: str = "",
    timeout: float = JUDGE_TIMEOUT_SECONDS,
    log=None,
) -> JudgeOutcome:
    """Run the judge once, with one retry on invalid output.

    ``judge_client`` needs ``complete(prompt, timeout) -> str``. Transport
    failures and timeouts are judge failures, not exceptions.
    """
    prompt = build_judge_prompt(question, response_text, correct_answer)
    raw = ""
    failure = None
    for attempt in (1, 2):
        try:
            raw = judge_client.complete(prompt, timeout=timeout)
        except Exception as exc:  # timeout / transport / provider errors
            failure = f"judge call failed: {exc}"
            if log is not None:
                log(f"attempt {attempt}: {failure}")
            continue
        try:
            verdict = parse_judge_output(raw, correct_answer)
            return JudgeOutcome(query_id=query_id, verdict=verdict, failure=None, raw_output=raw)
        except JudgeError as exc:
            failure = str(exc)
            if log is not None:
                log(f"attempt {attempt}: invalid judge output: {failure}")
    return JudgeOutcome(query_id=query_id, verdict=None, failure=failure, raw_output=raw)


class MockJudgeClient:
    """Offline judge for tests: string equality on the extracted exact answer.

    Parses the question/response/correct-answer blocks back out of the judge
    prompt, pulls the "Exact Answer:" line from the response, and verdicts by
    case-insensitive equality.
    """

    def __init__(self):
        self.calls = 0

    @staticmethod
    def _extract(prompt: str) -> tuple[str, str]:
        head, _, correct = prompt.rpartition("\n\nCorrect answer: ")
        _, _, response = head.partition("\n\nResponse:\n")
        return response.strip(), correct.strip()

    def complete(self, prompt: str, timeout: float = JUDGE_TIMEOUT_SECONDS) -> str:
        self.calls += 1
        response, correct = self._extract(prompt)
        extracted = None
        for line in response.split("\n"):
            if line.startswith("Exact Answer:"):
                extracted = line[len("Exact Answer:") :].strip()
                break
        is_correct = extracted is not None and extracted.lower() == correct.lower()
        verdict = {
            "extracted_final_answer": extracted,
            "correct_answer": correct,
            "reasoning": "string comparison of the extracted exact answer",
            "correct": is_correct,
            "confidence": 100,
        }
        return json.dumps(verdict)


class LlmJudgeClient:
    """Judge backed by a chat-completions client (no tools, single user turn)."""

    def __init__(self, llm_client):
        self._client = llm_client

    def complete(self, prompt: str, timeout: float = JUDGE_TIMEOUT_SECONDS) -> str:
        response = self._client.chat(
            [{"role": "user", "content": prompt}], tools=None, timeout=timeout
        )
        return response.text or ""
