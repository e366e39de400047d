"""Agent runtime: the reason/act/observe loop under time-budget steering.

A run alternates policy steps (reasoning + action) with tool observations
until the policy answers, the iteration cap is hit, or the time budget runs
out. With a budget of T seconds, a submit-now steer fires at
floor(0.7 * T * 1000) milliseconds: a steer message is injected into the
conversation and all three tools are blocked from that point on. A run with
no answer by T is terminated and marked timed out.
"""

from __future__ import annotations

import math
import re
import threading
from dataclasses import dataclass, field
from importlib import resources

from .clock import SystemClock
from .controller import (
    SearchSession,
    ToolResult,
    tool_read_document,
    tool_read_search_results,
    tool_search,
)
from .errors import (
    BackendError,
    LineRangeError,
    RankRangeError,
    ResponseFormatError,
    StaleSearchIdError,
    ToolArgumentError,
    ToolsBlockedError,
    UnknownDocidError,
)

TERMINATION_ANSWERED = "answered"
TERMINATION_STEERED = "steered_then_answered"
TERMINATION_TIMED_OUT = "timed_out"

# A citation is a bracketed run of non-bracket characters, e.g. "[123]".
_CITATION_RE = re.compile(r"\[([^\[\]]+)\]")

_LABELS = ("Explanation:", "Exact Answer:", "Confidence:")


def load_template(name: str) -> str:
    return resources.files("pisearch").joinpath("templates", name).read_text(encoding="utf-8")


def build_agent_prompt(question: str) -> str:
    """System prompt with the question substituted into the template."""
    return load_template("agent_prompt.txt").replace("{Question}", question)


def default_steer_message() -> str:
    return load_template("steer_message.txt")


@dataclass(frozen=True)
class TimeBudget:
    """Wall-clock budget: steer at floor(0.7 * T * 1000) ms, terminate at T."""

    timeout_seconds: float

    def __post_init__(self):
        if not (math.isfinite(self.timeout_seconds) and self.timeout_seconds > 0):
            raise ValueError("timeout must be a positive finite number of seconds")

    @property
    def steer_at_ms(self) -> int:
        return math.floor(0.7 * self.timeout_seconds * 1000)

    @property
    def steer_at_seconds(self) -> float:
        return self.steer_at_ms / 1000.0


# -- trajectory events -------------------------------------------------------


@dataclass(frozen=True)
class ToolCall:
    tool: str
    arguments: dict


@dataclass(frozen=True)
class FinalAnswer:
    text: str


@dataclass(frozen=True)
class ErrorInfo:
    error_type: str
    message: str


@dataclass(frozen=True)
class ReasoningEvent:
    t: float
    text: str


@dataclass(frozen=True)
class ActionEvent:
    t: float
    tool_call: ToolCall | None = None
    final_answer: FinalAnswer | None = None

    @property
    def is_tool_call(self) -> bool:
        return self.tool_call is not None


@dataclass(frozen=True)
class ObservationEvent:
    t: float
    result: ToolResult | None = None
    error: ErrorInfo | None = None

    @property
    def ok(self) -> bool:
        return self.result is not None


@dataclass(frozen=True)
class SteerEvent:
    t: float
    text: str


@dataclass
class Trajectory:
    """Ordered run events plus termination bookkeeping."""

    query_id: str
    question: str
    events: list = field(default_factory=list)
    termination: str | None = None
    steer_time: float | None = None
    answer_error: ErrorInfo | None = None

    def tool_call_counts(self) -> dict[str, int]:
        counts = {"search": 0, "read_search_results": 0, "read_document": 0}
        for ev in self.events:
            if isinstance(ev, ActionEvent) and ev.is_tool_call:
                tool = ev.tool_call.tool
                if tool in counts:
                    counts[tool] += 1
        counts["total"] = sum(counts.values())
        return counts


@dataclass(frozen=True)
class FinalResponse:
    """Parsed Explanation / Exact Answer / Confidence block.

    ``cited_docids`` holds the raw bracketed tokens from the explanation;
    filtering against the corpus happens when tiers are derived.
    """

    explanation: str
    exact_answer: str
    confidence: int
    cited_docids: frozenset[str]
    raw: str


def parse_final_response(text: str) -> FinalResponse:
    """Parse the three labeled fields from a final answer.

    Labels are matched case-sensitively at line starts and must appear in
    order Explanation -> Exact Answer -> Confidence. Confidence is an integer
    percent in [0, 100] with an optional trailing '%'.
    """
    lines = text.split("\n")
    positions: dict[str, int] = {}
    for idx, line in enumerate(lines):
        for label in _LABELS:
            if label not in positions and line.startswith(label):
                positions[label] = idx
    missing = [label for label in _LABELS if label not in positions]
    if missing:
        raise ResponseFormatError(
            f"final response is missing label(s): {', '.join(missing)}", missing=missing
        )
    e_idx, a_idx, c_idx = (positions[label] for label in _LABELS)
    if not (e_idx < a_idx < c_idx):
        raise ResponseFormatError(
            "final response labels out of order (expected Explanation, Exact Answer, Confidence)"
        )
    explanation = "\n".join(
        [lines[e_idx][len("Explanation:") :]] + lines[e_idx + 1 : a_idx]
    ).strip()
    exact_answer = "\n".join(
        [lines[a_idx][len("Exact Answer:") :]] + lines[a_idx + 1 : c_idx]
    ).strip()
    conf_text = "\n".join([lines[c_idx][len("Confidence:") :]] + lines[c_idx + 1 :]).strip()
    if conf_text.endswith("%"):
        conf_text = conf_text[:-1].strip()
    try:
        confidence = int(conf_text)
    except ValueError:
        raise ResponseFormatError(f"confidence is not an integer: {conf_text!r}") from None
    if not 0 <= confidence <= 100:
        raise ResponseFormatError(f"confidence {confidence} outside [0, 100]")
    cited = frozenset(
        token.strip() for token in _CITATION_RE.findall(explanation) if token.strip()
    )
    return FinalResponse(
        explanation=explanation,
        exact_answer=exact_answer,
        confidence=confidence,
        cited_docids=cited,
        raw=text,
    )


# -- policy interface --------------------------------------------------------


@dataclass(frozen=True)
class PolicyContext:
    """Read-only view a policy gets at each step."""

    question: str
    events: tuple
    steered: bool

    @property
    def last_observation(self) -> ObservationEvent | None:
        for ev in reversed(self.events):
            if isinstance(ev, ObservationEvent):
                return ev
        return None


@dataclass(frozen=True)
class PolicyStep:
    reasoning: str
    action: ToolCall | FinalAnswer


_TOOL_FUNCS = {
    "search": lambda session, args: tool_search(session, **args),
    "read_search_results": lambda session, args: tool_read_search_results(session, **args),
    "read_document": lambda session, args: tool_read_document(session, **args),
}

# Tool failures the agent is expected to recover from; anything else aborts the run.
_TOOL_ERRORS = (
    ToolsBlockedError,
    ToolArgumentError,
    StaleSearchIdError,
    RankRangeError,
    UnknownDocidError,
    LineRangeError,
    BackendError,
)


def execute_tool(session: SearchSession, call: ToolCall) -> ToolResult:
    func = _TOOL_FUNCS.get(call.tool)
    if func is None:
        raise ToolArgumentError(f"unknown tool {call.tool!r}")
    try:
        return func(session, dict(call.arguments))
    except TypeError as exc:
        raise ToolArgumentError(f"bad arguments for {call.tool}: {exc}") from exc


def run_query(
    policy,
    session: SearchSession,
    question: str,
    budget: TimeBudget | None = None,
    clock=None,
    query_id: str = "",
    max_iterations: int | None = None,
    steer_text: str | None = None,
) -> tuple[Trajectory, FinalResponse | None]:
    """Drive one query to completion.

    Exactly one of ``budget`` (timeout with steering) and ``max_iterations``
    (turn cap, no steering) should be active. The clock may be simulated; the
    policy is responsible for advancing a simulated clock to model thinking
    time. A malformed final answer is recorded on the trajectory and leaves
    the run unanswered.
    """
    if budget is not None and max_iterations is not None:
        raise ValueError("budget and max_iterations are mutually exclusive")
    clock = clock or SystemClock()
    if steer_text is None:
        steer_text = default_steer_message()
    trajectory = Trajectory(query_id=query_id, question=question)
    start = clock.now()
    steered = False
    final: FinalResponse | None = None
    steps = 0

    def elapsed() -> float:
        return clock.now() - start

    def steer_due(now: float) -> bool:
        return (
            budget is not None
            and not steered
            and now * 1000.0 >= budget.steer_at_ms
        )

    def inject_steer() -> None:
        # The steer is stamped with its scheduled firing time even when the
        # loop discovers it after a long policy step.
        session.block_tools()
        trajectory.steer_time = budget.steer_at_seconds
        trajectory.events.append(SteerEvent(t=budget.steer_at_seconds, text=steer_text))

    # Real-time runs get a timer so in-flight tool calls are blocked the
    # instant the steer fires; simulated runs rely on the loop checks.
    timer = None
    if budget is not None and isinstance(clock, SystemClock):
        timer = threading.Timer(budget.steer_at_seconds, session.block_tools)
        timer.daemon = True
        timer.start()

    try:
        while True:
            if max_iterations is not None and steps >= max_iterations:
                trajectory.termination = TERMINATION_TIMED_OUT
                break
            now = elapsed()
            if budget is not None and now >= budget.timeout_seconds:
                trajectory.termination = TERMINATION_TIMED_OUT
                break
            if steer_due(now):
                steered = True
                inject_steer()

            step = policy.step(
                PolicyContext(question=question, events=tuple(trajectory.events), steered=steered)
            )
            steps += 1
            now = elapsed()
            if budget is not None and now >= budget.timeout_seconds:
                # The step finished past the deadline; the run is already over.
                trajectory.termination = TERMINATION_TIMED_OUT
                break
            if steer_due(now):
                # Fired while the policy was thinking: block before executing.
                steered = True
                inject_steer()

            trajectory.events.append(ReasoningEvent(t=now, text=step.reasoning))
            if isinstance(step.action, FinalAnswer):
                trajectory.events.append(ActionEvent(t=now, final_answer=step.action))
                try:
                    final = parse_final_response(step.action.text)
                except ResponseFormatError as exc:
                    trajectory.answer_error = ErrorInfo(
                        error_type=type(exc).__name__, message=str(exc)
                    )
                    final = None
                trajectory.termination = (
                    TERMINATION_STEERED if steered else TERMINATION_ANSWERED
                )
                break

            trajectory.events.append(ActionEvent(t=now, tool_call=step.action))
            try:
                result = execute_tool(session, step.action)
                observation = ObservationEvent(t=elapsed(), result=result)
            except _TOOL_ERRORS as exc:
                observation = ObservationEvent(
                    t=elapsed(),
                    error=ErrorInfo(error_type=type(exc).__name__, message=str(exc)),
                )
            trajectory.events.append(observation)
    finally:
        if timer is not None:
            timer.cancel()

    return trajectory, final
