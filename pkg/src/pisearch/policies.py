"""Agent policies: a deterministic scripted policy and an LLM-backed one.

Scripted policies replay a declared sequence of tool calls and answers; they
exist so steering, logging, and evaluation can be exercised without a model.
Directives:

- ``loop=True``: when the script is exhausted, keep replaying its tool steps.
- ``on_steer="answer"``: as soon as the steer message (or a blocked-tool
  rejection) is visible, emit ``steer_answer`` instead of the next step.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .agent import FinalAnswer, PolicyContext, PolicyStep, SteerEvent, ToolCall, build_agent_prompt
from .clock import SimulatedClock
from .errors import ScriptError

DEFAULT_STEER_ANSWER = (
    "Explanation: Answering from the evidence collected before the steer.\n"
    "Exact Answer: unknown\n"
    "Confidence: 10%"
)


@dataclass(frozen=True)
class ScriptStep:
    """One scripted move: either a tool call or a final answer."""

    tool: str | None = None
    arguments: dict = field(default_factory=dict)
    answer: str | None = None
    reason: str = ""

    @property
    def is_answer(self) -> bool:
        return self.answer is not None


def tool_step(tool: str, reason: str = "", **arguments) -> ScriptStep:
    return ScriptStep(tool=tool, arguments=arguments, reason=reason)


def answer_step(text: str, reason: str = "") -> ScriptStep:
    return ScriptStep(answer=text, reason=reason)


class ScriptedPolicy:
    """Replays a declared action sequence, optionally reacting to the steer.

    ``step_seconds`` models thinking time: each step advances a simulated
    clock by that amount before the action is emitted.
    """

    def __init__(
        self,
        steps,
        loop: bool = False,
        on_steer: str = "ignore",
        steer_answer: str = DEFAULT_STEER_ANSWER,
        step_seconds: float = 0.0,
        clock: SimulatedClock | None = None,
    ):
        if on_steer not in ("ignore", "answer"):
            raise ValueError(f"on_steer must be 'ignore' or 'answer', got {on_steer!r}")
        self.steps = list(steps)
        if not self.steps:
            raise ScriptError("script must declare at least one step")
        self.loop = loop
        self.on_steer = on_steer
        self.steer_answer = steer_answer
        self.step_seconds = step_seconds
        self.clock = clock
        self._cursor = 0
        self.usage_log: list = []

    def _advance_clock(self) -> None:
        if self.clock is not None and self.step_seconds > 0:
            self.clock.advance(self.step_seconds)

    def _steer_visible(self, ctx: PolicyContext) -> bool:
        if ctx.steered:
            return True
        return any(isinstance(ev, SteerEvent) for ev in ctx.events)

    def step(self, ctx: PolicyContext) -> PolicyStep:
        self._advance_clock()
        if self.on_steer == "answer" and self._steer_visible(ctx):
            return PolicyStep(
                reasoning="Steer received; submitting the forced answer.",
                action=FinalAnswer(text=self.steer_answer),
            )
        if self._cursor >= len(self.steps):
            if not self.loop:
                raise ScriptError("script exhausted without an answer step")
            tool_steps = [s for s in self.steps if not s.is_answer]
            if not tool_steps:
                raise ScriptError("looping script has no tool steps to replay")
            step = tool_steps[(self._cursor - len(self.steps)) % len(tool_steps)]
        else:
            step = self.steps[self._cursor]
        self._cursor += 1
        reason = step.reason or f"scripted step {self._cursor}"
        if step.is_answer:
            return PolicyStep(reasoning=reason, action=FinalAnswer(text=step.answer))
        arguments = dict(step.arguments)
        arguments.setdefault("reason", reason)
        return PolicyStep(reasoning=reason, action=ToolCall(tool=step.tool, arguments=arguments))


def _parse_steps(raw_steps) -> list[ScriptStep]:
    steps = []
    for raw in raw_steps:
        if "answer" in raw:
            steps.append(ScriptStep(answer=raw["answer"], reason=raw.get("reason", "")))
        elif "tool" in raw:
            steps.append(
                ScriptStep(
                    tool=raw["tool"],
                    arguments=dict(raw.get("args", {})),
                    reason=raw.get("reason", ""),
                )
            )
        else:
            raise ScriptError(f"script step needs 'tool' or 'answer': {raw}")
    return steps


class ScriptBook:
    """Per-query scripts loaded from a JSON file.

    Layout::

        {"queries": {"<query_id>": {"steps": [{"tool": "search", "args": {...}},
                                               {"answer": "..."}],
                                     "loop": false,
                                     "on_steer": "ignore",
                                     "steer_answer": "...",
                                     "step_seconds": 1.0}}}
    """

    def __init__(self, specs: dict):
        self._specs = specs

    @classmethod
    def from_file(cls, path: str | Path) -> "ScriptBook":
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
        queries = payload.get("queries")
        if not isinstance(queries, dict):
            raise ScriptError("script file needs a top-level 'queries' object")
        return cls(queries)

    def query_ids(self) -> list[str]:
        return list(self._specs.keys())

    def policy_for(self, query_id: str, clock: SimulatedClock | None = None) -> ScriptedPolicy:
        spec = self._specs.get(query_id)
        if spec is None:
            raise ScriptError(f"no script for query_id {query_id!r}")
        return ScriptedPolicy(
            steps=_parse_steps(spec.get("steps", [])),
            loop=bool(spec.get("loop", False)),
            on_steer=spec.get("on_steer", "ignore"),
            steer_answer=spec.get("steer_answer", DEFAULT_STEER_ANSWER),
            step_seconds=float(spec.get("step_seconds", 0.0)),
            clock=clock,
        )


# -- LLM policy ---------------------------------------------------------------

TOOL_SCHEMAS = [
    {
        "type": "function",
        "function": {
            "name": "search",
            "description": (
                "Send a raw lexical query to the retrieval backend. The full "
                "ranking is cached under a session-local search_id; only the "
                "top 5 excerpts are shown."
            ),
            "parameters": {
                "type": "object",
                "properties": {
                    "reason": {
                        "type": "string",
                        "description": "Brief rationale, supplied first, at most 100 words.",
                    },
                    "query": {
                        "type": "string",
                        "description": "Raw query string; plain terms, no operator syntax.",
                    },
                },
                "required": ["reason", "query"],
            },
        },
    },
    {
        "type": "function",
        "function": {
            "name": "read_search_results",
            "description": (
                "Browse an existing cached ranking by search_id using rank "
                "pagination, without issuing a new backend query."
            ),
            "parameters": {
                "type": "object",
                "properties": {
                    "reason": {
                        "type": "string",
                        "description": "Brief rationale, supplied first, at most 100 words.",
                    },
                    "search_id": {
                        "type": "string",
                        "description": "Identifier returned by search.",
                    },
                    "offset": {
                        "type": "integer",
                        "description": "1-indexed rank offset; default 6.",
                    },
                    "limit": {
                        "type": "integer",
                        "description": "Number of ranked hits to show; default 10.",
                    },
                },
                "required": ["reason", "search_id"],
            },
        },
    },
    {
        "type": "function",
        "function": {
            "name": "read_document",
            "description": "Read one backend document by docid in line-based chunks.",
            "parameters": {
                "type": "object",
                "properties": {
                    "reason": {
                        "type": "string",
                        "description": "Brief rationale, supplied first, at most 100 words.",
                    },
                    "docid": {
                        "type": "string",
                        "description": "Document identifier from search or read_search_results.",
                    },
                    "offset": {
                        "type": "integer",
                        "description": "1-indexed line offset; default 1.",
                    },
                    "limit": {
                        "type": "integer",
                        "description": "Maximum number of lines; default 200.",
                    },
                },
                "required": ["reason", "docid"],
            },
        },
    },
]

_SCHEMA_BY_TOOL = {s["function"]["name"]: s["function"]["parameters"] for s in TOOL_SCHEMAS}


def validate_tool_arguments(tool: str, arguments: dict) -> str | None:
    """Return a problem description if the arguments do not fit the schema."""
    schema = _SCHEMA_BY_TOOL.get(tool)
    if schema is None:
        return f"unknown tool {tool!r}"
    if not isinstance(arguments, dict):
        return "arguments must be an object"
    props = schema["properties"]
    for key in schema["required"]:
        if key not in arguments:
            return f"missing required argument {key!r}"
    for key, value in arguments.items():
        if key not in props:
            return f"unexpected argument {key!r}"
        expected = props[key]["type"]
        if expected == "string" and not isinstance(value, str):
            return f"argument {key!r} must be a string"
        if expected == "integer" and not isinstance(value, int):
            return f"argument {key!r} must be an integer"
    return None


class LlmPolicy:
    """Chat-completions policy: one tool call or a final text answer per step.

    Schema-invalid tool arguments are bounced back to the model once; if the
    retry is still invalid the call is emitted anyway and fails at the
    controller, which records it as a failed action.
    """

    def __init__(self, client, prompt_template: str | None = None):
        self.client = client
        self._prompt_template = prompt_template
        self.usage_log: list = []
        self.calls = 0

    @property
    def usage_complete(self) -> bool:
        """False when any provider response lacked usage fields."""
        return len(self.usage_log) == self.calls

    def _system_prompt(self, question: str) -> str:
        if self._prompt_template is not None:
            return self._prompt_template.replace("{Question}", question)
        return build_agent_prompt(question)

    def _messages(self, ctx: PolicyContext) -> list[dict]:
        from .agent import ActionEvent, ObservationEvent, ReasoningEvent, SteerEvent

        messages = [{"role": "system", "content": self._system_prompt(ctx.question)}]
        call_counter = 0
        pending_call_id = None
        for ev in ctx.events:
            if isinstance(ev, ReasoningEvent):
                continue
            if isinstance(ev, ActionEvent) and ev.is_tool_call:
                call_counter += 1
                pending_call_id = f"call_{call_counter}"
                messages.append(
                    {
                        "role": "assistant",
                        "content": None,
                        "tool_calls": [
                            {
                                "id": pending_call_id,
                                "type": "function",
                                "function": {
                                    "name": ev.tool_call.tool,
                                    "arguments": json.dumps(ev.tool_call.arguments),
                                },
                            }
                        ],
                    }
                )
            elif isinstance(ev, ObservationEvent):
                content = (
                    ev.result.formatted_text
                    if ev.ok
                    else f"error ({ev.error.error_type}): {ev.error.message}"
                )
                messages.append(
                    {"role": "tool", "tool_call_id": pending_call_id or "call_0", "content": content}
                )
            elif isinstance(ev, SteerEvent):
                messages.append({"role": "user", "content": ev.text})
        return messages

    def _ask(self, messages: list[dict]):
        response = self.client.chat(messages, tools=TOOL_SCHEMAS)
        self.calls += 1
        if response.usage is not None:
            self.usage_log.append(response.usage)
        return response

    def step(self, ctx: PolicyContext) -> PolicyStep:
        messages = self._messages(ctx)
        response = self._ask(messages)
        if response.tool_calls:
            call = response.tool_calls[0]
            problem = validate_tool_arguments(call["name"], call["arguments"])
            if problem is not None:
                # One bounce: tell the model what was wrong and re-ask. A
                # still-invalid retry is emitted anyway and fails downstream.
                retry = self._ask(
                    messages
                    + [
                        {
                            "role": "user",
                            "content": f"Tool call rejected ({problem}). Fix the arguments and retry.",
                        }
                    ]
                )
                if retry.tool_calls:
                    call = retry.tool_calls[0]
                    response = retry
                elif retry.text:
                    return PolicyStep(reasoning=retry.text, action=FinalAnswer(text=retry.text))
            return PolicyStep(
                reasoning=response.text or "",
                action=ToolCall(tool=call["name"], arguments=call["arguments"]),
            )
        return PolicyStep(
            reasoning=response.text or "", action=FinalAnswer(text=response.text or "")
        )
