"""The five specialist agents: prompt rendering, invocation, parsing.

Each agent renders its role templates, calls its backend at most twice
(one re-prompt with a format reminder), and parses the reply into a
typed report. Parsers are total: they return a valid report or raise
AgentOutputError carrying the verbatim raw text, never a silent default.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path
from typing import Callable, Sequence

from .backends import ChatRequest, complete_chat
from .errors import AgentOutputError, RefPanelError, TemplateError
from .kb import CaseEntry, RuleSegment

AGENT_RULE = "rule"
AGENT_CASE = "case"
AGENT_CONTEXT = "context"
AGENT_VIDEO = "video"
AGENT_CHIEF = "chief"

STRICTNESS_LEVELS = ("Lenient", "Normal", "Strict")

# Rendered into a chief slot whose subordinate report is ablated or failed.
SLOT_UNAVAILABLE = "Not available."

_PLACEHOLDER_RE = re.compile(r"\{([a-z][a-z0-9_]*)\}")
_PROMPT_DIR = Path(__file__).parent / "prompts"

_REPROMPT_REMINDER = (
    "\n\nREMINDER: Your previous reply could not be parsed. "
    "Answer again, following the Expected Output format exactly."
)

_CONFIDENCE_WORDS = {"low": 0.25, "medium": 0.5, "high": 0.75}


# ---------------------------------------------------------------------------
# Reports
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RuleSummary:
    direct_quote: str
    key_terminology_match: str
    confidence: float
    raw: str


@dataclass(frozen=True)
class CaseSummary:
    summary: str
    cited_case_ids: tuple[int, ...]
    raw: str


@dataclass(frozen=True)
class ContextAnalysis:
    strictness: str
    analysis: str
    raw: str


@dataclass(frozen=True)
class VideoAnalysis:
    description: str
    recommended_option: str
    raw: str


@dataclass(frozen=True)
class Verdict:
    decision: str
    explanation: str
    raw: str


@dataclass
class AgentAttempt:
    """One backend call made by an agent, for trace assembly."""

    agent_name: str
    attempt: int
    system_prompt: str
    user_prompt: str
    raw_response: str | None
    error: str | None
    wall_time: float


AttemptSink = Callable[[AgentAttempt], None]


# ---------------------------------------------------------------------------
# Template rendering
# ---------------------------------------------------------------------------


@lru_cache(maxsize=None)
def _load_template(name: str) -> str:
    path = _PROMPT_DIR / f"{name}.txt"
    if not path.exists():
        raise TemplateError(f"no prompt template {name!r}")
    return path.read_text(encoding="utf-8")


def _render(text: str, substitutions: dict[str, str]) -> str:
    placeholders = set(_PLACEHOLDER_RE.findall(text))
    missing = sorted(placeholders - substitutions.keys())
    if missing:
        raise TemplateError(
            f"missing placeholder values: {', '.join(missing)}", missing=missing
        )

    def substitute(match: re.Match) -> str:
        name = match.group(1)
        return substitutions[name] if name in placeholders else match.group(0)

    return _PLACEHOLDER_RE.sub(substitute, text)


def render_prompt(template_id: str, substitutions: dict[str, str]) -> tuple[str, str]:
    """Render the system and user templates for one agent role.

    Substitution values are inserted verbatim; only `{known_identifier}`
    tokens are placeholders, so literal braces in templates survive.
    """
    system = _render(_load_template(f"{template_id}_system"), substitutions)
    user = _render(_load_template(f"{template_id}_user"), substitutions)
    return system, user


# ---------------------------------------------------------------------------
# Reply parsing
# ---------------------------------------------------------------------------


class _ParseFailure(Exception):
    """Internal: reply did not satisfy the agent's output contract."""


def extract_json_object(text: str) -> dict:
    """Pull the first balanced JSON object out of a possibly noisy reply.

    Models wrap JSON in code fences or prose; scan for a balanced
    top-level object and parse the first span that loads cleanly.
    """
    start = text.find("{")
    while start != -1:
        depth = 0
        in_string = False
        escaped = False
        for i in range(start, len(text)):
            ch = text[i]
            if in_string:
                if escaped:
                    escaped = False
                elif ch == "\\":
                    escaped = True
                elif ch == '"':
                    in_string = False
                continue
            if ch == '"':
                in_string = True
            elif ch == "{":
                depth += 1
            elif ch == "}":
                depth -= 1
                if depth == 0:
                    candidate = text[start : i + 1]
                    try:
                        loaded = json.loads(candidate)
                    except json.JSONDecodeError:
                        break
                    if isinstance(loaded, dict):
                        return loaded
                    break
        start = text.find("{", start + 1)
    raise _ParseFailure("no JSON object found in reply")


def _require_str(payload: dict, key: str) -> str:
    if key not in payload:
        raise _ParseFailure(f"missing field {key!r}")
    value = payload[key]
    if not isinstance(value, str) or not value.strip():
        raise _ParseFailure(f"field {key!r} must be a non-empty string")
    return value


def _normalize_confidence(value) -> float:
    if isinstance(value, bool):
        raise _ParseFailure("confidence must be a number or low/medium/high")
    if isinstance(value, (int, float)):
        num = float(value)
        if not 0.0 <= num <= 1.0:
            raise _ParseFailure(f"confidence {num} outside [0, 1]")
        return num
    if isinstance(value, str) and value.strip().lower() in _CONFIDENCE_WORDS:
        return _CONFIDENCE_WORDS[value.strip().lower()]
    raise _ParseFailure(f"unusable confidence value {value!r}")


def _parse_rule_reply(text: str) -> RuleSummary:
    payload = extract_json_object(text)
    if "confidence" not in payload:
        raise _ParseFailure("missing field 'confidence'")
    return RuleSummary(
        direct_quote=_require_str(payload, "direct_quote"),
        key_terminology_match=_require_str(payload, "key_terminology_match"),
        confidence=_normalize_confidence(payload["confidence"]),
        raw=text,
    )


def _parse_case_reply(text: str, allowed_ids: frozenset[int]) -> CaseSummary:
    payload = extract_json_object(text)
    summary = _require_str(payload, "summary")
    if "cited_case_ids" not in payload:
        raise _ParseFailure("missing field 'cited_case_ids'")
    raw_ids = payload["cited_case_ids"]
    if not isinstance(raw_ids, list):
        raise _ParseFailure("cited_case_ids must be a list")
    cited: list[int] = []
    for item in raw_ids:
        if isinstance(item, bool):
            raise _ParseFailure(f"cited case id {item!r} is not an integer")
        if isinstance(item, int):
            cited.append(item)
        elif isinstance(item, str) and item.strip().isdigit():
            cited.append(int(item.strip()))
        else:
            raise _ParseFailure(f"cited case id {item!r} is not an integer")
    fabricated = [i for i in cited if i not in allowed_ids]
    if fabricated:
        raise _ParseFailure(
            f"cited case ids {fabricated} were not in the retrieved context"
        )
    return CaseSummary(summary=summary, cited_case_ids=tuple(cited), raw=text)


def _parse_context_reply(text: str) -> ContextAnalysis:
    payload = extract_json_object(text)
    strictness_raw = _require_str(payload, "strictness").strip()
    matched = next(
        (s for s in STRICTNESS_LEVELS if s.lower() == strictness_raw.lower()), None
    )
    if matched is None:
        raise _ParseFailure(f"unknown strictness value {strictness_raw!r}")
    return ContextAnalysis(
        strictness=matched,
        analysis=_require_str(payload, "analysis"),
        raw=text,
    )


def _parse_video_reply(text: str, option_labels: Sequence[str]) -> VideoAnalysis:
    payload = extract_json_object(text)
    predicted = _require_str(payload, "predicted_option").strip()
    if predicted not in option_labels:
        raise _ParseFailure(
            f"predicted_option {predicted!r} not among {list(option_labels)}"
        )
    return VideoAnalysis(
        description=_require_str(payload, "choice_explanation"),
        recommended_option=predicted,
        raw=text,
    )


_PREDICTION_RE = re.compile(r"^\s*prediction\s*:\s*(.+?)\s*$", re.IGNORECASE | re.MULTILINE)
_EXPLANATION_RE = re.compile(r"^\s*explanation\s*:\s*", re.IGNORECASE | re.MULTILINE)


def _parse_chief_reply(text: str, option_labels: Sequence[str]) -> Verdict:
    prediction_match = _PREDICTION_RE.search(text)
    if not prediction_match:
        raise _ParseFailure("no 'Prediction:' line in reply")
    decision = prediction_match.group(1).strip().strip("[]").strip()
    if decision not in option_labels:
        raise _ParseFailure(f"prediction {decision!r} not among {list(option_labels)}")
    explanation_match = _EXPLANATION_RE.search(text)
    if not explanation_match:
        raise _ParseFailure("no 'Explanation:' line in reply")
    explanation = text[explanation_match.end() :].strip()
    if not explanation:
        raise _ParseFailure("empty explanation")
    return Verdict(decision=decision, explanation=explanation, raw=text)


# ---------------------------------------------------------------------------
# Invocation with one re-prompt
# ---------------------------------------------------------------------------


def _invoke(
    agent_name: str,
    backend,
    system: str,
    user: str,
    parse: Callable[[str], object],
    tag: str,
    attachments: tuple[bytes, ...] = (),
    on_attempt: AttemptSink | None = None,
):
    last_raw = ""
    last_error = "backend call failed"
    for attempt in (1, 2):
        user_prompt = user if attempt == 1 else user + _REPROMPT_REMINDER
        req = ChatRequest(
            system_prompt=system,
            user_prompt=user_prompt,
            attachments=attachments,
            request_tag=tag,
        )
        try:
            resp = complete_chat(backend, req)
        except RefPanelError as exc:
            # Transport/capability failures are not re-prompted; record the
            # attempt (no reply text) so traces stay complete, then surface.
            if on_attempt:
                on_attempt(
                    AgentAttempt(
                        agent_name=agent_name,
                        attempt=attempt,
                        system_prompt=system,
                        user_prompt=user_prompt,
                        raw_response=None,
                        error=f"{type(exc).__name__}: {exc}",
                        wall_time=0.0,
                    )
                )
            raise
        try:
            report = parse(resp.text)
        except _ParseFailure as failure:
            last_raw = resp.text
            last_error = str(failure)
            if on_attempt:
                on_attempt(
                    AgentAttempt(
                        agent_name=agent_name,
                        attempt=attempt,
                        system_prompt=system,
                        user_prompt=user_prompt,
                        raw_response=resp.text,
                        error=str(failure),
                        wall_time=resp.latency,
                    )
                )
            continue
        if on_attempt:
            on_attempt(
                AgentAttempt(
                    agent_name=agent_name,
                    attempt=attempt,
                    system_prompt=system,
                    user_prompt=user_prompt,
                    raw_response=resp.text,
                    error=None,
                    wall_time=resp.latency,
                )
            )
        return report
    raise AgentOutputError(
        f"{agent_name} agent output unusable after re-prompt: {last_error}",
        raw=last_raw,
    )


# ---------------------------------------------------------------------------
# Report rendering helpers (context blocks and chief slots)
# ---------------------------------------------------------------------------


def format_rule_context(segments: Sequence[RuleSegment]) -> str:
    return "\n\n".join(f"[Page {s.page_number}] {s.text}" for s in segments)


def format_case_context(cases: Sequence[CaseEntry]) -> str:
    return "\n\n".join(
        f"[Case {c.id}] {c.case_description}\n"
        f"Decision: {c.decision}\n"
        f"Controversiality: {c.controversiality}"
        for c in cases
    )


def format_options_block(options: Sequence[tuple[str, str]]) -> str:
    return "\n".join(f"{label}: {text}" for label, text in options)


def format_options_inline(options: Sequence[tuple[str, str]]) -> str:
    return " | ".join(f"{label}: {text}" for label, text in options)


def rule_slot(report: RuleSummary | None) -> str:
    if report is None:
        return SLOT_UNAVAILABLE
    return (
        f"Text of Law: {report.direct_quote}\n"
        f"Match Logic: {report.key_terminology_match}\n"
        f"Confidence: {report.confidence}"
    )


def case_slot(report: CaseSummary | None) -> str:
    if report is None:
        return SLOT_UNAVAILABLE
    if report.cited_case_ids:
        ids = ", ".join(str(i) for i in report.cited_case_ids)
        return f"Valid Precedent (cases {ids}): {report.summary}"
    return f"No Precedent: {report.summary}"


def context_slot(report: ContextAnalysis | None) -> str:
    if report is None:
        return SLOT_UNAVAILABLE
    return f"Strictness: {report.strictness}. {report.analysis}"


# ---------------------------------------------------------------------------
# Agent operations
# ---------------------------------------------------------------------------


def run_rule_agent(
    query_text: str,
    retrieved_rules: Sequence[RuleSegment],
    backend,
    tag: str = AGENT_RULE,
    on_attempt: AttemptSink | None = None,
) -> RuleSummary:
    if not retrieved_rules:
        raise ValueError("rule agent needs at least one retrieved segment")
    system, user = render_prompt(
        AGENT_RULE,
        {"retrieved_rules": format_rule_context(retrieved_rules), "query_text": query_text},
    )
    return _invoke(AGENT_RULE, backend, system, user, _parse_rule_reply, tag, on_attempt=on_attempt)


def run_case_agent(
    query_text: str,
    retrieved_cases: Sequence[CaseEntry],
    backend,
    tag: str = AGENT_CASE,
    on_attempt: AttemptSink | None = None,
) -> CaseSummary:
    if not retrieved_cases:
        raise ValueError("case agent needs at least one retrieved case")
    allowed = frozenset(c.id for c in retrieved_cases)
    system, user = render_prompt(
        AGENT_CASE,
        {"retrieved_cases": format_case_context(retrieved_cases), "query_text": query_text},
    )
    return _invoke(
        AGENT_CASE,
        backend,
        system,
        user,
        lambda text: _parse_case_reply(text, allowed),
        tag,
        on_attempt=on_attempt,
    )


def run_context_agent(
    context_str: str,
    backend,
    tag: str = AGENT_CONTEXT,
    on_attempt: AttemptSink | None = None,
) -> ContextAnalysis:
    if not context_str:
        raise ValueError("context agent needs a non-empty context string")
    system, user = render_prompt(AGENT_CONTEXT, {"context_str": context_str})
    return _invoke(
        AGENT_CONTEXT, backend, system, user, _parse_context_reply, tag, on_attempt=on_attempt
    )


def run_video_agent(
    frames: Sequence[bytes],
    question_text: str,
    options: Sequence[tuple[str, str]],
    backend,
    tag: str = AGENT_VIDEO,
    on_attempt: AttemptSink | None = None,
) -> VideoAnalysis:
    if not frames:
        raise ValueError("video agent needs at least one frame")
    labels = [label for label, _ in options]
    system, user = render_prompt(
        AGENT_VIDEO,
        {"question_text": question_text, "options_str": format_options_block(options)},
    )
    return _invoke(
        AGENT_VIDEO,
        backend,
        system,
        user,
        lambda text: _parse_video_reply(text, labels),
        tag,
        attachments=tuple(frames),
        on_attempt=on_attempt,
    )


def run_chief_agent(
    question_text: str,
    options: Sequence[tuple[str, str]],
    rule: RuleSummary | None,
    case: CaseSummary | None,
    context: ContextAnalysis | None,
    video: VideoAnalysis | None,
    backend,
    tag: str = AGENT_CHIEF,
    on_attempt: AttemptSink | None = None,
) -> Verdict:
    labels = [label for label, _ in options]
    system, user = render_prompt(
        AGENT_CHIEF,
        {
            "question_text": question_text,
            "options_text": format_options_inline(options),
            "rule_str_placeholder": rule_slot(rule),
            "case_str_placeholder": case_slot(case),
            "context_analysis": context_slot(context),
            "desc": video.description if video else SLOT_UNAVAILABLE,
            "pred": video.recommended_option if video else SLOT_UNAVAILABLE,
        },
    )
    return _invoke(
        AGENT_CHIEF,
        backend,
        system,
        user,
        lambda text: _parse_chief_reply(text, labels),
        tag,
        on_attempt=on_attempt,
    )
