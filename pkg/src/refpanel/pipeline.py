"""Modality routing and the two reasoning chains.

Text questions drive retrieval with the question stem itself; video
questions first run the video agent and use its textual analysis as the
retrieval query against both knowledge bases, bridging the modality gap.
Every backend call, retrieval, and parsed report for one question is
recorded in an ordered trace.
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from enum import Enum
from pathlib import Path
from typing import Callable, Sequence, Union

from .agents import (
    AGENT_CASE,
    AGENT_CHIEF,
    AGENT_CONTEXT,
    AGENT_RULE,
    AGENT_VIDEO,
    AgentAttempt,
    CaseSummary,
    ContextAnalysis,
    RuleSummary,
    Verdict,
    VideoAnalysis,
    run_case_agent,
    run_chief_agent,
    run_context_agent,
    run_rule_agent,
    run_video_agent,
)
from .errors import RefPanelError
from .frames import FrameSource
from .kb import Embedder, KnowledgeBase, RetrievalHit, entry_key, retrieve_top_k


class Modality(str, Enum):
    TEXT = "text"
    VIDEO = "video"


@dataclass(frozen=True)
class VideoMaterial:
    path: str
    context: str


@dataclass(frozen=True)
class Query:
    """One benchmark question, routed by its materials."""

    question_id: str
    question: str
    materials: VideoMaterial | None
    options: tuple[tuple[str, str], ...]
    ground_truth_close: str
    ground_truth_open: str = ""

    def __post_init__(self):
        if not self.question:
            raise ValueError("question must be non-empty")
        labels = [label for label, _ in self.options]
        expected = [f"O{i}" for i in range(1, len(labels) + 1)]
        if labels != expected:
            raise ValueError(f"options must be labeled {expected}, got {labels}")
        if not 2 <= len(labels) <= 4:
            raise ValueError(f"queries carry 2 to 4 options, got {len(labels)}")
        if self.ground_truth_close not in labels:
            raise ValueError(
                f"ground truth {self.ground_truth_close!r} not among {labels}"
            )

    @property
    def option_labels(self) -> list[str]:
        return [label for label, _ in self.options]


@dataclass(frozen=True)
class AblationConfig:
    rule_enabled: bool = True
    case_enabled: bool = True


def route(q: Query) -> Modality:
    """Total router: video iff the query carries video material."""
    return Modality.VIDEO if q.materials is not None else Modality.TEXT


# ---------------------------------------------------------------------------
# Traces
# ---------------------------------------------------------------------------


@dataclass
class TraceStep:
    agent_name: str
    attempt: int
    rendered_prompts: dict[str, str]
    raw_response: str | None
    report: dict | None
    error: dict | None
    retrieval_query: str | None = None
    retrieval_hits: list[dict] | None = None
    wall_time: float = 0.0


@dataclass
class AgentTrace:
    question_id: str
    modality: str
    steps: list[TraceStep] = field(default_factory=list)
    final: dict | None = None
    fallbacks: list[str] = field(default_factory=list)


def trace_to_dict(trace: AgentTrace) -> dict:
    return asdict(trace)


def write_traces_jsonl(traces: Sequence[AgentTrace], path: Union[str, Path]) -> None:
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    with p.open("w", encoding="utf-8") as handle:
        for trace in traces:
            handle.write(json.dumps(trace_to_dict(trace), ensure_ascii=False) + "\n")


def load_traces_jsonl(path: Union[str, Path]) -> list[dict]:
    records = []
    with Path(path).open("r", encoding="utf-8") as handle:
        for line in handle:
            if line.strip():
                records.append(json.loads(line))
    return records


def _hit_to_dict(hit: RetrievalHit) -> dict:
    return {"entry_ref": hit.entry_ref, "score": hit.score, "rank": hit.rank}


def _report_to_dict(report) -> dict:
    payload = asdict(report)
    payload["kind"] = type(report).__name__
    return payload


def _error_to_dict(exc: Exception, raw: str | None = None) -> dict:
    return {
        "type": type(exc).__name__,
        "message": str(exc),
        "raw": getattr(exc, "raw", raw),
    }


# ---------------------------------------------------------------------------
# Retrieval bundle
# ---------------------------------------------------------------------------


@dataclass
class Retriever:
    """Both knowledge bases plus the query embedder and per-mode depth."""

    rules: KnowledgeBase | None
    cases: KnowledgeBase | None
    embedder: Embedder
    k_text: int = 3
    k_video: int = 3

    def _lookup(self, kb: KnowledgeBase, hits: list[RetrievalHit]) -> list:
        by_key = {entry_key(e): e for e in kb.entries}
        return [by_key[h.entry_ref] for h in hits]

    def retrieve_rules(self, query: str, k: int) -> tuple[list[RetrievalHit], list]:
        if self.rules is None:
            raise RefPanelError("no rules index configured")
        hits = retrieve_top_k(query, self.rules, k, self.embedder)
        return hits, self._lookup(self.rules, hits)

    def retrieve_cases(self, query: str, k: int) -> tuple[list[RetrievalHit], list]:
        if self.cases is None:
            raise RefPanelError("no cases index configured")
        hits = retrieve_top_k(query, self.cases, k, self.embedder)
        return hits, self._lookup(self.cases, hits)


# ---------------------------------------------------------------------------
# Agent rosters
# ---------------------------------------------------------------------------


@dataclass
class AgentRoster:
    """Which backend serves each agent role."""

    rule: object
    case: object
    context: object
    video: object
    chief: object


# ---------------------------------------------------------------------------
# Step assembly
# ---------------------------------------------------------------------------


@dataclass
class _StageOutcome:
    report: object | None
    steps: list[TraceStep]


def _attempts_to_steps(
    attempts: list[AgentAttempt],
    report,
    retrieval_query: str | None = None,
    retrieval_hits: list[RetrievalHit] | None = None,
) -> list[TraceStep]:
    steps = []
    for attempt in attempts:
        step = TraceStep(
            agent_name=attempt.agent_name,
            attempt=attempt.attempt,
            rendered_prompts={
                "system": attempt.system_prompt,
                "user": attempt.user_prompt,
            },
            raw_response=attempt.raw_response,
            report=_report_to_dict(report) if report and attempt.error is None else None,
            error=(
                {
                    # parse failures carry the reply; transport failures have none
                    "type": "parse" if attempt.raw_response is not None else "transport",
                    "message": attempt.error,
                    "raw": attempt.raw_response,
                }
                if attempt.error
                else None
            ),
            wall_time=attempt.wall_time,
        )
        if attempt.attempt == 1:
            step.retrieval_query = retrieval_query
            step.retrieval_hits = (
                [_hit_to_dict(h) for h in retrieval_hits]
                if retrieval_hits is not None
                else None
            )
        steps.append(step)
    return steps


def _failed_stage_step(
    agent_name: str,
    exc: Exception,
    retrieval_query: str | None = None,
    retrieval_hits: list[RetrievalHit] | None = None,
) -> TraceStep:
    """Step for a stage that died before or during its backend calls."""
    return TraceStep(
        agent_name=agent_name,
        attempt=1,
        rendered_prompts={},
        raw_response=None,
        report=None,
        error=_error_to_dict(exc),
        retrieval_query=retrieval_query,
        retrieval_hits=[_hit_to_dict(h) for h in retrieval_hits]
        if retrieval_hits is not None
        else None,
    )


def _knowledge_stage(
    agent_name: str,
    retrieve: Callable[[], tuple[list[RetrievalHit], list]],
    run_agent: Callable[..., object],
    query: str,
    question_id: str,
) -> _StageOutcome:
    """Retrieval plus the rule or case agent; failures degrade, not abort."""
    attempts: list[AgentAttempt] = []
    hits: list[RetrievalHit] | None = None
    try:
        hits, entries = retrieve()
        report = run_agent(
            entries, tag=f"{agent_name}:{question_id}", on_attempt=attempts.append
        )
    except RefPanelError as exc:
        steps = _attempts_to_steps(attempts, None, query, hits)
        if not steps:
            steps = [_failed_stage_step(agent_name, exc, query, hits)]
        return _StageOutcome(report=None, steps=steps)
    return _StageOutcome(report=report, steps=_attempts_to_steps(attempts, report, query, hits))


def _plain_stage(
    agent_name: str,
    run_agent: Callable[..., object],
    question_id: str,
) -> _StageOutcome:
    attempts: list[AgentAttempt] = []
    try:
        report = run_agent(tag=f"{agent_name}:{question_id}", on_attempt=attempts.append)
    except RefPanelError as exc:
        steps = _attempts_to_steps(attempts, None)
        if not steps:
            steps = [_failed_stage_step(agent_name, exc)]
        return _StageOutcome(report=None, steps=steps)
    return _StageOutcome(report=report, steps=_attempts_to_steps(attempts, report))


def _run_parallel(tasks: list[Callable[[], _StageOutcome]], parallel: bool) -> list[_StageOutcome]:
    """Run stage tasks, preserving input order in the results."""
    if parallel and len(tasks) > 1:
        with ThreadPoolExecutor(max_workers=len(tasks)) as pool:
            futures = [pool.submit(task) for task in tasks]
            return [f.result() for f in futures]
    return [task() for task in tasks]


# ---------------------------------------------------------------------------
# Pipelines
# ---------------------------------------------------------------------------


def _chief_stage(
    q: Query,
    rule: RuleSummary | None,
    case: CaseSummary | None,
    context: ContextAnalysis | None,
    video: VideoAnalysis | None,
    roster: AgentRoster,
) -> tuple[Verdict | None, list[TraceStep]]:
    attempts: list[AgentAttempt] = []
    try:
        verdict = run_chief_agent(
            q.question,
            q.options,
            rule,
            case,
            context,
            video,
            roster.chief,
            tag=f"{AGENT_CHIEF}:{q.question_id}",
            on_attempt=attempts.append,
        )
    except RefPanelError as exc:
        steps = _attempts_to_steps(attempts, None)
        if not steps:
            steps = [_failed_stage_step(AGENT_CHIEF, exc)]
        return None, steps
    return verdict, _attempts_to_steps(attempts, verdict)


def _knowledge_stages(
    q: Query,
    retrieval_query: str,
    k: int,
    retriever: Retriever,
    roster: AgentRoster,
    ablation: AblationConfig,
    parallel: bool,
) -> tuple[RuleSummary | None, CaseSummary | None, list[TraceStep]]:
    tasks: list[Callable[[], _StageOutcome]] = []
    kinds: list[str] = []
    if ablation.rule_enabled:
        tasks.append(
            lambda: _knowledge_stage(
                AGENT_RULE,
                lambda: retriever.retrieve_rules(retrieval_query, k),
                lambda entries, tag, on_attempt: run_rule_agent(
                    retrieval_query, entries, roster.rule, tag=tag, on_attempt=on_attempt
                ),
                retrieval_query,
                q.question_id,
            )
        )
        kinds.append(AGENT_RULE)
    if ablation.case_enabled:
        tasks.append(
            lambda: _knowledge_stage(
                AGENT_CASE,
                lambda: retriever.retrieve_cases(retrieval_query, k),
                lambda entries, tag, on_attempt: run_case_agent(
                    retrieval_query, entries, roster.case, tag=tag, on_attempt=on_attempt
                ),
                retrieval_query,
                q.question_id,
            )
        )
        kinds.append(AGENT_CASE)

    outcomes = _run_parallel(tasks, parallel)
    rule_report = case_report = None
    steps: list[TraceStep] = []
    for kind, outcome in zip(kinds, outcomes):
        steps.extend(outcome.steps)
        if kind == AGENT_RULE:
            rule_report = outcome.report
        else:
            case_report = outcome.report
    return rule_report, case_report, steps


def run_text_pipeline(
    q: Query,
    retriever: Retriever,
    roster: AgentRoster,
    ablation: AblationConfig = AblationConfig(),
    parallel_agents: bool = True,
) -> tuple[Verdict | None, AgentTrace]:
    """Question stem drives retrieval; rule and case agents feed the chief."""
    if route(q) is not Modality.TEXT:
        raise ValueError("text pipeline invoked on a video query")
    trace = AgentTrace(question_id=q.question_id, modality=Modality.TEXT.value)

    rule_report, case_report, steps = _knowledge_stages(
        q, q.question, retriever.k_text, retriever, roster, ablation, parallel_agents
    )
    trace.steps.extend(steps)

    verdict, chief_steps = _chief_stage(q, rule_report, case_report, None, None, roster)
    trace.steps.extend(chief_steps)
    trace.final = asdict(verdict) if verdict else None
    return verdict, trace


def run_video_pipeline(
    q: Query,
    retriever: Retriever,
    roster: AgentRoster,
    frame_source: FrameSource,
    ablation: AblationConfig = AblationConfig(),
    parallel_agents: bool = True,
) -> tuple[Verdict | None, AgentTrace]:
    """Video analysis text drives retrieval against both knowledge bases.

    If the video agent fails hard there is no cross-modal query, so the
    knowledge stages are skipped and the chief rules on context alone.
    """
    if route(q) is not Modality.VIDEO:
        raise ValueError("video pipeline invoked on a text query")
    assert q.materials is not None
    trace = AgentTrace(question_id=q.question_id, modality=Modality.VIDEO.value)

    frames = frame_source.frames(q.materials.path)

    video_task = lambda: _plain_stage(
        AGENT_VIDEO,
        lambda tag, on_attempt: run_video_agent(
            frames, q.question, q.options, roster.video, tag=tag, on_attempt=on_attempt
        ),
        q.question_id,
    )
    context_task = lambda: _plain_stage(
        AGENT_CONTEXT,
        lambda tag, on_attempt: run_context_agent(
            q.materials.context, roster.context, tag=tag, on_attempt=on_attempt
        ),
        q.question_id,
    )
    video_outcome, context_outcome = _run_parallel([video_task, context_task], parallel_agents)
    trace.steps.extend(video_outcome.steps)
    trace.steps.extend(context_outcome.steps)

    video_report: VideoAnalysis | None = video_outcome.report
    context_report: ContextAnalysis | None = context_outcome.report

    rule_report = case_report = None
    if video_report is not None:
        rule_report, case_report, steps = _knowledge_stages(
            q,
            video_report.description,
            retriever.k_video,
            retriever,
            roster,
            ablation,
            parallel_agents,
        )
        trace.steps.extend(steps)
    else:
        trace.fallbacks.append("video_agent_failed")

    verdict, chief_steps = _chief_stage(
        q, rule_report, case_report, context_report, video_report, roster
    )
    trace.steps.extend(chief_steps)
    trace.final = asdict(verdict) if verdict else None
    return verdict, trace


def run(
    q: Query,
    retriever: Retriever,
    roster: AgentRoster,
    frame_source: FrameSource | None = None,
    ablation: AblationConfig = AblationConfig(),
    parallel_agents: bool = True,
) -> tuple[Verdict | None, AgentTrace]:
    """Dispatch on the router and run the matching pipeline."""
    if route(q) is Modality.VIDEO:
        if frame_source is None:
            raise ValueError("video query needs a frame source")
        return run_video_pipeline(
            q, retriever, roster, frame_source, ablation, parallel_agents
        )
    return run_text_pipeline(q, retriever, roster, ablation, parallel_agents)
