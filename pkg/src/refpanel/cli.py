"""Operator command line: ingestion, querying, evaluation, human eval.

Config precedence is flags > environment (REFPANEL_*) > config file.
Secrets never live in config files; backend entries name the environment
variable that holds each API key.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

from . import bench as bench_mod
from . import kb as kb_mod
from .backends import (
    HashingEmbedder,
    RemoteEmbedder,
    build_backend,
    load_backend_config,
)
from .bench import round_half_up
from .errors import RefPanelError, ValidationError
from .frames import DEFAULT_FRAME_BUDGET, CommandFrameSource, DirectoryFrameSource
from .pipeline import (
    AblationConfig,
    AgentRoster,
    AgentTrace,
    Retriever,
    load_traces_jsonl,
    run as run_pipeline,
    write_traces_jsonl,
)

_ENV_PREFIX = "REFPANEL_"

EVAL_REPORT_FORMAT = "refpanel-eval-report/v1"


def _echo(message: str) -> None:
    print(message)


def _fail(message: str) -> int:
    print(f"error: {message}", file=sys.stderr)
    return 1


def _load_json(path: Path, what: str):
    if not path.exists():
        raise RefPanelError(f"{what} {path} does not exist")
    try:
        return json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise RefPanelError(f"{what} {path}: not valid JSON: {exc}") from exc


def build_embedder(spec: dict):
    kind = spec.get("kind", "local-hash")
    if kind == "local-hash":
        return HashingEmbedder(dim=int(spec.get("dim", 64)), seed=int(spec.get("seed", 0)))
    if kind == "remote":
        return RemoteEmbedder(
            url=spec["url"],
            model=spec["model"],
            dim=int(spec["dim"]),
            auth_env_var=spec.get("auth_env_var", ""),
            auth_header=spec.get("auth_header", "Authorization"),
            max_retries=int(spec.get("max_retries", 2)),
            timeout=float(spec.get("timeout", 60.0)),
        )
    raise RefPanelError(f"unknown embedder kind {kind!r}")


# ---------------------------------------------------------------------------
# Run configuration
# ---------------------------------------------------------------------------

_ROLE_NAMES = ("rule", "case", "context", "video", "chief")


@dataclass
class RunConfig:
    backend_config: str = ""
    roles: dict = field(default_factory=dict)
    rules_index: str | None = None
    cases_index: str | None = None
    embedder: dict = field(default_factory=lambda: {"kind": "local-hash", "dim": 64, "seed": 0})
    k: int = 3
    ablate_rule: bool = False
    ablate_case: bool = False
    parallel: int = 1
    seed: int = 0
    out: str = "runs/latest"
    frame_command: str | None = None
    frame_budget: int = DEFAULT_FRAME_BUDGET


def _env_override(name: str):
    return os.environ.get(_ENV_PREFIX + name.upper())


def load_run_config(path: str | None, args: argparse.Namespace) -> RunConfig:
    config = RunConfig()
    base_dir = Path(".")
    if path:
        payload = _load_json(Path(path), "run config")
        base_dir = Path(path).parent
        for name in vars(config):
            if name in payload:
                setattr(config, name, payload[name])

    def resolve(value: str | None) -> str | None:
        if value is None:
            return None
        p = Path(value)
        return str(p if p.is_absolute() else base_dir / p)

    config.backend_config = resolve(config.backend_config) or ""
    config.rules_index = resolve(config.rules_index)
    config.cases_index = resolve(config.cases_index)

    for name, cast in (("k", int), ("parallel", int), ("seed", int), ("out", str),
                       ("rules_index", str), ("cases_index", str)):
        env = _env_override(name)
        if env is not None:
            setattr(config, name, cast(env))

    for name in ("rules_index", "cases_index", "k", "parallel", "seed", "out"):
        value = getattr(args, name, None)
        if value is not None:
            setattr(config, name, value)
    if getattr(args, "ablate_rule", False):
        config.ablate_rule = True
    if getattr(args, "ablate_case", False):
        config.ablate_case = True
    return config


@dataclass
class Runtime:
    config: RunConfig
    retriever: Retriever
    roster: AgentRoster
    frame_source: object
    ablation: AblationConfig


def build_runtime(config: RunConfig) -> Runtime:
    """Materialize a run config, checking fingerprint consistency up front."""
    embedder = build_embedder(config.embedder)

    rules = cases = None
    if not config.ablate_rule:
        if not config.rules_index:
            raise RefPanelError("no rules index configured (and rule agent not ablated)")
        rules = kb_mod.load_index(config.rules_index, expected_fingerprint=embedder.fingerprint)
    if not config.ablate_case:
        if not config.cases_index:
            raise RefPanelError("no cases index configured (and case agent not ablated)")
        cases = kb_mod.load_index(config.cases_index, expected_fingerprint=embedder.fingerprint)

    if not config.backend_config:
        raise RefPanelError("run config names no backend_config file")
    backend_configs = load_backend_config(config.backend_config)
    base_dir = Path(config.backend_config).parent
    built: dict[str, object] = {}
    roles = {}
    for role in _ROLE_NAMES:
        backend_id = config.roles.get(role)
        if backend_id is None:
            raise RefPanelError(f"run config maps no backend to role {role!r}")
        if backend_id not in backend_configs:
            raise RefPanelError(f"role {role!r} names unknown backend {backend_id!r}")
        if backend_id not in built:
            built[backend_id] = build_backend(backend_configs[backend_id], base_dir=base_dir)
        roles[role] = built[backend_id]

    frame_source = (
        CommandFrameSource(config.frame_command, budget=config.frame_budget)
        if config.frame_command
        else DirectoryFrameSource(budget=config.frame_budget)
    )
    return Runtime(
        config=config,
        retriever=Retriever(
            rules=rules, cases=cases, embedder=embedder, k_text=config.k, k_video=config.k
        ),
        roster=AgentRoster(**roles),
        frame_source=frame_source,
        ablation=AblationConfig(
            rule_enabled=not config.ablate_rule, case_enabled=not config.ablate_case
        ),
    )


# ---------------------------------------------------------------------------
# ingest
# ---------------------------------------------------------------------------


def cmd_ingest(args: argparse.Namespace) -> int:
    try:
        embedder_spec = (
            _load_json(Path(args.embedder_config), "embedder config")
            if args.embedder_config
            else {"kind": "local-hash", "dim": 64, "seed": 0}
        )
        embedder = build_embedder(embedder_spec)
        if args.kind == "rules":
            pages = kb_mod.load_rule_pages(args.input)
            metadata = {
                "document": args.document or Path(args.input).stem,
                "edition": args.edition or "unspecified",
            }
            result = kb_mod.ingest_rule_pages(
                pages, metadata, embedder, parallelism=args.parallel or 1
            )
        else:
            records = kb_mod.load_case_records(args.input)
            result = kb_mod.ingest_cases(records, embedder, parallelism=args.parallel or 1)
        kb_mod.save_index(result.kb, args.index_out)
    except RefPanelError as exc:
        return _fail(str(exc))
    _echo(f"{result.accepted} entries")
    if result.rejected:
        _echo(f"{len(result.rejected)} rejected:")
        for ref, reason in result.rejected:
            _echo(f"  - {ref}: {reason}")
    _echo(f"index written to {args.index_out}")
    return 0


# ---------------------------------------------------------------------------
# ask / eval
# ---------------------------------------------------------------------------


def _adjudicate(runtime: Runtime, item: bench_mod.BenchItem):
    return run_pipeline(
        item.to_query(),
        runtime.retriever,
        runtime.roster,
        frame_source=runtime.frame_source,
        ablation=runtime.ablation,
    )


def _citations(trace: AgentTrace) -> list[str]:
    lines = []
    for step in trace.steps:
        if step.retrieval_hits:
            refs = ", ".join(
                f"{hit['entry_ref']} (score {hit['score']:.4f})"
                for hit in step.retrieval_hits
            )
            lines.append(f"{step.agent_name}: {refs}")
    return lines


def cmd_ask(args: argparse.Namespace) -> int:
    try:
        config = load_run_config(args.config, args)
        runtime = build_runtime(config)
        if args.item:
            payload = _load_json(Path(args.item), "question item")
            item = bench_mod.parse_item(1, payload)
        else:
            if not args.question or not args.option or not args.close_answer:
                raise RefPanelError(
                    "inline mode needs --question, repeated --option, and --close-answer"
                )
            payload = {"Q": args.question, "closeA": args.close_answer}
            for i, text in enumerate(args.option, start=1):
                payload[f"O{i}"] = text
            payload["materials"] = (
                [{"path": args.video, "context": args.video_context or ""}]
                if args.video
                else ["none"]
            )
            item = bench_mod.parse_item(1, payload)
    except RefPanelError as exc:
        return _fail(str(exc))

    out_dir = Path(config.out)
    try:
        verdict, trace = _adjudicate(runtime, item)
    except RefPanelError as exc:
        write_traces_jsonl(
            [AgentTrace(question_id=item.question_id, modality=item.modality)],
            out_dir / "traces.jsonl",
        )
        return _fail(str(exc))

    write_traces_jsonl([trace], out_dir / "traces.jsonl")
    if verdict is None:
        _echo("decision: unanswered")
        _echo(f"trace written to {out_dir / 'traces.jsonl'}")
        return 1
    _echo(f"decision: {verdict.decision}")
    _echo(f"explanation: {verdict.explanation}")
    for line in _citations(trace):
        _echo(f"citations: {line}")
    _echo(f"trace written to {out_dir / 'traces.jsonl'}")
    return 0


def _run_items(runtime: Runtime, items: Sequence[bench_mod.BenchItem]):
    """Adjudicate all items; backend failures degrade to unanswered."""

    def one(item: bench_mod.BenchItem):
        try:
            return _adjudicate(runtime, item)
        except RefPanelError as exc:
            trace = AgentTrace(question_id=item.question_id, modality=item.modality)
            trace.fallbacks.append(f"pipeline_error: {exc}")
            return None, trace

    workers = max(1, runtime.config.parallel)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(one, items))
    else:
        results = [one(item) for item in items]
    return results


def cmd_eval(args: argparse.Namespace) -> int:
    try:
        config = load_run_config(args.config, args)
        runtime = build_runtime(config)
        items = bench_mod.load_benchmark(args.benchmark)
    except RefPanelError as exc:
        return _fail(str(exc))

    results = _run_items(runtime, items)
    predictions = {
        item.question_id: (verdict.decision if verdict else None)
        for item, (verdict, _) in zip(items, results)
    }
    report = bench_mod.evaluate(items, lambda item: predictions[item.question_id])

    out_dir = Path(config.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_traces_jsonl([trace for _, trace in results], out_dir / "traces.jsonl")

    fingerprints = {}
    if runtime.retriever.rules is not None:
        fingerprints["rules"] = runtime.retriever.rules.embedder_fingerprint
    if runtime.retriever.cases is not None:
        fingerprints["cases"] = runtime.retriever.cases.embedder_fingerprint
    document = {
        "format": EVAL_REPORT_FORMAT,
        "report": report.to_dict(),
        "meta": {
            "backend_roles": dict(config.roles),
            "ablation": {
                "rule_enabled": not config.ablate_rule,
                "case_enabled": not config.ablate_case,
            },
            "kb_fingerprints": fingerprints,
            "k": config.k,
            "seed": config.seed,
            "parallel": config.parallel,
        },
    }
    report_path = out_dir / "report.json"
    report_path.write_text(
        json.dumps(document, ensure_ascii=False, indent=2) + "\n", encoding="utf-8"
    )
    _echo(
        f"text {round_half_up(report.text_acc):.2f} "
        f"({report.text_correct}/{report.text_total})"
    )
    _echo(
        f"video {round_half_up(report.video_acc):.2f} "
        f"({report.video_correct}/{report.video_total})"
    )
    _echo(f"overall {round_half_up(report.overall_acc):.2f}")
    _echo(f"report written to {report_path}")
    return 0


# ---------------------------------------------------------------------------
# human-eval
# ---------------------------------------------------------------------------


def cmd_human_eval_sample(args: argparse.Namespace) -> int:
    try:
        items = bench_mod.load_benchmark(args.benchmark)
        refs = bench_mod.sample_for_human_eval(
            items, n_text=args.n_text, n_video=args.n_video, seed=args.seed or 0
        )
    except RefPanelError as exc:
        return _fail(str(exc))
    out_dir = Path(args.out or ".")
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / "sample.json"
    path.write_text(
        json.dumps({"seed": args.seed or 0, "refs": refs}, indent=2) + "\n",
        encoding="utf-8",
    )
    _echo(f"{len(refs)} samples written to {path}")
    return 0


def cmd_human_eval_export(args: argparse.Namespace) -> int:
    try:
        items = bench_mod.load_benchmark(args.benchmark)
        sample_doc = _load_json(Path(args.samples), "sample file")
        refs = sample_doc["refs"] if isinstance(sample_doc, dict) else sample_doc
        by_id = {item.question_id: item for item in items}
        missing = [r for r in refs if r not in by_id]
        if missing:
            raise ValidationError(f"sample refs not in benchmark: {', '.join(missing)}")
        explanations = {}
        for spec in args.explanations or []:
            if "=" not in spec:
                raise ValidationError(
                    f"--explanations expects name=path, got {spec!r}"
                )
            name, _, path = spec.partition("=")
            explanations[name] = _load_json(Path(path), f"explanations for {name}")
        packet_doc, key_doc = bench_mod.export_human_eval_packets(
            [by_id[r] for r in refs], explanations, seed=args.seed or 0
        )
    except RefPanelError as exc:
        return _fail(str(exc))
    out_dir = Path(args.out or ".")
    out_dir.mkdir(parents=True, exist_ok=True)
    packets_path = out_dir / "packets.json"
    key_path = out_dir / "key.json"
    packets_path.write_text(
        json.dumps(packet_doc, ensure_ascii=False, indent=2) + "\n", encoding="utf-8"
    )
    key_path.write_text(
        json.dumps(key_doc, ensure_ascii=False, indent=2) + "\n", encoding="utf-8"
    )
    _echo(f"{len(packet_doc['packets'])} packets written to {packets_path}")
    _echo(f"sealed key written to {key_path}")
    return 0


def cmd_human_eval_aggregate(args: argparse.Namespace) -> int:
    try:
        ratings = bench_mod.load_ratings(args.ratings)
        key_doc = _load_json(Path(args.key), "key file")
        aggregates = bench_mod.aggregate_ratings(ratings, key_doc)
    except RefPanelError as exc:
        return _fail(str(exc))
    rendered = json.dumps(aggregates, indent=2)
    if args.out:
        out_dir = Path(args.out)
        out_dir.mkdir(parents=True, exist_ok=True)
        path = out_dir / "aggregates.json"
        path.write_text(rendered + "\n", encoding="utf-8")
        _echo(f"aggregates written to {path}")
    for rater in aggregates["per_rater"]:
        for system in aggregates["systems"]:
            cell = aggregates["per_rater"][rater][system]
            _echo(
                f"{rater} {system}: text {round_half_up(cell['text']):.2f} "
                f"video {round_half_up(cell['video']):.2f} "
                f"overall {cell['overall']:.2f}"
            )
    for system in aggregates["systems"]:
        cell = aggregates["average"][system]
        _echo(
            f"average {system}: text {round_half_up(cell['text']):.2f} "
            f"video {round_half_up(cell['video']):.2f} "
            f"overall {cell['overall']:.2f}"
        )
    return 0


# ---------------------------------------------------------------------------
# trace
# ---------------------------------------------------------------------------


def cmd_trace_show(args: argparse.Namespace) -> int:
    path = Path(args.out or ".") / "traces.jsonl"
    if not path.exists():
        return _fail(f"no trace file at {path}")
    for record in load_traces_jsonl(path):
        if record.get("question_id") == args.id:
            _echo(json.dumps(record, indent=2, ensure_ascii=False))
            return 0
    return _fail(f"no trace for question {args.id!r} in {path}")


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------


def _add_run_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="run config JSON file")
    parser.add_argument("--rules-index", dest="rules_index")
    parser.add_argument("--cases-index", dest="cases_index")
    parser.add_argument("--k", type=int)
    parser.add_argument("--ablate-rule", action="store_true")
    parser.add_argument("--ablate-case", action="store_true")
    parser.add_argument("--parallel", type=int)
    parser.add_argument("--seed", type=int)
    parser.add_argument("--out")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="refpanel",
        description="Retrieval-augmented multi-agent refereeing decisions",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_ingest = sub.add_parser("ingest", help="build a knowledge base index")
    p_ingest.add_argument("kind", choices=["rules", "cases"])
    p_ingest.add_argument("input", help="page directory/JSONL or case array file")
    p_ingest.add_argument("--index-out", required=True)
    p_ingest.add_argument("--embedder-config")
    p_ingest.add_argument("--document")
    p_ingest.add_argument("--edition")
    p_ingest.add_argument("--parallel", type=int)
    p_ingest.set_defaults(func=cmd_ingest)

    p_ask = sub.add_parser("ask", help="adjudicate a single question")
    p_ask.add_argument("--item", help="single question JSON file")
    p_ask.add_argument("--question")
    p_ask.add_argument("--option", action="append")
    p_ask.add_argument("--close-answer", dest="close_answer")
    p_ask.add_argument("--video", help="clip path for video questions")
    p_ask.add_argument("--video-context", dest="video_context")
    _add_run_flags(p_ask)
    p_ask.set_defaults(func=cmd_ask)

    p_eval = sub.add_parser("eval", help="evaluate a benchmark file")
    p_eval.add_argument("benchmark")
    _add_run_flags(p_eval)
    p_eval.set_defaults(func=cmd_eval)

    p_he = sub.add_parser("human-eval", help="blind human evaluation tooling")
    he_sub = p_he.add_subparsers(dest="subcommand", required=True)

    p_sample = he_sub.add_parser("sample")
    p_sample.add_argument("benchmark")
    p_sample.add_argument("--n-text", type=int, default=100)
    p_sample.add_argument("--n-video", type=int, default=50)
    p_sample.add_argument("--seed", type=int)
    p_sample.add_argument("--out")
    p_sample.set_defaults(func=cmd_human_eval_sample)

    p_export = he_sub.add_parser("export")
    p_export.add_argument("benchmark")
    p_export.add_argument("--samples", required=True)
    p_export.add_argument(
        "--explanations", action="append", help="name=path, exactly twice"
    )
    p_export.add_argument("--seed", type=int)
    p_export.add_argument("--out")
    p_export.set_defaults(func=cmd_human_eval_export)

    p_agg = he_sub.add_parser("aggregate")
    p_agg.add_argument("--ratings", required=True)
    p_agg.add_argument("--key", required=True)
    p_agg.add_argument("--out")
    p_agg.set_defaults(func=cmd_human_eval_aggregate)

    p_trace = sub.add_parser("trace", help="inspect recorded traces")
    trace_sub = p_trace.add_subparsers(dest="subcommand", required=True)
    p_show = trace_sub.add_parser("show")
    p_show.add_argument("id")
    p_show.add_argument("--out")
    p_show.set_defaults(func=cmd_trace_show)

    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
