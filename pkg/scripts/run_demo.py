#!/usr/bin/env python3
"""End-to-end offline demo over scripted mock backends.

Builds both knowledge base indexes (three sample rule pages plus the
full reference case corpus), writes a two-question benchmark with one
text and one video item, runs the evaluation, and dumps one trace.
Everything lands in runs/demo/.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

ROOT = Path(__file__).resolve().parents[1]
sys.path.insert(0, str(ROOT / "src"))

from refpanel.cli import main as cli  # noqa: E402

WORKDIR = ROOT / "runs" / "demo"

RULE_PAGES = [
    "Law 8 The start and restart of play. A goal may be scored directly "
    "against the opponents from the kick-off.",
    "Law 11 Offside. A player in an offside position who interferes with "
    "play is penalised with an indirect free kick.",
    "Law 12 Fouls and misconduct. A tackle that endangers the safety of an "
    "opponent must be sanctioned as serious foul play.",
]


def main() -> int:
    WORKDIR.mkdir(parents=True, exist_ok=True)

    pages_dir = WORKDIR / "pages"
    pages_dir.mkdir(exist_ok=True)
    for i, text in enumerate(RULE_PAGES, start=1):
        (pages_dir / f"page_{i:03d}.txt").write_text(text, encoding="utf-8")

    print("== ingest rules ==")
    if cli(["ingest", "rules", str(pages_dir),
            "--index-out", str(WORKDIR / "rules.idx.json"),
            "--document", "laws", "--edition", "2025/26"]):
        return 1
    print("== ingest cases ==")
    if cli(["ingest", "cases", str(ROOT / "data" / "classic_cases.json"),
            "--index-out", str(WORKDIR / "cases.idx.json")]):
        return 1

    clip = WORKDIR / "clips" / "action_001" / "clip_1.mp4"
    frames = clip.parent / "clip_1_frames"
    frames.mkdir(parents=True, exist_ok=True)
    for f in range(4):
        (frames / f"frame_{f:04d}.jpg").write_bytes(b"\xff\xd8demo" + bytes([f]))

    benchmark = [
        {
            "Q": "Player A1 kicks off and the ball goes directly into Team B's goal. The referee should:",
            "materials": ["none"],
            "openA": "Award the goal and restart with a kickoff for Team B.",
            "closeA": "O4",
            "O1": "Disallow the goal and retake the kickoff.",
            "O2": "Award an indirect free kick to Team B.",
            "O3": "Award Team B a goal kick.",
            "O4": "Award the goal and restart with a kickoff for Team B.",
        },
        {
            "Q": "Based on the following foul video, what decision should the head referee make?",
            "materials": [{"path": str(clip), "context": "league\\2024-2025\\demo match"}],
            "openA": "Offence with yellow card",
            "closeA": "O3",
            "O1": "No offence",
            "O2": "Offence with no card",
            "O3": "Offence with yellow card",
            "O4": "Offence with possible red card",
        },
    ]
    (WORKDIR / "bench.json").write_text(json.dumps(benchmark, indent=4))

    script = {
        "rule": json.dumps({
            "direct_quote": "a tackle that endangers the safety of an opponent",
            "key_terminology_match": "serious foul play",
            "confidence": "high",
        }),
        "case": json.dumps({"summary": "Comparable studs-up lunges drew cards.",
                            "cited_case_ids": []}),
        "context": json.dumps({"strictness": "Normal",
                               "analysis": "Routine league fixture."}),
        "video": json.dumps({
            "choice_explanation": "late lunge, studs leading, moderate intensity",
            "predicted_option": "O3",
        }),
        "chief:q0001": "Prediction: O4\nExplanation: A goal may be scored directly from the kick-off.",
        "chief:q0002": "Prediction: O3\nExplanation: Reckless challenge warrants a caution.",
    }
    (WORKDIR / "script.json").write_text(json.dumps(script, indent=2))
    (WORKDIR / "backends.json").write_text(json.dumps({
        "scripted": {"kind": "mock", "script_file": "script.json", "vision": True},
    }, indent=2))
    (WORKDIR / "run.json").write_text(json.dumps({
        "backend_config": "backends.json",
        "roles": {r: "scripted" for r in ("rule", "case", "context", "video", "chief")},
        "rules_index": "rules.idx.json",
        "cases_index": "cases.idx.json",
        "embedder": {"kind": "local-hash", "dim": 64, "seed": 0},
        "k": 3,
    }, indent=2))

    print("== eval ==")
    if cli(["eval", str(WORKDIR / "bench.json"),
            "--config", str(WORKDIR / "run.json"),
            "--out", str(WORKDIR / "out")]):
        return 1
    print("== trace q0002 ==")
    return cli(["trace", "show", "q0002", "--out", str(WORKDIR / "out")])


if __name__ == "__main__":
    sys.exit(main())
