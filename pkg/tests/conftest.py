from __future__ import annotations

import json
from pathlib import Path

import pytest

from refpanel.backends import HashingEmbedder
from refpanel.kb import ingest_cases, ingest_rule_pages, save_index

RULE_PAGES = [
    "Law 12 Fouls and misconduct. A direct free kick is awarded if a player "
    "commits an offence against an opponent in a manner considered careless, "
    "reckless or using excessive force, including tackles and charges.",
    "Law 11 Offside. A player is in an offside position if any part of the "
    "head, body or feet is nearer to the opponents' goal line than both the "
    "ball and the second-last opponent.",
    "Law 8 The start and restart of play. A goal may be scored directly "
    "against the opponents from the kick-off.",
    "Law 5 The referee. Each match is controlled by a referee who has full "
    "authority to enforce the Laws of the Game.",
    "Law 3 The players. A match may not start or continue if either team "
    "has fewer than seven players.",
]

CASE_RECORDS = [
    {
        "id": 4,
        "case": "2024 Premier League: Declan Rice receives a second yellow card "
        "for slightly kicking the ball away to delay the restart.",
        "decision": "Second yellow card and red card issued.",
        "controversiality": "Highly controversial",
    },
    {
        "id": 7,
        "case": "2018 FIFA World Cup: A defender blocks a goal-bound shot on the "
        "line with an outstretched arm.",
        "decision": "Penalty awarded and red card issued.",
        "controversiality": "Non-controversial",
    },
    {
        "id": 12,
        "case": "2016 Euro Cup: A striker in an offside position screens the "
        "goalkeeper as a long shot flies in.",
        "decision": "Goal disallowed for offside interference.",
        "controversiality": "Somewhat controversial",
    },
    {
        "id": 20,
        "case": "2019 Bundesliga: A late studs-up lunge catches the ball carrier "
        "above the ankle with high intensity.",
        "decision": "Red card issued.",
        "controversiality": "Non-controversial",
    },
]

SEVERITY_OPTIONS = {
    "O1": "No offence",
    "O2": "Offence with no card",
    "O3": "Offence with yellow card",
    "O4": "Offence with possible red card",
}


@pytest.fixture(scope="session")
def embedder():
    return HashingEmbedder(dim=64, seed=0)


@pytest.fixture(scope="session")
def rules_kb(embedder):
    return ingest_rule_pages(
        RULE_PAGES, {"document": "laws", "edition": "2025/26"}, embedder
    ).kb


@pytest.fixture(scope="session")
def cases_kb(embedder):
    return ingest_cases(CASE_RECORDS, embedder).kb


# ---------------------------------------------------------------------------
# Shared end-to-end fixture: 10-question benchmark over scripted mocks
# ---------------------------------------------------------------------------

# gold -> scripted chief prediction; 4/6 text and 2/4 video are correct.
TEXT_PLAN = [
    ("O4", "O4"),
    ("O1", "O1"),
    ("O2", "O2"),
    ("O3", "O3"),
    ("O1", "O2"),
    ("O2", "O1"),
]
VIDEO_PLAN = [
    ("O2", "O2"),
    ("O1", "O1"),
    ("O4", "O1"),
    ("O3", "O2"),
]

VIDEO_DESCRIPTION = "studs-up lunge at knee height, high intensity contact"


def build_eval_fixture(root: Path) -> dict:
    """Materialize benchmark, indexes, mock backends, and run config."""
    root.mkdir(parents=True, exist_ok=True)
    emb = HashingEmbedder(dim=64, seed=0)

    rules_path = root / "rules.idx.json"
    cases_path = root / "cases.idx.json"
    save_index(
        ingest_rule_pages(RULE_PAGES, {"document": "laws", "edition": "2025/26"}, emb).kb,
        rules_path,
    )
    save_index(ingest_cases(CASE_RECORDS, emb).kb, cases_path)

    items = []
    script = {
        "rule": json.dumps(
            {
                "direct_quote": "careless, reckless or using excessive force",
                "key_terminology_match": "serious foul play",
                "confidence": "high",
            }
        ),
        "case": json.dumps(
            {"summary": "No precedent applies cleanly.", "cited_case_ids": []}
        ),
        "context": json.dumps(
            {"strictness": "Normal", "analysis": "League match with mid-table stakes."}
        ),
        "video": json.dumps(
            {"choice_explanation": VIDEO_DESCRIPTION, "predicted_option": "O1"}
        ),
    }

    for i, (gold, predicted) in enumerate(TEXT_PLAN, start=1):
        qid = f"q{i:04d}"
        items.append(
            {
                "Q": f"Theory question {i}: what should the referee do?",
                "materials": ["none"],
                "openA": f"Open answer {i}.",
                "closeA": gold,
                "O1": "Disallow the goal and retake.",
                "O2": "Award an indirect free kick.",
                "O3": "Award a goal kick.",
                "O4": "Award the goal and restart with a kick-off.",
            }
        )
        script[f"chief:{qid}"] = f"Prediction: {predicted}\nExplanation: scripted rationale {i}."

    clips_dir = root / "clips"
    for j, (gold, predicted) in enumerate(VIDEO_PLAN, start=1):
        qid = f"q{len(TEXT_PLAN) + j:04d}"
        clip = clips_dir / f"action_{j}" / "clip_1.mp4"
        frame_dir = clip.parent / "clip_1_frames"
        frame_dir.mkdir(parents=True, exist_ok=True)
        for f in range(3):
            (frame_dir / f"frame_{f:04d}.jpg").write_bytes(b"\xff\xd8frame" + bytes([f]))
        items.append(
            {
                "Q": "Based on the foul video, what decision should the referee make?",
                "materials": [
                    {
                        "path": str(clip),
                        "context": f"league\\2024-2025\\match {j} home 1 - 0 away",
                    }
                ],
                "openA": SEVERITY_OPTIONS[gold],
                "closeA": gold,
                **SEVERITY_OPTIONS,
            }
        )
        script[f"chief:{qid}"] = f"Prediction: {predicted}\nExplanation: scripted video rationale {j}."

    bench_path = root / "bench.json"
    bench_path.write_text(json.dumps(items, ensure_ascii=False, indent=4) + "\n")

    script_path = root / "script.json"
    script_path.write_text(json.dumps(script, indent=2))

    backends_path = root / "backends.json"
    backends_path.write_text(
        json.dumps(
            {"scripted": {"kind": "mock", "script_file": "script.json", "vision": True}},
            indent=2,
        )
    )

    run_config = {
        "backend_config": "backends.json",
        "roles": {role: "scripted" for role in ("rule", "case", "context", "video", "chief")},
        "rules_index": "rules.idx.json",
        "cases_index": "cases.idx.json",
        "embedder": {"kind": "local-hash", "dim": 64, "seed": 0},
        "k": 3,
        "parallel": 1,
        "seed": 0,
    }
    run_path = root / "run.json"
    run_path.write_text(json.dumps(run_config, indent=2))

    return {
        "root": root,
        "bench": bench_path,
        "run": run_path,
        "backends": backends_path,
        "script": script_path,
        "rules_index": rules_path,
        "cases_index": cases_path,
        "n_text": len(TEXT_PLAN),
        "n_video": len(VIDEO_PLAN),
    }


@pytest.fixture
def eval_fixture(tmp_path):
    return build_eval_fixture(tmp_path / "fixture")
