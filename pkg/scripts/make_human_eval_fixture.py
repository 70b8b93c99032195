#!/usr/bin/env python3
"""Regenerate the 150-packet blind-evaluation fixture used by the rating UI.

Builds a synthetic 180-question benchmark (120 text, 60 video), samples
100 text + 50 video items, and exports masked packets plus the sealed
key into frontend/fixtures/. Deterministic for a given seed.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

ROOT = Path(__file__).resolve().parents[1]
sys.path.insert(0, str(ROOT / "src"))

from refpanel.bench import (  # noqa: E402
    parse_item,
    export_human_eval_packets,
    sample_for_human_eval,
)

SEED = 11
SYSTEMS = ("panel-agents", "baseline-lm")
OUT_DIR = ROOT / "frontend" / "fixtures"

SEVERITY = {
    "O1": "No offence",
    "O2": "Offence with no card",
    "O3": "Offence with yellow card",
    "O4": "Offence with possible red card",
}

TEXT_STEMS = [
    "A substitute enters the field without permission and plays the ball. The referee should:",
    "The ball deflates after striking the crossbar and drops over the line. The referee should:",
    "A defender deliberately handles the ball to stop a promising attack. The referee should:",
    "Player A1 takes a throw-in that goes directly into the opponents' goal. The referee should:",
    "The goalkeeper holds the ball for more than eight seconds. The referee should:",
    "A penalty kick rebounds from the post and the kicker plays it again. The referee should:",
]

TEXT_OPTIONS = [
    "Stop play and caution the player.",
    "Allow play to continue under advantage.",
    "Award an indirect free kick to the opponents.",
    "Award a direct free kick and show a red card.",
]


def build_benchmark(n_text=120, n_video=60):
    items = []
    for i in range(1, n_text + 1):
        payload = {
            "Q": f"Scenario {i}. {TEXT_STEMS[i % len(TEXT_STEMS)]}",
            "materials": ["none"],
            "openA": TEXT_OPTIONS[i % 4],
            "closeA": f"O{(i % 4) + 1}",
        }
        for j, text in enumerate(TEXT_OPTIONS, start=1):
            payload[f"O{j}"] = text
        items.append(parse_item(i, payload))
    for i in range(1, n_video + 1):
        index = n_text + i
        payload = {
            "Q": "Based on the following foul video, what decision should the head referee make?",
            "materials": [
                {
                    "path": f"clips/action_{i:03d}/clip_1.mp4",
                    "context": f"league\\2024-2025\\match {i} home vs away",
                }
            ],
            "openA": SEVERITY[f"O{(i % 4) + 1}"],
            "closeA": f"O{(i % 4) + 1}",
            **SEVERITY,
        }
        items.append(parse_item(index, payload))
    return items


def main() -> None:
    items = build_benchmark()
    refs = sample_for_human_eval(items, n_text=100, n_video=50, seed=SEED)
    by_id = {item.question_id: item for item in items}
    samples = [by_id[r] for r in refs]
    explanations = {
        SYSTEMS[0]: {
            r: f"Rule-grounded rationale for {r}: the applicable law and a cited precedent support the verdict."
            for r in refs
        },
        SYSTEMS[1]: {
            r: f"Freeform rationale for {r}: the action looks like a foul based on general experience."
            for r in refs
        },
    }
    packet_doc, key_doc = export_human_eval_packets(samples, explanations, seed=SEED)

    OUT_DIR.mkdir(parents=True, exist_ok=True)
    (OUT_DIR / "packets_150.json").write_text(
        json.dumps(packet_doc, ensure_ascii=False, indent=2) + "\n", encoding="utf-8"
    )
    (OUT_DIR / "key_150.json").write_text(
        json.dumps(key_doc, ensure_ascii=False, indent=2) + "\n", encoding="utf-8"
    )
    blob = (OUT_DIR / "packets_150.json").read_bytes()
    for name in SYSTEMS:
        assert blob.count(name.encode()) == 0, f"system name {name!r} leaked"
    print(f"wrote {len(packet_doc['packets'])} packets and key to {OUT_DIR}")


if __name__ == "__main__":
    main()
