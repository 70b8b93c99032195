"""Benchmark loading, accuracy evaluation, and the human-eval protocol.

Scoring is exact-match of the predicted option label against the gold
label; subset accuracies are weighted by subset size into the overall
number. The human-eval tooling samples items, exports masked two-system
packets with a sealed key file, and aggregates 1-5 ratings back into
per-rater and cross-rater tables.
"""

from __future__ import annotations

import json
import random
from dataclasses import asdict, dataclass, field
from decimal import ROUND_HALF_UP, Decimal
from pathlib import Path
from typing import Callable, Mapping, Sequence, Union

from .errors import ValidationError
from .pipeline import Query, VideoMaterial

_OPTION_FIELDS = ("O1", "O2", "O3", "O4")
_ITEM_FIELD_ORDER = ("Q", "materials", "openA", "closeA", "O1", "O2", "O3", "O4")

SEVERITY_OPTIONS = (
    "No offence",
    "Offence with no card",
    "Offence with yellow card",
    "Offence with possible red card",
)

# Accepted spellings (case-insensitive) -> canonical on-disk label.
_SEVERITY_SYNONYMS = {
    "no offence": "No offence",
    "offence with no card": "Offence with no card",
    "normal offence": "Offence with no card",
    "offence with yellow card": "Offence with yellow card",
    "offence with red card": "Offence with possible red card",
    "offence with possible red card": "Offence with possible red card",
}


def round_half_up(value: float, places: int = 2) -> float:
    """Presentation rounding; internal math stays full precision."""
    quantum = Decimal(1).scaleb(-places)
    return float(Decimal(repr(value)).quantize(quantum, rounding=ROUND_HALF_UP))


def map_severity_labels(raw_label: str) -> str:
    """Canonicalize a severity label, accepting known synonyms."""
    canonical = _SEVERITY_SYNONYMS.get(raw_label.strip().lower())
    if canonical is None:
        raise ValidationError(f"unrecognized severity label {raw_label!r}")
    return canonical


# ---------------------------------------------------------------------------
# Benchmark items
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BenchItem:
    question_id: str
    question: str
    materials: tuple
    options: tuple[tuple[str, str], ...]
    open_answer: str
    close_answer: str

    @property
    def is_video(self) -> bool:
        return any(isinstance(m, dict) and "path" in m for m in self.materials)

    @property
    def modality(self) -> str:
        return "video" if self.is_video else "text"

    def to_query(self) -> Query:
        materials = None
        for m in self.materials:
            if isinstance(m, dict) and "path" in m:
                materials = VideoMaterial(path=m["path"], context=m.get("context", ""))
                break
        return Query(
            question_id=self.question_id,
            question=self.question,
            materials=materials,
            options=self.options,
            ground_truth_close=self.close_answer,
            ground_truth_open=self.open_answer,
        )


def parse_item(index: int, payload: dict) -> BenchItem:
    problems = []
    for required in ("Q", "closeA"):
        if required not in payload:
            problems.append(f"item {index}: missing field {required!r}")
    if problems:
        raise ValidationError("; ".join(problems))

    options: list[tuple[str, str]] = []
    for label in _OPTION_FIELDS:
        if label in payload:
            options.append((label, str(payload[label])))
    labels = [label for label, _ in options]
    expected = [f"O{i}" for i in range(1, len(labels) + 1)]
    if labels != expected:
        raise ValidationError(
            f"item {index}: option fields must be contiguous from O1, got {labels}"
        )
    if not 2 <= len(labels) <= 4:
        raise ValidationError(f"item {index}: needs 2 to 4 options, got {len(labels)}")
    close = payload["closeA"]
    if close not in labels:
        raise ValidationError(
            f"item {index}: closeA {close!r} names no option among {labels}"
        )
    materials = payload.get("materials", ["none"])
    if not isinstance(materials, list):
        raise ValidationError(f"item {index}: materials must be a list")
    return BenchItem(
        question_id=f"q{index:04d}",
        question=str(payload["Q"]),
        materials=tuple(materials),
        options=tuple(options),
        open_answer=str(payload.get("openA", "")),
        close_answer=close,
    )


def load_benchmark(path: Union[str, Path]) -> list[BenchItem]:
    """Load and validate the benchmark array file.

    Question ids are positional (q0001, ...) and stable across loads of
    the same file. All schema violations are reported together.
    """
    p = Path(path)
    if not p.exists():
        raise ValidationError(f"benchmark file {p} does not exist")
    try:
        data = json.loads(p.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{p}: not valid JSON: {exc}") from exc
    if not isinstance(data, list):
        raise ValidationError(f"{p}: expected a JSON array of items")
    items: list[BenchItem] = []
    problems: list[str] = []
    for index, payload in enumerate(data, start=1):
        try:
            items.append(parse_item(index, payload))
        except ValidationError as exc:
            problems.append(str(exc))
    if problems:
        raise ValidationError("; ".join(problems))
    return items


def _item_to_payload(item: BenchItem) -> dict:
    payload = {
        "Q": item.question,
        "materials": list(item.materials),
        "openA": item.open_answer,
        "closeA": item.close_answer,
    }
    for label, text in item.options:
        payload[label] = text
    return {k: payload[k] for k in _ITEM_FIELD_ORDER if k in payload}

def dump_benchmark(items: Sequence[BenchItem]) -> str:
    """Canonical serialization; loading its output is byte-stable."""
    return json.dumps([_item_to_payload(i) for i in items], ensure_ascii=False, indent=4) + "\n"


# ---------------------------------------------------------------------------
# Accuracy evaluation
# ---------------------------------------------------------------------------


@dataclass
class ItemResult:
    question_id: str
    modality: str
    predicted: str | None
    gold: str
    correct: bool
    trace_ref: str


@dataclass
class EvalReport:
    text_correct: int
    text_total: int
    video_correct: int
    video_total: int
    text_acc: float
    video_acc: float
    overall_acc: float
    per_item: list[ItemResult] = field(default_factory=list)

    def to_dict(self) -> dict:
        payload = asdict(self)
        payload["text_acc_display"] = round_half_up(self.text_acc)
        payload["video_acc_display"] = round_half_up(self.video_acc)
        payload["overall_acc_display"] = round_half_up(self.overall_acc)
        return payload


def weighted_overall(acc_a: float, n_a: int, acc_b: float, n_b: int) -> float:
    """Subset accuracies combined by subset size, reported to 2 decimals."""
    if n_a < 0 or n_b < 0:
        raise ValueError("counts must be non-negative")
    if n_a + n_b == 0:
        raise ValueError("at least one subset must be non-empty")
    return round_half_up((acc_a * n_a + acc_b * n_b) / (n_a + n_b))


def evaluate(
    items: Sequence[BenchItem],
    system_under_test: Callable[[BenchItem], str | None],
) -> EvalReport:
    """Exact-match scoring; unanswered items count as incorrect."""
    if not items:
        raise ValueError("cannot evaluate an empty item list")
    text_correct = text_total = video_correct = video_total = 0
    per_item: list[ItemResult] = []
    for item in items:
        predicted = system_under_test(item)
        correct = predicted == item.close_answer
        if item.is_video:
            video_total += 1
            video_correct += int(correct)
        else:
            text_total += 1
            text_correct += int(correct)
        per_item.append(
            ItemResult(
                question_id=item.question_id,
                modality=item.modality,
                predicted=predicted,
                gold=item.close_answer,
                correct=correct,
                trace_ref=item.question_id,
            )
        )
    text_acc = 100.0 * text_correct / text_total if text_total else 0.0
    video_acc = 100.0 * video_correct / video_total if video_total else 0.0
    overall_acc = 100.0 * (text_correct + video_correct) / (text_total + video_total)
    return EvalReport(
        text_correct=text_correct,
        text_total=text_total,
        video_correct=video_correct,
        video_total=video_total,
        text_acc=text_acc,
        video_acc=video_acc,
        overall_acc=overall_acc,
        per_item=per_item,
    )


# ---------------------------------------------------------------------------
# Human evaluation: sampling, packet export, rating aggregation
# ---------------------------------------------------------------------------

PACKETS_FORMAT = "refpanel-packets/v1"
KEY_FORMAT = "refpanel-key/v1"
RATINGS_FORMAT = "refpanel-ratings/v1"

RATING_SLOTS = ("A", "B")
LIKERT_MIN, LIKERT_MAX = 1, 5


@dataclass(frozen=True)
class RatingRecord:
    sample_id: str
    rater_id: str
    scores: Mapping[str, int]


def sample_for_human_eval(
    items: Sequence[BenchItem],
    n_text: int = 100,
    n_video: int = 50,
    seed: int = 0,
) -> list[str]:
    """Seeded uniform sample without replacement from each subset."""
    text_ids = [i.question_id for i in items if not i.is_video]
    video_ids = [i.question_id for i in items if i.is_video]
    if len(text_ids) < n_text:
        raise ValidationError(
            f"need {n_text} text items, only {len(text_ids)} available"
        )
    if len(video_ids) < n_video:
        raise ValidationError(
            f"need {n_video} video items, only {len(video_ids)} available"
        )
    rng = random.Random(seed)
    return rng.sample(text_ids, n_text) + rng.sample(video_ids, n_video)


def export_human_eval_packets(
    samples: Sequence[BenchItem],
    explanations: Mapping[str, Mapping[str, str]],
    seed: int = 0,
) -> tuple[dict, dict]:
    """Build the masked packet document and the sealed key document.

    Exactly two systems are compared; each sample gets a randomized
    assignment of systems to the anonymous A/B slots, recorded only in
    the key document.
    """
    systems = sorted(explanations)
    if len(systems) != 2:
        raise ValidationError(
            f"blind comparison needs exactly 2 systems, got {len(systems)}"
        )
    for system in systems:
        missing = [s.question_id for s in samples if s.question_id not in explanations[system]]
        if missing:
            raise ValidationError(
                f"system {system!r} has no explanation for: {', '.join(missing)}"
            )
    rng = random.Random(seed)
    packets = []
    assignments = {}
    for item in samples:
        first, second = (systems if rng.random() < 0.5 else systems[::-1])
        assignments[item.question_id] = {
            "A": first,
            "B": second,
            "modality": item.modality,
        }
        packet = {
            "sample_id": item.question_id,
            "modality": item.modality,
            "question": item.question,
            "options": {label: text for label, text in item.options},
            "explanation_a": explanations[first][item.question_id],
            "explanation_b": explanations[second][item.question_id],
        }
        if item.is_video:
            material = next(m for m in item.materials if isinstance(m, dict))
            packet["clip_path"] = material.get("path", "")
            packet["clip_context"] = material.get("context", "")
        packets.append(packet)
    packet_doc = {"format": PACKETS_FORMAT, "packets": packets}
    key_doc = {"format": KEY_FORMAT, "systems": systems, "assignments": assignments}
    return packet_doc, key_doc


def load_ratings(path: Union[str, Path]) -> list[RatingRecord]:
    p = Path(path)
    if not p.exists():
        raise ValidationError(f"ratings file {p} does not exist")
    try:
        doc = json.loads(p.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{p}: not valid JSON: {exc}") from exc
    if not isinstance(doc, dict) or doc.get("format") != RATINGS_FORMAT:
        raise ValidationError(f"{p}: expected a {RATINGS_FORMAT} document")
    records = []
    for entry in doc.get("ratings", []):
        records.append(
            RatingRecord(
                sample_id=str(entry["sample_id"]),
                rater_id=str(entry["rater_id"]),
                scores={k: v for k, v in entry["scores"].items()},
            )
        )
    return records


def _mean(values: Sequence[float]) -> float:
    return sum(values) / len(values) if values else 0.0


def aggregate_ratings(ratings: Sequence[RatingRecord], key_doc: Mapping) -> dict:
    """Unmask ratings and aggregate per rater, per system, per subset.

    Overall columns apply the subset-size-weighted combination; the
    cross-rater average row is the mean of rater means.
    """
    if key_doc.get("format") != KEY_FORMAT:
        raise ValidationError("key document has the wrong format marker")
    assignments = key_doc["assignments"]
    systems = list(key_doc["systems"])

    # scores[rater][system][modality] -> list of ints
    scores: dict[str, dict[str, dict[str, list[int]]]] = {}
    for record in ratings:
        assignment = assignments.get(record.sample_id)
        if assignment is None:
            raise ValidationError(f"rating references unknown sample {record.sample_id!r}")
        for slot in RATING_SLOTS:
            if slot not in record.scores:
                raise ValidationError(
                    f"rating for {record.sample_id!r} is missing slot {slot!r}"
                )
            value = record.scores[slot]
            if not isinstance(value, int) or isinstance(value, bool) or not (
                LIKERT_MIN <= value <= LIKERT_MAX
            ):
                raise ValidationError(
                    f"rating for {record.sample_id!r} slot {slot}: score {value!r} "
                    f"outside [{LIKERT_MIN}, {LIKERT_MAX}]"
                )
            system = assignment[slot]
            modality = assignment["modality"]
            scores.setdefault(record.rater_id, {}).setdefault(system, {}).setdefault(
                modality, []
            ).append(value)

    per_rater: dict[str, dict[str, dict[str, float]]] = {}
    for rater in sorted(scores):
        per_rater[rater] = {}
        for system in systems:
            by_modality = scores[rater].get(system, {})
            text_scores = by_modality.get("text", [])
            video_scores = by_modality.get("video", [])
            text_mean = _mean(text_scores)
            video_mean = _mean(video_scores)
            overall = weighted_overall(
                text_mean, len(text_scores), video_mean, len(video_scores)
            )
            per_rater[rater][system] = {
                "text": text_mean,
                "video": video_mean,
                "overall": overall,
                "n_text": len(text_scores),
                "n_video": len(video_scores),
            }

    average: dict[str, dict[str, float]] = {}
    for system in systems:
        text_means = [per_rater[r][system]["text"] for r in per_rater]
        video_means = [per_rater[r][system]["video"] for r in per_rater]
        n_text = sum(per_rater[r][system]["n_text"] for r in per_rater)
        n_video = sum(per_rater[r][system]["n_video"] for r in per_rater)
        avg_text = _mean(text_means)
        avg_video = _mean(video_means)
        average[system] = {
            "text": avg_text,
            "video": avg_video,
            "overall": weighted_overall(avg_text, n_text, avg_video, n_video),
        }

    return {"systems": systems, "per_rater": per_rater, "average": average}
