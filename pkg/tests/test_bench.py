from __future__ import annotations

import json
from pathlib import Path

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from refpanel.bench import (
    RatingRecord,
    aggregate_ratings,
    dump_benchmark,
    evaluate,
    export_human_eval_packets,
    load_benchmark,
    map_severity_labels,
    round_half_up,
    sample_for_human_eval,
    weighted_overall,
)
from refpanel.errors import ValidationError

FIXTURES = Path(__file__).parent / "fixtures"


def make_item(index, gold="O1", video=False, n_options=4):
    payload = {
        "Q": f"question {index}?",
        "materials": (
            [{"path": f"clips/action_{index}/clip_1.mp4", "context": f"ctx {index}"}]
            if video
            else ["none"]
        ),
        "openA": "open answer",
        "closeA": gold,
    }
    for i in range(1, n_options + 1):
        payload[f"O{i}"] = f"option {i}"
    from refpanel.bench import parse_item

    return parse_item(index, payload)


# ---------------------------------------------------------------------------
# Loading and validation
# ---------------------------------------------------------------------------


def test_load_benchmark_two_item_fixture():
    items = load_benchmark(FIXTURES / "two_item_bench.json")
    assert len(items) == 2

    video_item = items[0]
    assert video_item.is_video
    assert video_item.close_answer == "O2"
    assert [text for _, text in video_item.options] == [
        "No offence",
        "Offence with no card",
        "Offence with yellow card",
        "Offence with possible red card",
    ]

    text_item = items[1]
    assert not text_item.is_video
    assert text_item.materials == ("none",)
    assert text_item.close_answer == "O4"
    assert text_item.question.startswith("Player A1 kicks off")


def test_benchmark_round_trip_is_byte_stable():
    path = FIXTURES / "two_item_bench.json"
    original = path.read_text(encoding="utf-8")
    assert dump_benchmark(load_benchmark(path)) == original


def test_load_benchmark_rejects_bad_close_answer(tmp_path):
    path = tmp_path / "bench.json"
    path.write_text(
        json.dumps([{"Q": "q?", "materials": ["none"], "openA": "a",
                     "closeA": "O9", "O1": "x", "O2": "y"}])
    )
    with pytest.raises(ValidationError) as excinfo:
        load_benchmark(path)
    assert "item 1" in str(excinfo.value) and "closeA" in str(excinfo.value)


def test_load_benchmark_rejects_non_contiguous_options(tmp_path):
    path = tmp_path / "bench.json"
    path.write_text(
        json.dumps([{"Q": "q?", "closeA": "O1", "O1": "x", "O3": "z"}])
    )
    with pytest.raises(ValidationError) as excinfo:
        load_benchmark(path)
    assert "contiguous" in str(excinfo.value)


def test_load_benchmark_collects_all_problems(tmp_path):
    path = tmp_path / "bench.json"
    path.write_text(
        json.dumps([
            {"Q": "ok", "closeA": "O1", "O1": "x", "O2": "y"},
            {"Q": "bad", "closeA": "O9", "O1": "x", "O2": "y"},
            {"closeA": "O1", "O1": "x", "O2": "y"},
        ])
    )
    with pytest.raises(ValidationError) as excinfo:
        load_benchmark(path)
    message = str(excinfo.value)
    assert "item 2" in message and "item 3" in message


def test_question_ids_positional_and_stable(tmp_path):
    items = load_benchmark(FIXTURES / "two_item_bench.json")
    assert [i.question_id for i in items] == ["q0001", "q0002"]


# ---------------------------------------------------------------------------
# Severity label mapping
# ---------------------------------------------------------------------------


def test_map_severity_identity():
    assert map_severity_labels("Offence with no card") == "Offence with no card"


def test_map_severity_synonym():
    assert map_severity_labels("Normal Offence") == "Offence with no card"
    assert map_severity_labels("Offence with Red Card") == "Offence with possible red card"
    assert map_severity_labels("no offence") == "No offence"


def test_map_severity_unknown_label():
    with pytest.raises(ValidationError):
        map_severity_labels("Maroon card")


# ---------------------------------------------------------------------------
# Accuracy evaluation
# ---------------------------------------------------------------------------


def test_evaluate_all_correct_is_100():
    items = [make_item(i, video=(i % 2 == 0)) for i in range(1, 11)]
    report = evaluate(items, lambda item: item.close_answer)
    assert report.text_acc == report.video_acc == report.overall_acc == 100.0


def test_evaluate_mixed_fixture_hand_counted():
    # 6 text (4 correct), 4 video (2 correct) -> 66.67 / 50.00 / 60.00
    text_items = [make_item(i) for i in range(1, 7)]
    video_items = [make_item(i, video=True) for i in range(7, 11)]
    items = text_items + video_items
    wrong = {"O1": "O2", "O2": "O1"}

    def predict(item):
        index = int(item.question_id[1:])
        if index in (5, 6, 9, 10):
            return wrong[item.close_answer]
        return item.close_answer

    report = evaluate(items, predict)
    assert (report.text_correct, report.text_total) == (4, 6)
    assert (report.video_correct, report.video_total) == (2, 4)
    assert round_half_up(report.text_acc) == 66.67
    assert round_half_up(report.video_acc) == 50.00
    assert round_half_up(report.overall_acc) == 60.00


def test_evaluate_unanswered_counts_incorrect():
    items = [make_item(1), make_item(2)]
    report = evaluate(items, lambda item: None if item.question_id == "q0001" else item.close_answer)
    assert report.text_correct == 1
    unanswered = [r for r in report.per_item if r.predicted is None]
    assert len(unanswered) == 1 and not unanswered[0].correct


def test_evaluate_order_invariance():
    items = [make_item(i, video=(i > 6)) for i in range(1, 11)]

    def predict(item):
        return item.close_answer if int(item.question_id[1:]) % 3 else "O2"

    forward = evaluate(items, predict)
    backward = evaluate(list(reversed(items)), predict)
    assert (forward.text_acc, forward.video_acc, forward.overall_acc) == (
        backward.text_acc, backward.video_acc, backward.overall_acc,
    )


def test_evaluate_rejects_empty():
    with pytest.raises(ValueError):
        evaluate([], lambda item: None)


def test_evaluate_overall_is_count_weighted():
    items = [make_item(i, video=(i > 8)) for i in range(1, 11)]
    report = evaluate(items, lambda item: "O1")
    expected = (report.text_correct + report.video_correct) / 10 * 100
    assert report.overall_acc == expected


# ---------------------------------------------------------------------------
# weighted_overall and rounding
# ---------------------------------------------------------------------------


def test_weighted_overall_published_rows():
    assert weighted_overall(79.89, 1218, 39.17, 600) == 66.45
    assert weighted_overall(3.63, 100, 2.70, 50) == 3.32


def test_weighted_overall_rejects_zero_counts():
    with pytest.raises(ValueError):
        weighted_overall(50.0, 0, 50.0, 0)
    with pytest.raises(ValueError):
        weighted_overall(50.0, -1, 50.0, 2)


@given(
    st.floats(min_value=0, max_value=100),
    st.integers(min_value=0, max_value=5000),
    st.integers(min_value=0, max_value=5000),
)
@settings(max_examples=200)
def test_weighted_overall_equal_accuracy_invariance(acc, n_a, n_b):
    if n_a + n_b == 0:
        return
    assert weighted_overall(acc, n_a, acc, n_b) == round_half_up(acc)


def test_round_half_up_behaviour():
    assert round_half_up(66.665) == 66.67
    assert round_half_up(2.675) == 2.68
    assert round_half_up(4 / 6 * 100) == 66.67
    assert round_half_up(3.3549999) == 3.35


# ---------------------------------------------------------------------------
# Human-eval sampling
# ---------------------------------------------------------------------------


def bench_pool(n_text=30, n_video=15):
    items = [make_item(i) for i in range(1, n_text + 1)]
    items += [make_item(i, video=True) for i in range(n_text + 1, n_text + n_video + 1)]
    return items


def test_sampling_deterministic_per_seed():
    items = bench_pool()
    a = sample_for_human_eval(items, n_text=10, n_video=5, seed=7)
    b = sample_for_human_eval(items, n_text=10, n_video=5, seed=7)
    assert a == b
    c = sample_for_human_eval(items, n_text=10, n_video=5, seed=8)
    assert a != c


def test_sampling_without_replacement_and_partition():
    items = bench_pool()
    refs = sample_for_human_eval(items, n_text=10, n_video=5, seed=0)
    assert len(refs) == len(set(refs)) == 15
    by_id = {i.question_id: i for i in items}
    assert sum(1 for r in refs if by_id[r].is_video) == 5


def test_sampling_shortfall_errors():
    items = bench_pool(n_text=30, n_video=15)
    with pytest.raises(ValidationError) as excinfo:
        sample_for_human_eval(items, n_text=10, n_video=700, seed=0)
    assert "700" in str(excinfo.value)


# ---------------------------------------------------------------------------
# Packet export and blindness
# ---------------------------------------------------------------------------

SYSTEM_NAMES = ("panel-agents", "baseline-lm")


def make_explanations(items):
    return {
        SYSTEM_NAMES[0]: {i.question_id: f"grounded rationale for {i.question_id}" for i in items},
        SYSTEM_NAMES[1]: {i.question_id: f"freeform rationale for {i.question_id}" for i in items},
    }


def test_export_packets_masks_system_names():
    items = bench_pool(n_text=8, n_video=4)
    packet_doc, key_doc = export_human_eval_packets(items, make_explanations(items), seed=3)
    blob = json.dumps(packet_doc)
    for name in SYSTEM_NAMES:
        assert name not in blob
    assert len(packet_doc["packets"]) == 12
    assert set(key_doc["systems"]) == set(SYSTEM_NAMES)


def test_export_packets_key_reconstructs_mapping():
    items = bench_pool(n_text=8, n_video=4)
    explanations = make_explanations(items)
    packet_doc, key_doc = export_human_eval_packets(items, explanations, seed=3)
    for packet in packet_doc["packets"]:
        assignment = key_doc["assignments"][packet["sample_id"]]
        assert packet["explanation_a"] == explanations[assignment["A"]][packet["sample_id"]]
        assert packet["explanation_b"] == explanations[assignment["B"]][packet["sample_id"]]
        assert {assignment["A"], assignment["B"]} == set(SYSTEM_NAMES)


def test_export_packets_randomizes_slots_but_deterministically():
    items = bench_pool(n_text=20, n_video=10)
    explanations = make_explanations(items)
    _, key_a = export_human_eval_packets(items, explanations, seed=5)
    _, key_b = export_human_eval_packets(items, explanations, seed=5)
    assert key_a == key_b
    firsts = {key_a["assignments"][i.question_id]["A"] for i in items}
    assert firsts == set(SYSTEM_NAMES)  # both orders occur


def test_export_packets_video_samples_carry_clip_reference():
    items = bench_pool(n_text=2, n_video=2)
    packet_doc, _ = export_human_eval_packets(items, make_explanations(items), seed=0)
    video_packets = [p for p in packet_doc["packets"] if p["modality"] == "video"]
    assert all(p["clip_path"].endswith("clip_1.mp4") for p in video_packets)


def test_export_packets_missing_explanation_names_item():
    items = bench_pool(n_text=3, n_video=2)
    explanations = make_explanations(items)
    del explanations[SYSTEM_NAMES[0]][items[0].question_id]
    with pytest.raises(ValidationError) as excinfo:
        export_human_eval_packets(items, explanations, seed=0)
    assert items[0].question_id in str(excinfo.value)


def test_export_packets_requires_exactly_two_systems():
    items = bench_pool(n_text=2, n_video=2)
    explanations = make_explanations(items)
    explanations["third-system"] = dict(explanations[SYSTEM_NAMES[0]])
    with pytest.raises(ValidationError):
        export_human_eval_packets(items, explanations, seed=0)


# ---------------------------------------------------------------------------
# Rating aggregation
# ---------------------------------------------------------------------------


def build_key(n_text, n_video, a_system="ours", b_system="baseline"):
    assignments = {}
    ids = []
    for i in range(n_text):
        sid = f"t{i:04d}"
        assignments[sid] = {"A": a_system, "B": b_system, "modality": "text"}
        ids.append(sid)
    for i in range(n_video):
        sid = f"v{i:04d}"
        assignments[sid] = {"A": a_system, "B": b_system, "modality": "video"}
        ids.append(sid)
    return {
        "format": "refpanel-key/v1",
        "systems": [a_system, b_system],
        "assignments": assignments,
    }, ids


def ratings_from_scores(ids, rater, a_scores, b_scores):
    return [
        RatingRecord(sample_id=sid, rater_id=rater, scores={"A": a, "B": b})
        for sid, a, b in zip(ids, a_scores, b_scores)
    ]


def test_aggregate_reproduces_published_rater_rows():
    # rater 1: ours text mean 3.76 (sum 376/100), video mean 2.76 (sum 138/50)
    key, ids = build_key(100, 50)
    a_text = [4] * 76 + [3] * 24
    a_video = [3] * 38 + [2] * 12
    b_text = [4] * 63 + [3] * 37  # 3.63
    b_video = [3] * 35 + [2] * 15  # 2.70
    ratings = ratings_from_scores(ids, "referee-1", a_text + a_video, b_text + b_video)
    result = aggregate_ratings(ratings, key)

    ours = result["per_rater"]["referee-1"]["ours"]
    assert ours["text"] == pytest.approx(3.76)
    assert ours["video"] == pytest.approx(2.76)
    assert ours["overall"] == 3.43

    baseline = result["per_rater"]["referee-1"]["baseline"]
    assert baseline["overall"] == 3.32


def test_aggregate_second_rater_row():
    # ours text 4.09 (sum 409), video 3.24 (sum 162) -> overall 3.81
    key, ids = build_key(100, 50)
    a_text = [5] * 9 + [4] * 91
    a_video = [4] * 12 + [3] * 38
    ratings = ratings_from_scores(ids, "referee-2", a_text + a_video, [3] * 150)
    result = aggregate_ratings(ratings, key)
    assert result["per_rater"]["referee-2"]["ours"]["overall"] == 3.81


def test_aggregate_all_fives_identity():
    key, ids = build_key(4, 2)
    ratings = ratings_from_scores(ids, "r", [5] * 6, [5] * 6)
    result = aggregate_ratings(ratings, key)
    for system in ("ours", "baseline"):
        cell = result["per_rater"]["r"][system]
        assert cell["text"] == cell["video"] == 5.0
        assert cell["overall"] == 5.0
        assert result["average"][system]["overall"] == 5.0


def test_aggregate_average_is_mean_of_rater_means():
    key, ids = build_key(2, 1)
    ratings = ratings_from_scores(ids, "r1", [5, 5, 5], [1, 1, 1])
    ratings += ratings_from_scores(ids, "r2", [3, 3, 3], [1, 1, 1])
    result = aggregate_ratings(ratings, key)
    assert result["average"]["ours"]["text"] == pytest.approx(4.0)
    assert result["average"]["ours"]["video"] == pytest.approx(4.0)


def test_aggregate_rejects_out_of_range_score():
    key, ids = build_key(1, 1)
    ratings = ratings_from_scores(ids, "r", [6, 3], [1, 1])
    with pytest.raises(ValidationError):
        aggregate_ratings(ratings, key)


def test_aggregate_rejects_unknown_sample():
    key, _ = build_key(1, 1)
    ratings = [RatingRecord("zz999", "r", {"A": 3, "B": 3})]
    with pytest.raises(ValidationError):
        aggregate_ratings(ratings, key)


def test_aggregate_rejects_missing_slot():
    key, ids = build_key(1, 0)
    ratings = [RatingRecord(ids[0], "r", {"A": 3})]
    with pytest.raises(ValidationError):
        aggregate_ratings(ratings, key)
