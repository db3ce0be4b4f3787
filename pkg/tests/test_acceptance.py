"""Acceptance suite: every exit criterion as a test with a printed pass line.

Run with ``pytest tests/test_acceptance.py -s`` to see the per-criterion lines.
Expected values come from independent oracles computed inside this module
(plain-python statistics, Decimal rounding, hand-constructed fixtures), never
from the code paths they check.
"""

from __future__ import annotations

import csv
import json
import math
import random
import time

import pytest

from conftest import FIXTURES_DIR, PROMPTS_DIR, write_jpeg
from golden import (
    MISS_P1,
    MISS_P2,
    MODELS,
    SAMPLE_IDS,
    build_golden_tree,
    oracle_cell_stats,
)

from hailgauge.annotations import Annotation, AnnotationStore
from hailgauge.config import load_config
from hailgauge.dataset import Sample, compute_stats, load_samples
from hailgauge.gateway import Gateway, MockBackend
from hailgauge.metrics import miss_histogram, stratify, summarize, summarize_by_cell
from hailgauge.parsing import (
    MISS_NONE,
    Measurement,
    measure_text,
    round_to_half_cm,
)
from hailgauge.prompts import DEFAULT_REFERENCE_SPECS, PromptEngine
from hailgauge.reporting import report_run
from hailgauge.runner import load_run, run


def ok(line: str) -> None:
    print(f"ACCEPTANCE PASS: {line}")


@pytest.fixture(scope="module")
def engine():
    return PromptEngine(PROMPTS_DIR)


# --- 1. golden end-to-end run ---------------------------------------------------


def test_golden_end_to_end(tmp_path):
    started = time.monotonic()
    tree = build_golden_tree(tmp_path / "tree")
    config = load_config(tree.config_path)
    config.prompts_dir = str(PROMPTS_DIR)

    first = run(config)
    first_report = report_run(first.run_dir, tmp_path / "report1")
    second = run(load_config(tree.config_path))
    second_report = report_run(second.run_dir, tmp_path / "report2")
    elapsed = time.monotonic() - started

    assert len(first.cells) == 4 * 2 * 20

    # two consecutive runs: byte-identical outputs
    assert (
        (first.run_dir / "measurements.jsonl").read_bytes()
        == (second.run_dir / "measurements.jsonl").read_bytes()
    )
    assert first_report.metrics_csv.read_bytes() == second_report.metrics_csv.read_bytes()

    # every metrics.csv cell against the independent oracle
    rows = list(csv.DictReader(first_report.metrics_csv.open()))
    assert len(rows) == 8
    checked = 0
    for row in rows:
        expected = oracle_cell_stats(row["model"], row["strategy"])
        assert int(row["n"]) == expected["n"]
        assert int(row["miss"]) == expected["miss"]
        assert abs(float(row["mae_cm"]) - expected["mae_cm"]) <= 1e-9
        assert abs(float(row["rmse_cm"]) - expected["rmse_cm"]) <= 1e-9
        assert abs(float(row["bias_cm"]) - expected["bias_cm"]) <= 1e-9
        if expected["pearson_r"] is None:
            assert row["pearson_r"] == ""
        else:
            assert abs(float(row["pearson_r"]) - expected["pearson_r"]) <= 1e-9
        checked += 1
    assert checked == 8

    assert elapsed < 10.0
    ok(
        "golden end-to-end run: 160 cells, metrics.csv == oracle to 1e-9, "
        f"byte-identical reruns, {elapsed:.2f}s"
    )


# --- 2. metrics oracle equivalence ----------------------------------------------


def _brute_force_stats(pairs):
    n = len(pairs)
    errors = [p - t for p, t in pairs]
    mae = math.fsum(abs(e) for e in errors) / n
    rmse = math.sqrt(math.fsum(e * e for e in errors) / n)
    bias = math.fsum(errors) / n
    preds = [p for p, _ in pairs]
    truths = [t for _, t in pairs]
    r = None
    if n >= 2 and max(preds) > min(preds) and max(truths) > min(truths):
        mp, mt = math.fsum(preds) / n, math.fsum(truths) / n
        num = math.fsum((p - mp) * (t - mt) for p, t in zip(preds, truths))
        den = math.sqrt(
            math.fsum((p - mp) ** 2 for p in preds)
            * math.fsum((t - mt) ** 2 for t in truths)
        )
        r = num / den if den > 0 else None
    return mae, rmse, bias, r


def test_metrics_oracle_equivalence():
    rng = random.Random(20240617)
    worst = 0.0
    for _ in range(1000):
        n = rng.randint(1, 50)
        pairs = []
        for _ in range(n):
            truth = rng.randint(4, 22) * 0.5
            pred = (
                0.0
                if rng.random() < 0.1
                else round(max(0.0, truth + rng.uniform(-3.0, 3.0)) * 2) / 2
            )
            pairs.append((pred, truth))
        core = summarize([(p, t, p - t) for p, t in pairs])
        mae, rmse, bias, r = _brute_force_stats(pairs)
        worst = max(
            worst,
            abs(core.mae_cm - mae),
            abs(core.rmse_cm - rmse),
            abs(core.bias_cm - bias),
        )
        if r is None:
            assert core.pearson_r is None
        else:
            worst = max(worst, abs(core.pearson_r - r))
        assert core.rmse_cm >= core.mae_cm - 1e-12
        assert core.mae_cm >= abs(core.bias_cm) - 1e-12
    assert worst <= 1e-9
    ok(f"metrics oracle equivalence: 1000 instances, max deviation {worst:.2e}")


# --- 3. parser corpus and rounding property -------------------------------------


def test_parser_corpus_and_rounding():
    corpus = [
        json.loads(line)
        for line in (FIXTURES_DIR / "parser_corpus.jsonl").read_text().splitlines()
        if line.strip()
    ]
    assert len(corpus) == 50
    mismatches = []
    for entry in corpus:
        m = measure_text("s", "m", "P1", entry["text"])
        if (
            m.value_cm_raw != entry["expected_cm_or_null"]
            or m.miss_reason != entry["expected_miss_reason"]
        ):
            mismatches.append(entry["text"])
    assert mismatches == []

    rng = random.Random(99)
    for _ in range(100_000):
        value = rng.uniform(-1000.0, 1000.0)
        rounded = round_to_half_cm(value)
        assert abs(rounded - value) <= 0.25
        assert rounded * 2 == int(rounded * 2)
    ok("parser corpus: 50/50 exact; rounding within 0.25 over 1e5 random values")


# --- 4. prompt fidelity ----------------------------------------------------------


def test_prompt_fidelity(engine):
    p1 = engine.build_p1_prompt()
    step1 = engine.build_p2_step1_prompt()
    ruler = engine.build_p2_step2_prompt(DEFAULT_REFERENCE_SPECS["ruler"])
    unspecified = engine.build_p2_step2_prompt(DEFAULT_REFERENCE_SPECS["unspecified"])
    assert "Answer only with the diameter in cm" in p1
    assert "your answer has to be 'unspecified'" in step1
    assert "markings on the ruler" in ruler
    assert "contextual cues in the image" in unspecified

    # known-dimensions routing for every sized reference object
    for token in ("hand", "coin", "lighter", "bottlecap"):
        spec = engine.classify_step1_answer(token)
        assert spec.class_token == token
        prompt = engine.build_p2_step2_prompt(spec)
        assert f"using the {spec.display_name} as a reference" in prompt
        assert spec.typical_dimensions_text in prompt

    assert engine.classify_step1_answer("ruler").class_token == "ruler"

    # unknown tokens and the explicit fallback word both route to unspecified
    for raw in ("unspecified", "snowball", "xyz123", "", "Trampoline!"):
        spec = engine.classify_step1_answer(raw)
        if raw not in ("unspecified",):
            assert spec.class_token == "unspecified", raw
        assert engine.build_p2_step2_prompt(spec) == unspecified
    ok("prompt fidelity: anchors verbatim, routing and fallback enumerated")


# --- 5. miss accounting ----------------------------------------------------------


@pytest.fixture(scope="module")
def golden_run(tmp_path_factory):
    root = tmp_path_factory.mktemp("acceptance-golden")
    tree = build_golden_tree(root / "tree")
    config = load_config(tree.config_path)
    config.prompts_dir = str(PROMPTS_DIR)
    record = run(config)
    return tree, record


def test_miss_accounting(golden_run):
    tree, record = golden_run
    samples = load_samples(tree.samples_path)
    truths = {s.sample_id: s.truth_diameter_cm for s in samples}
    store = AnnotationStore(tree.annotations_path)
    summaries = {
        (s.model_id, s.strategy): s
        for s in summarize_by_cell(record.measurements, truths)
    }
    histogram = miss_histogram(record.measurements, store.distance_lookup())

    for model in MODELS:
        for strategy, expected in (("P1", MISS_P1[model]), ("P2", MISS_P2[model])):
            assert summaries[(model, strategy)].miss_count == expected
            fig3 = histogram[(model, strategy)]
            assert sum(fig3.values()) == expected
    assert summaries[("G4", "P1")].miss_count == 16
    assert summaries[("GFL", "P1")].miss_count == 0
    assert summaries[("GFL", "P2")].miss_count == 0

    p1_total = sum(MISS_P1.values())
    p2_total = sum(MISS_P2.values())
    assert sum(summaries[(m, "P1")].miss_count for m in MODELS) == p1_total == 29
    assert sum(summaries[(m, "P2")].miss_count for m in MODELS) == p2_total == 2
    assert p2_total < p1_total
    ok(
        "miss accounting: per-cell miss counts exact, "
        f"P2 total {p2_total} < P1 total {p1_total}"
    )


# --- 6. stratification -----------------------------------------------------------


def test_stratification():
    measurements = []
    truths = {}
    strata = {}

    def add(sample_id, error, label, truth=4.0):
        pred = truth + error
        truths[sample_id] = truth
        strata[sample_id] = label
        measurements.append(
            Measurement(sample_id, "G4", "P2", pred, pred, False, MISS_NONE)
        )

    # hand: |errors| {0.5, 0.5, 1.0, 1.0} -> MAE exactly 0.75
    for i, error in enumerate((0.5, -0.5, 1.0, -1.0)):
        add(f"hand{i}", error, "hand")
    # unspecified: 27 x 1.5 + 23 x 2.0 = 86.5 over 50 -> MAE exactly 1.73
    for i in range(27):
        add(f"unsp{i:02d}", 1.5 if i % 2 else -1.5, "unspecified_or_other")
    for i in range(23):
        add(f"unsq{i:02d}", 2.0 if i % 2 else -2.0, "unspecified_or_other")
    # a single-sample stratum must come back flagged as not generalizable
    add("fruit0", 2.0, "fruit")

    out = stratify(measurements, truths, strata)
    hand = out[("G4", "P2", "hand")]
    unspecified = out[("G4", "P2", "unspecified_or_other")]
    fruit = out[("G4", "P2", "fruit")]
    assert hand.mae_cm == 0.75
    assert unspecified.mae_cm == 1.73
    assert (hand.n, unspecified.n, fruit.n) == (4, 50, 1)
    assert fruit.small_sample and not hand.small_sample
    assert hand.mae_cm < unspecified.mae_cm
    ok("stratification: hand MAE 0.75 and unspecified MAE 1.73 exact, n=1 flagged")


# --- 7. resumability -------------------------------------------------------------


class _InterruptAfter:
    def __init__(self, inner, budget):
        self.inner = inner
        self.budget = budget

    def __call__(self, request):
        if self.budget <= 0:
            raise KeyboardInterrupt
        self.budget -= 1
        return self.inner(request)


def test_resumability(tmp_path):
    tree = build_golden_tree(tmp_path / "tree", models=("GFL",), strategies=("P1",))
    config = load_config(tree.config_path)
    config.prompts_dir = str(PROMPTS_DIR)
    config.max_concurrency = 1
    grid_size = len(SAMPLE_IDS)

    script = tree.root / "mock_GFL.json"
    first_mock = MockBackend.from_script_file(script)
    gateway = Gateway(config.cache_dir, backoff_base=0.0, sleeper=lambda _: None)
    gateway.register("GFL", _InterruptAfter(first_mock, 9))
    with pytest.raises(KeyboardInterrupt):
        run(config, gateway=gateway)
    assert first_mock.calls == 9

    resume_mock = MockBackend.from_script_file(script)
    resume_gateway = Gateway(config.cache_dir, backoff_base=0.0, sleeper=lambda _: None)
    resume_gateway.register("GFL", resume_mock)
    resumed = run(config, gateway=resume_gateway)
    assert len(resumed.cells) == grid_size
    assert first_mock.calls + resume_mock.calls == grid_size  # no duplicate live calls
    resumed_report = report_run(resumed.run_dir, tmp_path / "resumed-report")

    # uninterrupted control run on a cold cache
    control_config = load_config(tree.config_path)
    control_config.prompts_dir = str(PROMPTS_DIR)
    control_config.cache_dir = str(tmp_path / "cold-cache")
    control_config.output_dir = str(tmp_path / "cold-runs")
    control = run(control_config)
    control_report = report_run(control.run_dir, tmp_path / "control-report")

    assert [c.measurement for c in control.cells] == [c.measurement for c in resumed.cells]
    assert control_report.metrics_csv.read_bytes() == resumed_report.metrics_csv.read_bytes()
    ok(
        f"resumability: {first_mock.calls}+{resume_mock.calls} live calls == "
        f"grid {grid_size}, resumed metrics byte-identical to uninterrupted run"
    )


# --- 8. dataset statistics -------------------------------------------------------


def test_dataset_stats(tmp_path):
    fixture = json.loads((FIXTURES_DIR / "truth_histogram.json").read_text())
    samples = []
    distances = {}
    index = 0
    for bin_entry in fixture["bins"]:
        for series in ("close_up", "distant"):
            for _ in range(bin_entry[series]):
                sid = f"h{index:03d}"
                samples.append(Sample(sid, sid, f"img{index}.jpg", bin_entry["diameter_cm"]))
                distances[sid] = series
                index += 1
    assert len(samples) == fixture["n"] == 474

    stats = compute_stats(samples, distances)

    # independent one-pass verification
    total = math.fsum(s.truth_diameter_cm for s in samples)
    independent_mean = total / len(samples)
    assert abs(stats.mean_cm - independent_mean) <= 1e-12
    close = sum(1 for sid in distances if distances[sid] == "close_up")
    assert stats.close_up_fraction == close / 474

    assert abs(stats.mean_cm - 4.17) <= 0.05
    assert stats.min_cm == 2.0
    assert stats.max_cm == 11.0
    assert abs(stats.close_up_fraction - 0.774) <= 0.005
    assert (stats.q1_cm, stats.q3_cm) == (3.0, 5.0)
    histogram_total = sum(
        count for series in stats.histogram.values() for count in series.values()
    )
    assert histogram_total == 474
    ok(
        f"dataset stats: mean {stats.mean_cm:.3f} (within 4.17 +/- 0.05), min 2, max 11, "
        f"close-up {stats.close_up_fraction:.4f} (within 0.774 +/- 0.005)"
    )


# --- secondary: annotation round trip through the UI flow -------------------------


def test_secondary_ui_annotation_roundtrip(tmp_path):
    """Replays the browser flow's exact request sequence against a live app.

    The UI consumes only the JSON API, so its labeling loop is five PUTs plus
    flag POSTs; this drives them end to end and checks the stored artifacts.
    """
    from fastapi.testclient import TestClient

    from hailgauge.server import build_state, create_app, read_rerun_list

    tree = build_golden_tree(
        tmp_path / "tree", models=("GFL",), strategies=("P1",)
    )
    # start from an empty annotations file, as a fresh labeling session would
    fresh_annotations = tmp_path / "annotations.jsonl"
    config = load_config(tree.config_path)
    config.prompts_dir = str(PROMPTS_DIR)
    config.annotations_path = str(fresh_annotations)
    record = run(config)

    state = build_state(record.run_dir)
    client = TestClient(create_app(state))

    plan = [
        ("hand", "close_up"),
        ("hand", "distant"),
        ("ruler", "close_up"),
        ("coin_or_bottle_cap", "close_up"),
        ("unspecified_or_other", "distant"),
    ]
    for sid, (reference, distance) in zip(SAMPLE_IDS, plan):
        response = client.put(
            f"/api/annotations/{sid}",
            json={"reference": reference, "distance": distance, "annotator": "ui"},
        )
        assert response.status_code == 200

    lines = [
        json.loads(line)
        for line in fresh_annotations.read_text().splitlines()
        if line.strip()
    ]
    assert len(lines) == 5
    assert {line["sample_id"] for line in lines} == set(SAMPLE_IDS[:5])

    metrics = client.get("/api/metrics").json()
    counts = metrics["annotation_counts"]
    assert counts["hand"] == 2
    assert counts["ruler"] == 1
    assert counts["coin_or_bottle_cap"] == 1
    assert counts["unspecified_or_other"] == 1
    assert metrics["unannotated"] == len(SAMPLE_IDS) - 5

    client.post(f"/api/flags/{SAMPLE_IDS[0]}")
    client.post(f"/api/flags/{SAMPLE_IDS[3]}")
    client.post(f"/api/flags/{SAMPLE_IDS[0]}")  # toggle off
    exported = read_rerun_list(record.run_dir / "rerun.jsonl")
    assert exported == [SAMPLE_IDS[3]]
    ok(
        "secondary UI round trip: 5 labels persisted, /api/metrics counts match, "
        "rerun export reflects flags"
    )
