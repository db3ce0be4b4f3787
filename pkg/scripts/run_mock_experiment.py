#!/usr/bin/env python3
"""End-to-end demo on synthetic data: ingest, run, report, all offline.

Builds a 12-sample dataset with generated images, scripts two mock endpoints
(one strong with a few P1 misses, one weak with a constant low guess), runs
both strategies, and writes the full report bundle. Everything lands under
./demo; rerunning reuses the cache and reproduces identical outputs.

Usage: python scripts/run_mock_experiment.py [target_dir]
"""

from __future__ import annotations

import json
import sys
from datetime import datetime, timedelta, timezone
from pathlib import Path

from PIL import Image

from hailgauge.annotations import Annotation, AnnotationStore
from hailgauge.config import load_config
from hailgauge.dataset import Sample, write_samples
from hailgauge.reporting import report_run
from hailgauge.runner import run

TRUTHS = [2.0, 2.5, 3.0, 3.5, 4.0, 4.0, 4.5, 5.0, 5.5, 6.0, 7.0, 9.0]
REFERENCES = ["hand", "hand", "ruler", "unspecified_or_other"]


def make_image(path: Path, index: int) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    image = Image.new("RGB", (96, 72), ((index * 31) % 256, (index * 57) % 256, 90))
    image.putpixel((1, 1), (index, 200, 10))
    image.save(path, "JPEG", quality=90)


def strong_reply(truth: float, index: int) -> str:
    value = max(truth - 0.5 + 0.25 * (index % 3 - 1), 0.5)
    if index % 3 == 0:
        return str(value)
    if index % 3 == 1:
        return f"The hailstone looks like roughly {value} cm across."
    return f"about {value * 10} mm"


def main() -> None:
    root = Path(sys.argv[1]) if len(sys.argv) > 1 else Path("demo")
    root.mkdir(parents=True, exist_ok=True)

    sample_ids = [f"demo{i:02d}" for i in range(len(TRUTHS))]
    samples = []
    for i, sid in enumerate(sample_ids):
        image_path = root / "images" / f"{sid}.jpg"
        make_image(image_path, i)
        samples.append(Sample(sid, f"event{i:02d}", str(image_path), TRUTHS[i]))
    write_samples(samples, root / "samples.jsonl")

    annotations = root / "annotations.jsonl"
    if not annotations.exists():
        store = AnnotationStore(annotations, known_sample_ids=sample_ids)
        t0 = datetime(2025, 6, 1, tzinfo=timezone.utc)
        for i, sid in enumerate(sample_ids):
            store.upsert(
                Annotation(
                    sample_id=sid,
                    reference=REFERENCES[i % len(REFERENCES)],
                    distance="close_up" if i % 4 else "distant",
                    annotator="demo",
                    updated_at=t0 + timedelta(minutes=i),
                )
            )

    strong = {"default": "3.0", "samples": {}}
    weak = {"default": "2.0", "samples": {}}
    step1_cycle = ["hand", "ruler", "unspecified", "hand"]
    for i, sid in enumerate(sample_ids):
        strong["samples"][sid] = {
            "p1": "No measurable hail visible." if i in (0, 5) else strong_reply(TRUTHS[i], i),
            "step1": step1_cycle[i % 4],
            "step2": strong_reply(TRUTHS[i] + 0.25, i),
        }
        weak["samples"][sid] = {
            "p1": "2.0",
            "step1": "unspecified",
            "step2": "2,5 cm at most",
        }
    (root / "mock_strong.json").write_text(json.dumps(strong, indent=1))
    (root / "mock_weak.json").write_text(json.dumps(weak, indent=1))

    config_path = root / "config.toml"
    config_path.write_text(
        """[dataset]
samples = "samples.jsonl"
annotations = "annotations.jsonl"

[run]
strategies = ["P1", "P2"]
scoring_policy = "paper_zero"
max_concurrency = 4
output_dir = "runs"
cache_dir = "cache"

[endpoints.strong]
adapter = "mock"
mock_script = "mock_strong.json"

[endpoints.weak]
adapter = "mock"
mock_script = "mock_weak.json"
""",
        encoding="utf-8",
    )

    record = run(load_config(config_path))
    bundle = report_run(record.run_dir)
    print(f"run {record.run_id}: {len(record.cells)} cells in {record.wall_clock_s:.2f}s")
    print(f"report: {bundle.out_dir}")
    print()
    print(bundle.metrics_csv.read_text())
    print("inspect in the browser with:")
    print(f"  hailgauge serve --run {record.run_dir}")


if __name__ == "__main__":
    main()
