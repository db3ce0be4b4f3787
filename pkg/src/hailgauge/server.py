"""JSON HTTP API plus static assets for the human review UI.

Read-only except annotation upserts and flag toggles. Annotation writes go
through the store's single writer; the run log is an immutable snapshot taken
at startup. Images are served through the API, never by filesystem path.
"""

from __future__ import annotations

import json
import mimetypes
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Set

from fastapi import FastAPI, HTTPException
from fastapi.responses import FileResponse, HTMLResponse
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel

from .annotations import (
    DISTANCE_CLASSES,
    REFERENCE_CLASSES,
    Annotation,
    AnnotationError,
    AnnotationStore,
)
from .dataset import Sample, load_samples
from .metrics import summarize_by_cell
from .prompts import STRATEGY_P2
from .runner import LoadedRun, load_run

DEFAULT_OUTLIER_THRESHOLD_CM = 2.0
FLAGS_FILE = "flags.json"
RERUN_FILE = "rerun.jsonl"


class ServerError(RuntimeError):
    pass


@dataclass
class ReviewState:
    run_dir: Path
    loaded: LoadedRun
    samples: Dict[str, Sample]
    store: AnnotationStore
    policy: str
    outlier_threshold: float = DEFAULT_OUTLIER_THRESHOLD_CM
    flags: Set[str] = field(default_factory=set)
    _flag_lock: threading.Lock = field(default_factory=threading.Lock)

    @property
    def truths(self) -> Dict[str, float]:
        return {sid: s.truth_diameter_cm for sid, s in self.samples.items()}

    def flags_path(self) -> Path:
        return self.run_dir / FLAGS_FILE

    def toggle_flag(self, sample_id: str) -> bool:
        with self._flag_lock:
            if sample_id in self.flags:
                self.flags.discard(sample_id)
                flagged = False
            else:
                self.flags.add(sample_id)
                flagged = True
            self.flags_path().write_text(
                json.dumps(sorted(self.flags)) + "\n", encoding="utf-8"
            )
        return flagged


def build_state(
    run_dir: Path | str,
    samples_path: Optional[str] = None,
    annotations_path: Optional[str] = None,
    *,
    outlier_threshold: float = DEFAULT_OUTLIER_THRESHOLD_CM,
) -> ReviewState:
    """Load the run snapshot; dataset and annotation paths default to the run config."""
    run_dir = Path(run_dir)
    loaded = load_run(run_dir)
    config = loaded.config
    samples_path = samples_path or config.get("samples_path")
    if not samples_path:
        raise ServerError("no dataset path: pass one or record it in the run config")
    samples = {s.sample_id: s for s in load_samples(samples_path)}
    annotations_path = annotations_path or config.get("annotations_path")
    store = AnnotationStore(annotations_path, known_sample_ids=samples.keys())
    state = ReviewState(
        run_dir=run_dir,
        loaded=loaded,
        samples=samples,
        store=store,
        policy=config.get("scoring_policy", "paper_zero"),
        outlier_threshold=outlier_threshold,
    )
    flags_path = state.flags_path()
    if flags_path.is_file():
        state.flags = set(json.loads(flags_path.read_text(encoding="utf-8")))
    return state


class AnnotationBody(BaseModel):
    reference: str
    distance: str
    annotator: str = "ui"
    raw_object: Optional[str] = None


def _review_item(state: ReviewState, sample_id: str) -> dict:
    sample = state.samples[sample_id]
    annotation = state.store.current(sample_id)
    measurements = []
    outlier = False
    for cell in state.loaded.cells:
        if cell.sample_id != sample_id:
            continue
        m = cell.measurement
        if m.miss_reason == "provider_failure":
            error = None
        elif m.miss:
            error = 0.0 - sample.truth_diameter_cm if state.policy == "paper_zero" else None
        else:
            error = (m.value_cm_rounded or 0.0) - sample.truth_diameter_cm
        if error is not None and abs(error) > state.outlier_threshold:
            outlier = True
        measurements.append(
            {
                "model_id": m.model_id,
                "strategy": m.strategy,
                "pred_cm": m.value_cm_rounded,
                "error_cm": error,
                "miss": m.miss,
                "miss_reason": m.miss_reason,
                "step1_class": (
                    cell.trace.step1_class if cell.trace.strategy == STRATEGY_P2 else None
                ),
                "degraded_step1": cell.trace.degraded_step1,
            }
        )
    return {
        "sample_id": sample_id,
        "event_id": sample.event_id,
        "truth_cm": sample.truth_diameter_cm,
        "image_url": f"/api/images/{sample_id}",
        "annotation": annotation.to_dict() if annotation else None,
        "measurements": measurements,
        "outlier": outlier,
        "flagged": sample_id in state.flags,
    }


def export_rerun_list(state: ReviewState, path: Optional[Path | str] = None) -> Path:
    """Write flagged sample ids as JSON Lines for ``hailgauge run --only``."""
    path = Path(path) if path is not None else state.run_dir / RERUN_FILE
    lines = [f"# hailgauge rerun list run={state.loaded.run_id}"]
    lines += [json.dumps({"sample_id": sid}) for sid in sorted(state.flags)]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8", newline="\n")
    return path


def read_rerun_list(path: Path | str) -> List[str]:
    ids: List[str] = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        data = json.loads(line)
        ids.append(data["sample_id"] if isinstance(data, dict) else str(data))
    return ids


def create_app(state: ReviewState, static_dir: Optional[Path | str] = None) -> FastAPI:
    app = FastAPI(title="hailgauge review")

    @app.get("/api/samples")
    def list_samples(
        limit: int = 50,
        offset: int = 0,
        reference: Optional[str] = None,
        distance: Optional[str] = None,
        outliers_only: bool = False,
        unannotated_only: bool = False,
    ) -> dict:
        items = []
        for sample_id in sorted(state.samples):
            item = _review_item(state, sample_id)
            annotation = item["annotation"]
            if reference is not None and (
                annotation is None or annotation["reference"] != reference
            ):
                continue
            if distance is not None and (
                annotation is None or annotation["distance"] != distance
            ):
                continue
            if outliers_only and not item["outlier"]:
                continue
            if unannotated_only and annotation is not None:
                continue
            items.append(item)
        total = len(items)
        return {
            "total": total,
            "offset": offset,
            "items": items[offset : offset + max(limit, 0)],
            "outlier_threshold_cm": state.outlier_threshold,
        }

    @app.get("/api/samples/{sample_id}")
    def get_sample(sample_id: str) -> dict:
        if sample_id not in state.samples:
            raise HTTPException(status_code=404, detail="unknown sample")
        return _review_item(state, sample_id)

    @app.get("/api/images/{sample_id}")
    def get_image(sample_id: str):
        sample = state.samples.get(sample_id)
        if sample is None:
            raise HTTPException(status_code=404, detail="unknown sample")
        path = Path(sample.image_path)
        if not path.is_file():
            raise HTTPException(status_code=404, detail="image file missing")
        media_type = mimetypes.guess_type(path.name)[0] or "image/jpeg"
        return FileResponse(path, media_type=media_type)

    @app.put("/api/annotations/{sample_id}")
    def put_annotation(sample_id: str, body: AnnotationBody) -> dict:
        if sample_id not in state.samples:
            raise HTTPException(status_code=404, detail="unknown sample")
        if body.reference not in REFERENCE_CLASSES:
            raise HTTPException(status_code=400, detail="invalid reference class")
        if body.distance not in DISTANCE_CLASSES:
            raise HTTPException(status_code=400, detail="invalid distance class")
        from datetime import datetime, timezone

        try:
            annotation = state.store.upsert(
                Annotation(
                    sample_id=sample_id,
                    reference=body.reference,
                    distance=body.distance,
                    annotator=body.annotator,
                    updated_at=datetime.now(timezone.utc),
                    raw_object=body.raw_object,
                )
            )
        except AnnotationError as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from exc
        return {"annotation": annotation.to_dict()}

    @app.post("/api/flags/{sample_id}")
    def toggle_flag(sample_id: str) -> dict:
        if sample_id not in state.samples:
            raise HTTPException(status_code=404, detail="unknown sample")
        flagged = state.toggle_flag(sample_id)
        export_rerun_list(state)
        return {"sample_id": sample_id, "flagged": flagged}

    @app.get("/api/metrics")
    def get_metrics() -> dict:
        summaries = summarize_by_cell(
            state.loaded.measurements, state.truths, state.policy
        )
        counts, unannotated = state.store.counts(state.samples.keys())
        return {
            "run_id": state.loaded.run_id,
            "policy": state.policy,
            "summaries": [s.to_dict() for s in summaries],
            "annotation_counts": counts,
            "unannotated": unannotated,
            "n_samples": len(state.samples),
            "flagged": sorted(state.flags),
        }

    @app.get("/api/runs")
    def list_runs() -> list:
        return [
            {
                "run_id": state.loaded.run_id,
                "config_hash": state.loaded.config_hash,
                "cells": len(state.loaded.cells),
                "samples": len(state.samples),
            }
        ]

    if static_dir is not None and Path(static_dir).is_dir():
        app.mount("/", StaticFiles(directory=str(static_dir), html=True), name="ui")
    else:

        @app.get("/", response_class=HTMLResponse)
        def index() -> str:
            return (
                "<!doctype html><title>hailgauge review</title>"
                "<h1>hailgauge review API</h1>"
                "<p>No UI build found. The JSON API lives under <code>/api/</code>; "
                "build the frontend and pass its dist directory to serve the UI.</p>"
            )

    return app


def serve(
    run_dir: Path | str,
    samples_path: Optional[str] = None,
    annotations_path: Optional[str] = None,
    *,
    host: str = "127.0.0.1",
    port: int = 8707,
    static_dir: Optional[Path | str] = None,
    outlier_threshold: float = DEFAULT_OUTLIER_THRESHOLD_CM,
) -> None:
    """Run the review server until interrupted (loopback bind by default)."""
    import uvicorn

    state = build_state(
        run_dir,
        samples_path,
        annotations_path,
        outlier_threshold=outlier_threshold,
    )
    app = create_app(state, static_dir=static_dir)
    uvicorn.run(app, host=host, port=port, log_level="warning")
