"""Drive a full (model x strategy x sample) grid with bounded concurrency.

Every cell is attempted exactly once per run and failures are recorded, never
fatal. The run log is JSON Lines flushed per cell behind a single writer, so a
killed run loses at most in-flight cells; resuming replays finished calls from
the gateway cache instead of re-dispatching them.
"""

from __future__ import annotations

import json
import os
import threading
import time
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Tuple

from .annotations import AnnotationStore
from .config import RunConfig
from .dataset import Sample, load_samples
from .gateway import Gateway, ImageError, ModelEndpoint, normalize_image
from .metrics import POLICIES
from .parsing import Measurement, to_measurement
from .prompts import STRATEGIES, PromptEngine, StrategyTrace

RUN_LOG_NAME = "run_log.jsonl"
MEASUREMENTS_NAME = "measurements.jsonl"


class RunnerError(RuntimeError):
    pass


@dataclass(frozen=True)
class Finding:
    level: str  # "error" | "warning"
    message: str


@dataclass
class CellResult:
    model_id: str
    strategy: str
    sample_id: str
    trace: StrategyTrace
    measurement: Measurement
    elapsed_ms: int

    @property
    def key(self) -> Tuple[str, str, str]:
        return (self.model_id, self.strategy, self.sample_id)

    def to_dict(self) -> dict:
        return {
            "kind": "cell",
            "model_id": self.model_id,
            "strategy": self.strategy,
            "sample_id": self.sample_id,
            "trace": self.trace.to_dict(),
            "measurement": self.measurement.to_dict(),
            "elapsed_ms": self.elapsed_ms,
        }


@dataclass
class RunRecord:
    run_id: str
    run_dir: Path
    config_hash: str
    cells: List[CellResult]
    wall_clock_s: float

    @property
    def measurements(self) -> List[Measurement]:
        return [cell.measurement for cell in self.cells]

    @property
    def failed_cells(self) -> List[CellResult]:
        return [c for c in self.cells if c.trace.step2_status != "ok"]


def validate_config(config: RunConfig) -> List[Finding]:
    """Static checks before any dispatch; errors abort, warnings do not."""
    findings: List[Finding] = []
    if not Path(config.samples_path).is_file():
        findings.append(Finding("error", f"dataset not found: {config.samples_path}"))
    if config.annotations_path and not Path(config.annotations_path).is_file():
        findings.append(
            Finding("warning", f"annotations file not found: {config.annotations_path}")
        )
    if not config.endpoints:
        findings.append(Finding("error", "no endpoints configured"))
    if not config.strategies:
        findings.append(Finding("error", "no strategies configured"))
    for strategy in config.strategies:
        if strategy not in STRATEGIES:
            findings.append(Finding("error", f"unknown strategy token: {strategy!r}"))
    if config.scoring_policy not in POLICIES:
        findings.append(
            Finding("error", f"unknown scoring policy: {config.scoring_policy!r}")
        )
    if config.max_concurrency < 1:
        findings.append(Finding("error", "max_concurrency must be >= 1"))
    seen_models = set()
    for endpoint in config.endpoints:
        if endpoint.model_id in seen_models:
            findings.append(Finding("error", f"duplicate model_id {endpoint.model_id!r}"))
        seen_models.add(endpoint.model_id)
        if endpoint.adapter == "mock":
            if endpoint.mock_script and not Path(endpoint.mock_script).is_file():
                findings.append(
                    Finding("error", f"mock script not found: {endpoint.mock_script}")
                )
        else:
            if not endpoint.base_url:
                findings.append(
                    Finding("error", f"endpoint {endpoint.model_id} has no base_url")
                )
            if not endpoint.auth_env_var or not os.environ.get(endpoint.auth_env_var):
                findings.append(
                    Finding(
                        "error",
                        f"endpoint {endpoint.model_id}: auth env var "
                        f"{endpoint.auth_env_var or '<unset>'} is not set",
                    )
                )
    if config.prompts_dir and not Path(config.prompts_dir).is_dir():
        findings.append(Finding("error", f"prompts dir not found: {config.prompts_dir}"))
    return findings


def _load_normalized_images(samples: List[Sample]) -> Dict[str, bytes]:
    """Normalize each sample image once; all grid cells share the bytes."""
    images: Dict[str, bytes] = {}
    for sample in samples:
        images[sample.sample_id] = normalize_image(Path(sample.image_path).read_bytes())
    return images


def run(
    config: RunConfig,
    *,
    gateway: Optional[Gateway] = None,
    engine: Optional[PromptEngine] = None,
) -> RunRecord:
    """Execute the full grid and write the run log and measurements files."""
    errors = [f for f in validate_config(config) if f.level == "error"]
    if errors:
        raise RunnerError(
            "invalid config: " + "; ".join(f.message for f in errors)
        )
    engine = engine or PromptEngine(config.prompts_dir)
    config.prompt_hashes = engine.template_hashes()
    config_hash = config.config_hash()
    run_id = config.run_id or f"run-{config_hash[:12]}"

    samples = load_samples(config.samples_path)
    if config.only_samples is not None:
        wanted = set(config.only_samples)
        samples = [s for s in samples if s.sample_id in wanted]
    if not samples:
        raise RunnerError("no samples selected")

    gateway = gateway or Gateway(config.cache_dir)
    endpoints: Dict[str, ModelEndpoint] = {}
    for endpoint in config.endpoints:
        endpoints[endpoint.model_id] = endpoint
        gateway.register_endpoint(endpoint)

    images = _load_normalized_images(samples)
    sample_by_id = {s.sample_id: s for s in samples}
    grid = sorted(
        (model_id, strategy, sample.sample_id)
        for model_id in endpoints
        for strategy in config.strategies
        for sample in samples
    )

    run_dir = Path(config.output_dir) / run_id
    run_dir.mkdir(parents=True, exist_ok=True)
    log_path = run_dir / RUN_LOG_NAME
    log_lock = threading.Lock()
    started = time.monotonic()

    def execute_cell(cell: Tuple[str, str, str]) -> CellResult:
        model_id, strategy, sample_id = cell
        cell_start = time.monotonic()
        sample = sample_by_id[sample_id]
        try:
            trace = engine.execute_strategy(
                sample,
                strategy,
                endpoints[model_id],
                gateway,
                image_bytes=images[sample_id],
            )
        except ImageError:
            # Undecodable input models the provider-side encoding failure.
            trace = _rejected_trace(sample_id, model_id, strategy, engine)
        measurement = to_measurement(
            trace,
            max_plausible_cm=config.max_plausible_cm,
            convert_mm=config.convert_mm,
        )
        return CellResult(
            model_id=model_id,
            strategy=strategy,
            sample_id=sample_id,
            trace=trace,
            measurement=measurement,
            elapsed_ms=int((time.monotonic() - cell_start) * 1000),
        )

    cells: List[CellResult] = []
    with log_path.open("w", encoding="utf-8", newline="\n") as log:
        log.write(
            json.dumps(
                {
                    "kind": "header",
                    "run_id": run_id,
                    "config_hash": config_hash,
                    "config": config.canonical_dict(),
                }
            )
            + "\n"
        )
        log.flush()

        def record(result: CellResult) -> None:
            with log_lock:
                log.write(json.dumps(result.to_dict()) + "\n")
                log.flush()
            cells.append(result)

        if config.max_concurrency == 1:
            for cell in grid:
                record(execute_cell(cell))
        else:
            with ThreadPoolExecutor(max_workers=config.max_concurrency) as pool:
                futures = [pool.submit(execute_cell, cell) for cell in grid]
                for future in as_completed(futures):
                    record(future.result())

    cells.sort(key=lambda c: c.key)
    measurements_path = run_dir / MEASUREMENTS_NAME
    with measurements_path.open("w", encoding="utf-8", newline="\n") as fh:
        for cell in cells:
            fh.write(json.dumps(cell.measurement.to_dict()) + "\n")
    return RunRecord(
        run_id=run_id,
        run_dir=run_dir,
        config_hash=config_hash,
        cells=cells,
        wall_clock_s=time.monotonic() - started,
    )


def _rejected_trace(
    sample_id: str, model_id: str, strategy: str, engine: PromptEngine
) -> StrategyTrace:
    if strategy == "P1":
        return StrategyTrace(
            sample_id=sample_id,
            model_id=model_id,
            strategy=strategy,
            step2_prompt=engine.build_p1_prompt(),
            step2_raw=None,
            step2_status="provider_rejection",
        )
    return StrategyTrace(
        sample_id=sample_id,
        model_id=model_id,
        strategy=strategy,
        step2_prompt=engine.build_p2_step2_prompt(
            engine.reference_specs["unspecified"]
        ),
        step2_raw=None,
        step2_status="provider_rejection",
        step1_prompt=engine.build_p2_step1_prompt(),
        step1_raw=None,
        step1_class="unspecified",
        step1_status="provider_rejection",
        step1_cached=False,
        degraded_step1=True,
    )


@dataclass
class LoadedRun:
    run_id: str
    config_hash: str
    config: dict
    cells: List[CellResult]

    @property
    def measurements(self) -> List[Measurement]:
        return [cell.measurement for cell in self.cells]

    @property
    def traces(self) -> List[StrategyTrace]:
        return [cell.trace for cell in self.cells]


def load_run(run_dir: Path | str) -> LoadedRun:
    """Read a run log back into memory, cells sorted by (model, strategy, sample)."""
    run_dir = Path(run_dir)
    log_path = run_dir / RUN_LOG_NAME
    if not log_path.is_file():
        raise RunnerError(f"not a run directory (no {RUN_LOG_NAME}): {run_dir}")
    header: Optional[dict] = None
    cells: List[CellResult] = []
    for line in log_path.read_text(encoding="utf-8").splitlines():
        if not line.strip():
            continue
        data = json.loads(line)
        if data.get("kind") == "header":
            header = data
        elif data.get("kind") == "cell":
            cells.append(
                CellResult(
                    model_id=data["model_id"],
                    strategy=data["strategy"],
                    sample_id=data["sample_id"],
                    trace=StrategyTrace.from_dict(data["trace"]),
                    measurement=Measurement.from_dict(data["measurement"]),
                    elapsed_ms=data.get("elapsed_ms", 0),
                )
            )
    if header is None:
        raise RunnerError(f"run log has no header line: {log_path}")
    cells.sort(key=lambda c: c.key)
    return LoadedRun(
        run_id=header["run_id"],
        config_hash=header["config_hash"],
        config=header.get("config", {}),
        cells=cells,
    )


def load_annotation_store(loaded_config: dict | RunConfig) -> Optional[AnnotationStore]:
    path = (
        loaded_config.annotations_path
        if isinstance(loaded_config, RunConfig)
        else loaded_config.get("annotations_path")
    )
    if not path or not Path(path).is_file():
        return None
    return AnnotationStore(path)
