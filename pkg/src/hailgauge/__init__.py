"""hailgauge: hailstone diameter measurement from crowd-sourced photographs.

Batch pipeline and library that sends hail photos to multimodal model
endpoints with single-stage (P1) and two-stage reference-object-conditioned
(P2) prompting, parses free-text replies into 0.5 cm measurements, and scores
them against ground truth (MAE, RMSE, bias, Pearson r, miss counts), with a
human review server for the two manual annotations.
"""

from .annotations import Annotation, AnnotationStore
from .dataset import HailEvent, Sample, build_samples, compute_stats, load_events
from .gateway import Gateway, MockBackend, ModelEndpoint, VisionOutcome, VisionRequest
from .metrics import MetricSummary, miss_histogram, signed_errors, stratify, summarize
from .parsing import Measurement, extract_first_number, round_to_half_cm, to_measurement
from .config import RunConfig, load_config
from .prompts import PromptEngine, ReferenceSpec, StrategyTrace
from .runner import run, validate_config

__version__ = "0.1.0"

__all__ = [
    "Annotation",
    "AnnotationStore",
    "Gateway",
    "HailEvent",
    "Measurement",
    "MetricSummary",
    "MockBackend",
    "ModelEndpoint",
    "PromptEngine",
    "ReferenceSpec",
    "RunConfig",
    "Sample",
    "StrategyTrace",
    "VisionOutcome",
    "VisionRequest",
    "build_samples",
    "compute_stats",
    "extract_first_number",
    "load_config",
    "load_events",
    "miss_histogram",
    "round_to_half_cm",
    "run",
    "signed_errors",
    "stratify",
    "summarize",
    "to_measurement",
    "validate_config",
]
