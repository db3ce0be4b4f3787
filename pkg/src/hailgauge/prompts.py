"""Prompting strategies P1 (single stage) and P2 (two stage).

P2 first asks which reference object is visible, then conditions the size
question on that answer: known-dimensions wording for hand/coin/lighter-style
objects, direct-reading wording for rulers, and contextual-cue wording when
nothing usable is in frame. Templates are plain text files with byte-exact
defaults shipped in ``prompts/`` and hash-pinned into run logs.
"""

from __future__ import annotations

import hashlib
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Optional

from .gateway import (
    STATUS_OK,
    Gateway,
    ModelEndpoint,
    VisionRequest,
    normalize_image,
)

STRATEGY_P1 = "P1"
STRATEGY_P2 = "P2"
STRATEGIES = (STRATEGY_P1, STRATEGY_P2)

TEMPLATE_FILES = {
    "p1": "p1.txt",
    "p2_step1": "p2_step1.txt",
    "p2_step2_known": "p2_step2_known.txt",
    "p2_step2_ruler": "p2_step2_ruler.txt",
    "p2_step2_unspecified": "p2_step2_unspecified.txt",
}

UNSPECIFIED_TOKEN = "unspecified"


class PromptError(ValueError):
    pass


@dataclass(frozen=True)
class ReferenceSpec:
    """One reference-object vocabulary entry for P2 routing."""

    class_token: str
    display_name: str
    typical_dimensions_text: str = ""
    canonical_size_cm: Optional[float] = None

    def __post_init__(self) -> None:
        if self.class_token != self.class_token.lower() or " " in self.class_token:
            raise PromptError(f"class_token must be one lowercase word: {self.class_token!r}")


# Typical-dimension wordings are artifact configuration, overridable per run.
DEFAULT_REFERENCE_SPECS = {
    "hand": ReferenceSpec("hand", "hand", "an average adult palm width of about 8.5 cm", 8.5),
    "coin": ReferenceSpec("coin", "coin", "a typical coin diameter of about 2.5 cm", 2.5),
    "lighter": ReferenceSpec("lighter", "lighter", "a disposable lighter height of about 8 cm", 8.0),
    "bottlecap": ReferenceSpec("bottlecap", "bottle cap", "a bottle cap diameter of about 3 cm", 3.0),
    "ruler": ReferenceSpec("ruler", "ruler"),
    UNSPECIFIED_TOKEN: ReferenceSpec(UNSPECIFIED_TOKEN, "unspecified"),
}

# Step-1 replies are uncontrolled vocabulary; fold common variants together.
SYNONYMS = {
    "palm": "hand",
    "fingers": "hand",
    "finger": "hand",
    "cent": "coin",
    "euro": "coin",
    "quarter": "coin",
    "cap": "bottlecap",
    "bottle": "bottlecap",
    "bottlecap": "bottlecap",
    "tape": "ruler",
    "measuring": "ruler",
}

_TOKEN_CLEANER = re.compile(r"[^a-z0-9\s-]")


def normalize_step1_token(raw: str) -> str:
    """Lowercase, strip punctuation, take the first word, drop inner hyphens."""
    cleaned = _TOKEN_CLEANER.sub(" ", (raw or "").lower())
    words = cleaned.split()
    if not words:
        return ""
    return words[0].replace("-", "")


@dataclass
class StrategyTrace:
    """Full record of one strategy execution against one sample.

    P1 traces never carry step-1 fields; the single exchange lives in the
    step-2 slots. P2 traces always carry step-1 fields, including failures.
    """

    sample_id: str
    model_id: str
    strategy: str
    step2_prompt: str
    step2_raw: Optional[str]
    step2_status: str
    step2_cached: bool = False
    step1_prompt: Optional[str] = None
    step1_raw: Optional[str] = None
    step1_class: Optional[str] = None
    step1_status: Optional[str] = None
    step1_cached: Optional[bool] = None
    degraded_step1: bool = False

    def __post_init__(self) -> None:
        has_step1 = self.step1_prompt is not None
        if (self.strategy == STRATEGY_P1) == has_step1:
            raise PromptError("step-1 fields are present exactly for P2 traces")

    def to_dict(self) -> dict:
        record = {
            "sample_id": self.sample_id,
            "model_id": self.model_id,
            "strategy": self.strategy,
            "step2_prompt": self.step2_prompt,
            "step2_raw": self.step2_raw,
            "step2_status": self.step2_status,
            "step2_cached": self.step2_cached,
        }
        if self.strategy == STRATEGY_P2:
            record.update(
                step1_prompt=self.step1_prompt,
                step1_raw=self.step1_raw,
                step1_class=self.step1_class,
                step1_status=self.step1_status,
                step1_cached=self.step1_cached,
                degraded_step1=self.degraded_step1,
            )
        return record

    @classmethod
    def from_dict(cls, data: dict) -> "StrategyTrace":
        return cls(
            sample_id=data["sample_id"],
            model_id=data["model_id"],
            strategy=data["strategy"],
            step2_prompt=data["step2_prompt"],
            step2_raw=data.get("step2_raw"),
            step2_status=data["step2_status"],
            step2_cached=data.get("step2_cached", False),
            step1_prompt=data.get("step1_prompt"),
            step1_raw=data.get("step1_raw"),
            step1_class=data.get("step1_class"),
            step1_status=data.get("step1_status"),
            step1_cached=data.get("step1_cached"),
            degraded_step1=data.get("degraded_step1", False),
        )


def default_template_dir() -> Path:
    """Repo-root ``prompts/`` next to this package (editable-install layout)."""
    return Path(__file__).resolve().parents[2] / "prompts"


class PromptEngine:
    """Loads the five templates once and renders prompts as pure functions."""

    def __init__(
        self,
        template_dir: Optional[Path | str] = None,
        reference_specs: Optional[Dict[str, ReferenceSpec]] = None,
    ) -> None:
        self.template_dir = Path(template_dir) if template_dir else default_template_dir()
        if not self.template_dir.is_dir():
            raise PromptError(f"prompt template directory not found: {self.template_dir}")
        self.templates: Dict[str, str] = {}
        self._hashes: Dict[str, str] = {}
        for name, filename in TEMPLATE_FILES.items():
            path = self.template_dir / filename
            if not path.is_file():
                raise PromptError(f"missing prompt template: {path}")
            data = path.read_bytes()
            self.templates[name] = data.decode("utf-8").rstrip("\n")
            self._hashes[name] = hashlib.sha256(data).hexdigest()
        self.reference_specs = dict(reference_specs or DEFAULT_REFERENCE_SPECS)
        if UNSPECIFIED_TOKEN not in self.reference_specs:
            raise PromptError("reference specs must include the unspecified fallback")

    def template_hashes(self) -> Dict[str, str]:
        return dict(self._hashes)

    def build_p1_prompt(self) -> str:
        return self.templates["p1"]

    def build_p2_step1_prompt(self) -> str:
        return self.templates["p2_step1"]

    def classify_step1_answer(self, raw: str) -> ReferenceSpec:
        """Resolve a free-form step-1 reply; unknown words fall back to unspecified."""
        token = normalize_step1_token(raw)
        token = SYNONYMS.get(token, token)
        return self.reference_specs.get(token, self.reference_specs[UNSPECIFIED_TOKEN])

    def build_p2_step2_prompt(self, spec: ReferenceSpec) -> str:
        if spec.class_token == "ruler":
            return self.templates["p2_step2_ruler"]
        if spec.class_token == UNSPECIFIED_TOKEN:
            return self.templates["p2_step2_unspecified"]
        if not spec.typical_dimensions_text:
            raise PromptError(f"reference {spec.class_token!r} lacks dimension text")
        return self.templates["p2_step2_known"].format(
            reference_name=spec.display_name,
            reference_dimensions=spec.typical_dimensions_text,
        )

    def execute_strategy(
        self,
        sample,
        strategy: str,
        endpoint: ModelEndpoint,
        gateway: Gateway,
        *,
        image_bytes: Optional[bytes] = None,
    ) -> StrategyTrace:
        """Run one strategy; gateway failures end up in the trace, not raised.

        A failed step 1 degrades to the unspecified template so step 2 still
        runs, mirroring the strategy's resilience to missing reference cues.
        """
        if strategy not in STRATEGIES:
            raise PromptError(f"unknown strategy: {strategy!r}")
        if image_bytes is None:
            image_bytes = normalize_image(Path(sample.image_path).read_bytes())
        sid = sample.sample_id
        if strategy == STRATEGY_P1:
            prompt = self.build_p1_prompt()
            outcome = gateway.send(
                VisionRequest(endpoint, prompt, image_bytes, tag=f"{sid}/p1")
            )
            return StrategyTrace(
                sample_id=sid,
                model_id=endpoint.model_id,
                strategy=STRATEGY_P1,
                step2_prompt=prompt,
                step2_raw=outcome.raw_text,
                step2_status=outcome.status,
                step2_cached=outcome.cached,
            )
        step1_prompt = self.build_p2_step1_prompt()
        step1 = gateway.send(
            VisionRequest(endpoint, step1_prompt, image_bytes, tag=f"{sid}/step1")
        )
        degraded = step1.status != STATUS_OK
        if degraded:
            spec = self.reference_specs[UNSPECIFIED_TOKEN]
        else:
            spec = self.classify_step1_answer(step1.raw_text or "")
        step2_prompt = self.build_p2_step2_prompt(spec)
        step2 = gateway.send(
            VisionRequest(endpoint, step2_prompt, image_bytes, tag=f"{sid}/step2")
        )
        return StrategyTrace(
            sample_id=sid,
            model_id=endpoint.model_id,
            strategy=STRATEGY_P2,
            step2_prompt=step2_prompt,
            step2_raw=step2.raw_text,
            step2_status=step2.status,
            step2_cached=step2.cached,
            step1_prompt=step1_prompt,
            step1_raw=step1.raw_text,
            step1_class=spec.class_token,
            step1_status=step1.status,
            step1_cached=step1.cached,
            degraded_step1=degraded,
        )


# Map step-1 vocabulary onto the annotation taxonomy for stratified metrics.
STEP1_TO_REFERENCE_CLASS = {
    "hand": "hand",
    "coin": "coin_or_bottle_cap",
    "bottlecap": "coin_or_bottle_cap",
    "ruler": "ruler",
    "lighter": "small_household_object",
    UNSPECIFIED_TOKEN: "unspecified_or_other",
}


def step1_reference_class(class_token: str) -> str:
    return STEP1_TO_REFERENCE_CLASS.get(class_token, "unspecified_or_other")
