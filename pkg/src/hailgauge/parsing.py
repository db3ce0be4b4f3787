"""Turn raw model text into a diameter measurement.

Extraction follows the first-number convention: scan left to right, take the
first standalone numeric literal, normalize comma decimals, convert mm to cm.
Replies without a usable number become misses and score as 0 cm downstream.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import TYPE_CHECKING, Optional

if TYPE_CHECKING:
    from .prompts import StrategyTrace

MISS_NONE = "none"
MISS_NO_NUMBER = "no_number"
MISS_OUT_OF_RANGE = "out_of_range"
MISS_PROVIDER_FAILURE = "provider_failure"

# Generous physical upper bound in cm; ground truths span 2-11 cm.
DEFAULT_MAX_PLAUSIBLE_CM = 50.0

_NUMERAL = re.compile(r"\d+(?:[.,]\d+)?")
_UNIT_TIGHT = re.compile(r"(mm|cm)(?![A-Za-z])", re.IGNORECASE)
_UNIT_SPACED = re.compile(r"[ \t]{1,3}(mm|cm)(?![A-Za-z])", re.IGNORECASE)


@dataclass(frozen=True)
class Measurement:
    """One scored prediction for a (sample, model, strategy) cell."""

    sample_id: str
    model_id: str
    strategy: str
    value_cm_raw: Optional[float]
    value_cm_rounded: Optional[float]
    miss: bool
    miss_reason: str = MISS_NONE

    def __post_init__(self) -> None:
        if self.miss != (self.value_cm_raw is None):
            raise ValueError("miss must be true exactly when no value is present")

    def to_dict(self) -> dict:
        return {
            "sample_id": self.sample_id,
            "model_id": self.model_id,
            "strategy": self.strategy,
            "value_cm_raw": self.value_cm_raw,
            "value_cm_rounded": self.value_cm_rounded,
            "miss": self.miss,
            "miss_reason": self.miss_reason,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Measurement":
        return cls(
            sample_id=data["sample_id"],
            model_id=data["model_id"],
            strategy=data["strategy"],
            value_cm_raw=data.get("value_cm_raw"),
            value_cm_rounded=data.get("value_cm_rounded"),
            miss=data["miss"],
            miss_reason=data.get("miss_reason", MISS_NONE),
        )


def extract_first_number(text: str, *, convert_mm: bool = True) -> Optional[float]:
    """Return the first standalone number in ``text`` as centimeters, or None.

    A numeral glued to letters ("GPT-4o", "P2", "4th") does not count; an
    attached or space-separated mm/cm unit does, and mm divides by ten.
    Comma decimal separators are read as dots. Total: never raises.
    """
    if not text:
        return None
    for match in _NUMERAL.finditer(text):
        start, end = match.span()
        prev = text[start - 1] if start > 0 else ""
        prev2 = text[start - 2] if start > 1 else ""
        if prev.isalpha():
            continue
        if prev == "-" and prev2.isalpha():
            continue
        if prev in ".," and prev2.isdigit():
            continue
        rest = text[end:]
        is_mm = False
        if rest and rest[0].isalpha():
            unit = _UNIT_TIGHT.match(rest)
            if unit is None:
                continue
            is_mm = unit.group(1).lower() == "mm"
        else:
            unit = _UNIT_SPACED.match(rest)
            is_mm = unit is not None and unit.group(1).lower() == "mm"
        value = float(match.group().replace(",", "."))
        if not math.isfinite(value):
            continue
        if prev == "-" and not prev2.isdigit():
            value = -value
        if convert_mm and is_mm:
            value /= 10.0
        return value
    return None


def round_to_half_cm(value: float) -> float:
    """Round to the nearest multiple of 0.5 cm; exact midpoints round up."""
    if not math.isfinite(value):
        raise ValueError("diameter must be finite")
    if abs(value) >= 2**51:
        # Float spacing is already >= 0.5 here, so value is an exact multiple.
        return float(value)
    return math.floor(2.0 * value + 0.5) / 2.0


def measure_text(
    sample_id: str,
    model_id: str,
    strategy: str,
    raw_text: Optional[str],
    final_status: str = "ok",
    *,
    max_plausible_cm: Optional[float] = DEFAULT_MAX_PLAUSIBLE_CM,
    convert_mm: bool = True,
) -> Measurement:
    """Apply the extraction, range-gate, and rounding conventions to one reply."""

    def miss(reason: str) -> Measurement:
        return Measurement(sample_id, model_id, strategy, None, None, True, reason)

    if final_status != "ok":
        return miss(MISS_PROVIDER_FAILURE)
    raw = extract_first_number(raw_text or "", convert_mm=convert_mm)
    if raw is None:
        return miss(MISS_NO_NUMBER)
    if max_plausible_cm is not None and not 0.0 < raw <= max_plausible_cm:
        return miss(MISS_OUT_OF_RANGE)
    return Measurement(
        sample_id,
        model_id,
        strategy,
        raw,
        round_to_half_cm(raw),
        False,
        MISS_NONE,
    )


def to_measurement(
    trace: "StrategyTrace",
    *,
    max_plausible_cm: Optional[float] = DEFAULT_MAX_PLAUSIBLE_CM,
    convert_mm: bool = True,
) -> Measurement:
    """Score a strategy trace: the final-step reply decides the measurement."""
    return measure_text(
        trace.sample_id,
        trace.model_id,
        trace.strategy,
        trace.step2_raw,
        trace.step2_status,
        max_plausible_cm=max_plausible_cm,
        convert_mm=convert_mm,
    )
