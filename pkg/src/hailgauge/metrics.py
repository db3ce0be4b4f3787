"""Error statistics over joined (prediction, truth) pairs.

Errors are signed prediction minus truth, so a negative bias means systematic
underestimation. Misses score as 0 cm under the default ``paper_zero`` policy;
provider failures are excluded from n under either policy.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Dict, Iterable, List, Mapping, Optional, Tuple

import numpy as np

from .parsing import MISS_PROVIDER_FAILURE, Measurement

POLICY_PAPER_ZERO = "paper_zero"
POLICY_EXCLUDE_MISSES = "exclude_misses"
POLICIES = (POLICY_PAPER_ZERO, POLICY_EXCLUDE_MISSES)

STRATUM_ALL = "all"
STRATUM_UNANNOTATED = "unannotated"


class MetricsError(ValueError):
    pass


@dataclass(frozen=True)
class MetricSummary:
    model_id: str
    strategy: str
    stratum: str
    n: int
    mae_cm: float
    rmse_cm: float
    bias_cm: float
    pearson_r: Optional[float]
    miss_count: int
    excluded_count: int
    small_sample: bool = False  # n == 1, "not generalizable"

    def to_dict(self) -> dict:
        return {
            "model_id": self.model_id,
            "strategy": self.strategy,
            "stratum": self.stratum,
            "n": self.n,
            "mae_cm": self.mae_cm,
            "rmse_cm": self.rmse_cm,
            "bias_cm": self.bias_cm,
            "pearson_r": self.pearson_r,
            "miss_count": self.miss_count,
            "excluded_count": self.excluded_count,
            "small_sample": self.small_sample,
        }


def signed_errors(
    measurements: Iterable[Measurement],
    truths: Mapping[str, float],
    policy: str = POLICY_PAPER_ZERO,
    *,
    use_raw: bool = False,
) -> List[Tuple[float, float, float]]:
    """Join predictions to truths and return (pred, truth, pred - truth) triples.

    Provider-failure measurements never enter the list. Other misses enter as
    prediction 0.0 under ``paper_zero`` and are dropped under ``exclude_misses``.
    """
    if policy not in POLICIES:
        raise MetricsError(f"unknown scoring policy: {policy!r}")
    pairs: List[Tuple[float, float, float]] = []
    for m in measurements:
        if m.sample_id not in truths:
            raise MetricsError(f"measurement for unknown sample: {m.sample_id!r}")
        truth = float(truths[m.sample_id])
        if m.miss_reason == MISS_PROVIDER_FAILURE:
            continue
        if m.miss:
            if policy == POLICY_PAPER_ZERO:
                pairs.append((0.0, truth, -truth))
            continue
        pred = m.value_cm_raw if use_raw else m.value_cm_rounded
        assert pred is not None
        pred = float(pred)
        pairs.append((pred, truth, pred - truth))
    return pairs


def _pearson(preds: np.ndarray, truths: np.ndarray) -> Optional[float]:
    if len(preds) < 2:
        return None
    if np.ptp(preds) == 0 or np.ptp(truths) == 0:
        return None
    pc = preds - preds.mean()
    tc = truths - truths.mean()
    denom = math.sqrt(float(np.dot(pc, pc)) * float(np.dot(tc, tc)))
    if denom == 0.0:
        return None
    return float(np.dot(pc, tc)) / denom


@dataclass(frozen=True)
class CoreStats:
    n: int
    mae_cm: float
    rmse_cm: float
    bias_cm: float
    pearson_r: Optional[float]


def summarize(pairs: List[Tuple[float, float, float]]) -> CoreStats:
    """MAE, RMSE, bias, and Pearson r over error triples from signed_errors."""
    if not pairs:
        raise MetricsError("cannot summarize an empty error list")
    preds = np.array([p for p, _, _ in pairs], dtype=float)
    truths = np.array([t for _, t, _ in pairs], dtype=float)
    errors = np.array([e for _, _, e in pairs], dtype=float)
    return CoreStats(
        n=len(pairs),
        mae_cm=float(np.mean(np.abs(errors))),
        rmse_cm=float(np.sqrt(np.mean(errors**2))),
        bias_cm=float(np.mean(errors)),
        pearson_r=_pearson(preds, truths),
    )


def build_summary(
    model_id: str,
    strategy: str,
    stratum: str,
    measurements: List[Measurement],
    truths: Mapping[str, float],
    policy: str = POLICY_PAPER_ZERO,
    *,
    use_raw: bool = False,
) -> MetricSummary:
    # Canonical order makes float accumulation independent of arrival order.
    measurements = sorted(measurements, key=lambda m: m.sample_id)
    excluded = sum(1 for m in measurements if m.miss_reason == MISS_PROVIDER_FAILURE)
    misses = sum(
        1 for m in measurements if m.miss and m.miss_reason != MISS_PROVIDER_FAILURE
    )
    core = summarize(signed_errors(measurements, truths, policy, use_raw=use_raw))
    return MetricSummary(
        model_id=model_id,
        strategy=strategy,
        stratum=stratum,
        n=core.n,
        mae_cm=core.mae_cm,
        rmse_cm=core.rmse_cm,
        bias_cm=core.bias_cm,
        pearson_r=core.pearson_r,
        miss_count=misses,
        excluded_count=excluded,
        small_sample=core.n == 1,
    )


def summarize_by_cell(
    measurements: Iterable[Measurement],
    truths: Mapping[str, float],
    policy: str = POLICY_PAPER_ZERO,
    *,
    use_raw: bool = False,
) -> List[MetricSummary]:
    """One stratum-``all`` summary per (model, strategy), lexicographic order."""
    groups: Dict[Tuple[str, str], List[Measurement]] = {}
    for m in measurements:
        groups.setdefault((m.model_id, m.strategy), []).append(m)
    out = []
    for (model_id, strategy) in sorted(groups):
        out.append(
            build_summary(
                model_id, strategy, STRATUM_ALL, groups[(model_id, strategy)],
                truths, policy, use_raw=use_raw,
            )
        )
    return out


def stratify(
    measurements: Iterable[Measurement],
    truths: Mapping[str, float],
    strata: Mapping[str, str],
    policy: str = POLICY_PAPER_ZERO,
    *,
    use_raw: bool = False,
) -> Dict[Tuple[str, str, str], MetricSummary]:
    """Per-stratum summaries keyed by (model, strategy, stratum label).

    ``strata`` maps sample_id to a label (reference class, model step-1 class,
    or distance class); unlabeled samples fall into ``unannotated``. Strata
    whose summary would be empty (all pairs dropped) are omitted; n == 1 strata
    carry the small-sample flag.
    """
    groups: Dict[Tuple[str, str, str], List[Measurement]] = {}
    for m in measurements:
        label = strata.get(m.sample_id, STRATUM_UNANNOTATED)
        groups.setdefault((m.model_id, m.strategy, label), []).append(m)
    out: Dict[Tuple[str, str, str], MetricSummary] = {}
    for key in sorted(groups):
        model_id, strategy, label = key
        ms = groups[key]
        if not signed_errors(ms, truths, policy, use_raw=use_raw):
            continue
        out[key] = build_summary(
            model_id, strategy, label, ms, truths, policy, use_raw=use_raw
        )
    return out


def miss_histogram(
    measurements: Iterable[Measurement],
    distances: Mapping[str, str],
) -> Dict[Tuple[str, str], Dict[str, int]]:
    """Miss counts per (model, strategy) split by distance class.

    Provider failures are not misses. Every (model, strategy) seen in the
    measurements gets an entry, even at zero misses.
    """
    out: Dict[Tuple[str, str], Dict[str, int]] = {}
    for m in measurements:
        key = (m.model_id, m.strategy)
        series = out.setdefault(key, {"close_up": 0, "distant": 0, STRATUM_UNANNOTATED: 0})
        if m.miss and m.miss_reason != MISS_PROVIDER_FAILURE:
            series[distances.get(m.sample_id, STRATUM_UNANNOTATED)] += 1
    return {key: out[key] for key in sorted(out)}
