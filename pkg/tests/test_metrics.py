from __future__ import annotations

import math
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hailgauge.metrics import (
    POLICY_EXCLUDE_MISSES,
    POLICY_PAPER_ZERO,
    MetricsError,
    build_summary,
    miss_histogram,
    signed_errors,
    stratify,
    summarize,
    summarize_by_cell,
)
from hailgauge.parsing import (
    MISS_NO_NUMBER,
    MISS_NONE,
    MISS_PROVIDER_FAILURE,
    Measurement,
)


def hit(sample_id, value, model="G4", strategy="P1"):
    return Measurement(sample_id, model, strategy, value, value, False, MISS_NONE)

def miss(sample_id, model="G4", strategy="P1", reason=MISS_NO_NUMBER):
    return Measurement(sample_id, model, strategy, None, None, True, reason)


class TestSignedErrors:
    def test_sign_convention(self):
        pairs = signed_errors([hit("a", 3.0)], {"a": 4.0})
        assert pairs == [(3.0, 4.0, -1.0)]

    def test_miss_scores_zero_under_paper_policy(self):
        pairs = signed_errors([miss("a")], {"a": 4.0}, POLICY_PAPER_ZERO)
        assert pairs == [(0.0, 4.0, -4.0)]

    def test_miss_dropped_under_exclude_policy(self):
        assert signed_errors([miss("a")], {"a": 4.0}, POLICY_EXCLUDE_MISSES) == []

    def test_provider_failure_excluded_under_both(self):
        ms = [miss("a", reason=MISS_PROVIDER_FAILURE)]
        assert signed_errors(ms, {"a": 4.0}, POLICY_PAPER_ZERO) == []
        assert signed_errors(ms, {"a": 4.0}, POLICY_EXCLUDE_MISSES) == []

    def test_unmatched_sample_raises(self):
        with pytest.raises(MetricsError):
            signed_errors([hit("zz", 3.0)], {"a": 4.0})

    def test_unknown_policy_raises(self):
        with pytest.raises(MetricsError):
            signed_errors([], {}, "bogus")

    def test_raw_values_flag(self):
        m = Measurement("a", "G4", "P1", 3.26, 3.5, False, MISS_NONE)
        assert signed_errors([m], {"a": 4.0})[0][0] == 3.5
        assert signed_errors([m], {"a": 4.0}, use_raw=True)[0][0] == 3.26


class TestSummarize:
    def test_identity_case(self):
        pairs = signed_errors(
            [hit("a", 3.0), hit("b", 4.0), hit("c", 5.0)],
            {"a": 3.0, "b": 4.0, "c": 5.0},
        )
        core = summarize(pairs)
        assert (core.mae_cm, core.rmse_cm, core.bias_cm) == (0.0, 0.0, 0.0)
        assert core.pearson_r == pytest.approx(1.0)

    def test_hand_arithmetic(self):
        core = summarize([(3.0, 4.0, -1.0), (5.0, 4.0, 1.0)])
        assert (core.mae_cm, core.rmse_cm, core.bias_cm) == (1.0, 1.0, 0.0)

    def test_zero_variance_r_undefined(self):
        core = summarize(
            [(4.0, 3.0, 1.0), (4.0, 4.0, 0.0), (4.0, 5.0, -1.0)]
        )
        assert core.pearson_r is None

    def test_single_pair_r_undefined(self):
        assert summarize([(3.0, 4.0, -1.0)]).pearson_r is None

    def test_empty_raises(self):
        with pytest.raises(MetricsError):
            summarize([])


def brute_force(pairs):
    """Independent re-implementation: plain loops, no numpy."""
    n = len(pairs)
    errors = [e for _, _, e in pairs]
    mae = math.fsum(abs(e) for e in errors) / n
    rmse = math.sqrt(math.fsum(e * e for e in errors) / n)
    bias = math.fsum(errors) / n
    preds = [p for p, _, _ in pairs]
    truths = [t for _, t, _ in pairs]
    r = None
    if n >= 2 and max(preds) > min(preds) and max(truths) > min(truths):
        mp = math.fsum(preds) / n
        mt = math.fsum(truths) / n
        num = math.fsum((p - mp) * (t - mt) for p, t in zip(preds, truths))
        den = math.sqrt(
            math.fsum((p - mp) ** 2 for p in preds)
            * math.fsum((t - mt) ** 2 for t in truths)
        )
        r = num / den if den > 0 else None
    return mae, rmse, bias, r


def test_oracle_equivalence_small():
    rng = random.Random(7)
    for _ in range(200):
        n = rng.randint(1, 50)
        pairs = []
        for i in range(n):
            truth = rng.randint(4, 22) * 0.5
            pred = max(0.0, truth + rng.uniform(-3, 3))
            pairs.append((pred, truth, pred - truth))
        core = summarize(pairs)
        mae, rmse, bias, r = brute_force(pairs)
        assert abs(core.mae_cm - mae) <= 1e-9
        assert abs(core.rmse_cm - rmse) <= 1e-9
        assert abs(core.bias_cm - bias) <= 1e-9
        if r is None:
            assert core.pearson_r is None
        else:
            assert abs(core.pearson_r - r) <= 1e-9


@settings(max_examples=200)
@given(
    st.lists(
        st.tuples(
            st.floats(min_value=0.0, max_value=30.0),
            st.floats(min_value=0.5, max_value=15.0),
        ),
        min_size=1,
        max_size=40,
    )
)
def test_rmse_mae_bias_ordering(pairs):
    triples = [(p, t, p - t) for p, t in pairs]
    core = summarize(triples)
    assert core.rmse_cm >= core.mae_cm - 1e-9
    assert core.mae_cm >= abs(core.bias_cm) - 1e-9
    assert core.mae_cm >= 0.0


@settings(max_examples=100)
@given(
    st.lists(
        st.tuples(
            st.floats(min_value=0.0, max_value=20.0),
            st.floats(min_value=0.5, max_value=15.0),
        ),
        min_size=2,
        max_size=30,
    ),
    st.floats(min_value=0.1, max_value=10.0),
)
def test_scaling_property(pairs, scale):
    triples = [(p, t, p - t) for p, t in pairs]
    scaled = [(p * scale, t * scale, (p - t) * scale) for p, t in pairs]
    base = summarize(triples)
    grown = summarize(scaled)
    assert grown.mae_cm == pytest.approx(base.mae_cm * scale, abs=1e-9, rel=1e-9)
    assert grown.rmse_cm == pytest.approx(base.rmse_cm * scale, abs=1e-9, rel=1e-9)
    assert grown.bias_cm == pytest.approx(base.bias_cm * scale, abs=1e-9, rel=1e-9)
    if base.pearson_r is None:
        assert grown.pearson_r is None
    else:
        assert grown.pearson_r == pytest.approx(base.pearson_r, abs=1e-9)


class TestStratify:
    def test_single_stratum(self):
        ms = [hit("a", 3.0), hit("b", 4.0)]
        truths = {"a": 3.0, "b": 4.0}
        strata = {"a": "hand", "b": "hand"}
        out = stratify(ms, truths, strata)
        assert list(out) == [("G4", "P1", "hand")]
        assert out[("G4", "P1", "hand")].n == 2

    def test_stratum_ordering_preserved(self):
        # hand errors 0.5, unspecified errors 2.0: ordering must survive.
        ms = [hit("a", 3.5), hit("b", 4.5), hit("c", 2.0), hit("d", 6.0)]
        truths = {"a": 3.0, "b": 4.0, "c": 4.0, "d": 4.0}
        strata = {"a": "hand", "b": "hand", "c": "unspecified_or_other", "d": "unspecified_or_other"}
        out = stratify(ms, truths, strata)
        assert out[("G4", "P1", "hand")].mae_cm < out[("G4", "P1", "unspecified_or_other")].mae_cm

    def test_single_sample_stratum_flagged(self):
        ms = [hit("a", 3.0), hit("b", 4.0), hit("c", 4.0)]
        truths = {"a": 3.0, "b": 4.0, "c": 5.0}
        strata = {"a": "hand", "b": "hand", "c": "fruit"}
        out = stratify(ms, truths, strata)
        assert out[("G4", "P1", "fruit")].small_sample
        assert not out[("G4", "P1", "hand")].small_sample

    def test_unlabeled_goes_to_unannotated(self):
        ms = [hit("a", 3.0)]
        out = stratify(ms, {"a": 3.0}, {})
        assert list(out) == [("G4", "P1", "unannotated")]


class TestMissHistogram:
    def test_counts_split_by_distance(self):
        ms = [miss("a"), miss("b"), hit("c", 4.0)]
        distances = {"a": "close_up", "b": "distant", "c": "close_up"}
        out = miss_histogram(ms, distances)
        assert out[("G4", "P1")] == {"close_up": 1, "distant": 1, "unannotated": 0}

    def test_zero_misses_still_emitted(self):
        out = miss_histogram([hit("a", 4.0)], {"a": "close_up"})
        assert out[("G4", "P1")] == {"close_up": 0, "distant": 0, "unannotated": 0}

    def test_all_misses_distant(self):
        ms = [miss("a"), miss("b")]
        out = miss_histogram(ms, {"a": "distant", "b": "distant"})
        assert out[("G4", "P1")]["distant"] == 2

    def test_provider_failures_not_misses(self):
        out = miss_histogram([miss("a", reason=MISS_PROVIDER_FAILURE)], {"a": "close_up"})
        assert out[("G4", "P1")] == {"close_up": 0, "distant": 0, "unannotated": 0}


class TestBuildSummary:
    def test_counts_and_exclusions(self):
        ms = [
            hit("a", 3.0),
            miss("b"),
            miss("c", reason=MISS_PROVIDER_FAILURE),
        ]
        truths = {"a": 3.0, "b": 4.0, "c": 5.0}
        summary = build_summary("G4", "P1", "all", ms, truths)
        assert summary.n == 2  # provider failure out of n
        assert summary.miss_count == 1
        assert summary.excluded_count == 1
        assert summary.miss_count <= summary.n

    def test_exclude_misses_policy_ignores_misses_in_stats(self):
        ms = [hit("a", 3.0), miss("b")]
        truths = {"a": 3.0, "b": 4.0}
        summary = build_summary("G4", "P1", "all", ms, truths, POLICY_EXCLUDE_MISSES)
        assert summary.n == 1
        assert summary.mae_cm == 0.0
        assert summary.miss_count == 1  # reported, not scored

    def test_summarize_by_cell_orders_lexicographically(self):
        ms = [
            hit("a", 3.0, model="G4m", strategy="P2"),
            hit("a", 3.0, model="G4", strategy="P1"),
            hit("a", 3.0, model="G4", strategy="P2"),
        ]
        out = summarize_by_cell(ms, {"a": 3.0})
        assert [(s.model_id, s.strategy) for s in out] == [
            ("G4", "P1"),
            ("G4", "P2"),
            ("G4m", "P2"),
        ]
