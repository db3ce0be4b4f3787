from __future__ import annotations

import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import jpeg_bytes

from hailgauge.dataset import Sample
from hailgauge.gateway import Gateway, ModelEndpoint, mock_backend
from hailgauge.prompts import (
    DEFAULT_REFERENCE_SPECS,
    SYNONYMS,
    PromptEngine,
    PromptError,
    ReferenceSpec,
    StrategyTrace,
    normalize_step1_token,
    step1_reference_class,
)

P1_ANCHOR = "Answer only with the diameter in cm"
STEP1_ANCHOR = "your answer has to be 'unspecified'"
RULER_ANCHOR = "markings on the ruler"
UNSPECIFIED_ANCHOR = "contextual cues in the image"


def make_gateway(*replies):
    gw = Gateway(backoff_base=0.0, sleeper=lambda _: None)
    gw.register("G4", mock_backend(list(replies)))
    return gw


def sample(image_path="unused.jpg"):
    return Sample("s1", "e1", image_path, 4.0)


ENDPOINT = ModelEndpoint(model_id="G4", adapter="mock")


class TestTemplates:
    def test_p1_anchor_substrings(self, engine):
        prompt = engine.build_p1_prompt()
        assert P1_ANCHOR in prompt
        assert "maximum diameter of the hailstones" in prompt

    def test_p1_deterministic(self, engine):
        assert engine.build_p1_prompt() == engine.build_p1_prompt()

    def test_step1_anchor_substrings(self, engine):
        prompt = engine.build_p2_step1_prompt()
        assert STEP1_ANCHOR in prompt
        assert "Answer only with one word." in prompt
        assert "Examples: hand, coin, ruler, lighter." in prompt

    def test_step2_known_dimensions_template(self, engine):
        prompt = engine.build_p2_step2_prompt(DEFAULT_REFERENCE_SPECS["hand"])
        assert "using the hand as a reference" in prompt
        assert "an average adult palm width of about 8.5 cm" in prompt

    def test_step2_ruler_template(self, engine):
        prompt = engine.build_p2_step2_prompt(DEFAULT_REFERENCE_SPECS["ruler"])
        assert RULER_ANCHOR in prompt

    def test_step2_unspecified_template(self, engine):
        prompt = engine.build_p2_step2_prompt(DEFAULT_REFERENCE_SPECS["unspecified"])
        assert UNSPECIFIED_ANCHOR in prompt
        assert "surrounding objects" in prompt

    def test_hashes_pinned_for_all_templates(self, engine):
        hashes = engine.template_hashes()
        assert sorted(hashes) == [
            "p1", "p2_step1", "p2_step2_known", "p2_step2_ruler", "p2_step2_unspecified",
        ]
        assert all(len(h) == 64 for h in hashes.values())

    def test_missing_template_dir(self, tmp_path):
        with pytest.raises(PromptError):
            PromptEngine(tmp_path / "nope")

    def test_custom_dimensions_text_flows_through(self, tmp_path, engine):
        specs = dict(DEFAULT_REFERENCE_SPECS)
        specs["hand"] = ReferenceSpec("hand", "hand", "a palm width of 9 cm", 9.0)
        custom = PromptEngine(engine.template_dir, reference_specs=specs)
        assert "a palm width of 9 cm" in custom.build_p2_step2_prompt(specs["hand"])


class TestClassification:
    @pytest.mark.parametrize(
        "raw,expected",
        [
            ("Hand.", "hand"),
            ("hand", "hand"),
            ("HAND!", "hand"),
            ("unspecified", "unspecified"),
            ("snowball", "unspecified"),
            ("", "unspecified"),
            ("coin", "coin"),
            ("Ruler", "ruler"),
            ("lighter", "lighter"),
            ("palm", "hand"),
            ("fingers", "hand"),
            ("euro", "coin"),
            ("cent", "coin"),
            ("quarter", "coin"),
            ("cap", "bottlecap"),
            ("bottle cap", "bottlecap"),
            ("bottle-cap", "bottlecap"),
            ("tape", "ruler"),
            ("measuring tape", "ruler"),
            ("a hand holding hail", "unspecified"),
        ],
    )
    def test_token_resolution(self, engine, raw, expected):
        assert engine.classify_step1_answer(raw).class_token == expected

    def test_synonym_table_is_exhaustive_over_specs(self, engine):
        for target in SYNONYMS.values():
            assert target in engine.reference_specs

    @given(st.text(max_size=60))
    def test_total_function(self, engine, raw):
        spec = engine.classify_step1_answer(raw)
        assert spec.class_token in engine.reference_specs

    @given(st.text(max_size=60))
    def test_idempotent_on_own_token(self, engine, raw):
        token = engine.classify_step1_answer(raw).class_token
        assert engine.classify_step1_answer(token).class_token == token

    def test_normalize_examples(self):
        assert normalize_step1_token("  Hand. ") == "hand"
        assert normalize_step1_token("Bottle-Cap") == "bottlecap"
        assert normalize_step1_token("") == ""

    def test_step1_taxonomy_mapping(self):
        assert step1_reference_class("hand") == "hand"
        assert step1_reference_class("coin") == "coin_or_bottle_cap"
        assert step1_reference_class("bottlecap") == "coin_or_bottle_cap"
        assert step1_reference_class("lighter") == "small_household_object"
        assert step1_reference_class("unspecified") == "unspecified_or_other"
        assert step1_reference_class("weird") == "unspecified_or_other"


class TestReferenceSpec:
    def test_token_must_be_single_lowercase_word(self):
        with pytest.raises(PromptError):
            ReferenceSpec("Bottle Cap", "bottle cap")

    def test_non_ruler_specs_carry_dimensions(self):
        for token, spec in DEFAULT_REFERENCE_SPECS.items():
            if token not in ("ruler", "unspecified"):
                assert spec.typical_dimensions_text


class TestExecuteStrategy:
    def test_p1_trace_shape(self, engine):
        gw = make_gateway("3.5")
        trace = engine.execute_strategy(
            sample(), "P1", ENDPOINT, gw, image_bytes=jpeg_bytes(1)
        )
        assert trace.strategy == "P1"
        assert trace.step2_raw == "3.5"
        assert trace.step1_prompt is None and trace.step1_class is None

    def test_p2_trace_shape(self, engine):
        gw = make_gateway("hand", "4.5")
        trace = engine.execute_strategy(
            sample(), "P2", ENDPOINT, gw, image_bytes=jpeg_bytes(1)
        )
        assert trace.step1_class == "hand"
        assert trace.step2_raw == "4.5"
        assert "8.5 cm" in trace.step2_prompt
        assert not trace.degraded_step1

    def test_p2_step1_failure_degrades_to_unspecified(self, engine):
        gw = make_gateway({"status": "provider_rejection"}, "4.0")
        trace = engine.execute_strategy(
            sample(), "P2", ENDPOINT, gw, image_bytes=jpeg_bytes(1)
        )
        assert trace.degraded_step1
        assert trace.step1_status == "provider_rejection"
        assert trace.step1_class == "unspecified"
        assert UNSPECIFIED_ANCHOR in trace.step2_prompt
        assert trace.step2_raw == "4.0"

    def test_unknown_strategy_rejected(self, engine):
        with pytest.raises(PromptError):
            engine.execute_strategy(sample(), "P3", ENDPOINT, make_gateway())

    def test_reads_image_from_disk_when_not_provided(self, engine, image_factory):
        path = image_factory(9)
        gw = make_gateway("2.5")
        trace = engine.execute_strategy(sample(str(path)), "P1", ENDPOINT, gw)
        assert trace.step2_raw == "2.5"

    def test_trace_invariant_enforced(self):
        with pytest.raises(PromptError):
            StrategyTrace(
                sample_id="s", model_id="m", strategy="P1",
                step2_prompt="p", step2_raw="1", step2_status="ok",
                step1_prompt="should not be here",
            )
        with pytest.raises(PromptError):
            StrategyTrace(
                sample_id="s", model_id="m", strategy="P2",
                step2_prompt="p", step2_raw="1", step2_status="ok",
            )

    def test_trace_round_trip(self, engine):
        gw = make_gateway("hand", "4.5")
        trace = engine.execute_strategy(
            sample(), "P2", ENDPOINT, gw, image_bytes=jpeg_bytes(1)
        )
        assert StrategyTrace.from_dict(trace.to_dict()).to_dict() == trace.to_dict()

    def test_p1_serialization_omits_step1_keys(self, engine):
        gw = make_gateway("3.5")
        trace = engine.execute_strategy(
            sample(), "P1", ENDPOINT, gw, image_bytes=jpeg_bytes(1)
        )
        assert "step1_prompt" not in trace.to_dict()
