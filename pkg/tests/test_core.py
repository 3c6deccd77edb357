from __future__ import annotations

import json

import pytest
from hypothesis import given
from hypothesis import strategies as st

from absa_forge.core import (
    MERGED_OVERALL_TAG,
    AspectLabel,
    Dataset,
    Polarity,
    ReasoningChain,
    Sample,
    TextMismatch,
    UnknownPolarity,
    aspect_map,
    normalize_text,
    polarity_merge,
    polarity_parse,
    read_jsonl,
    sample_merge,
    write_jsonl,
)

polarities = st.sampled_from(list(Polarity))


@pytest.mark.parametrize("raw,expected", [("positive", Polarity.POSITIVE), ("  Mixed ", Polarity.MIXED), ("UNKNOWN", Polarity.UNKNOWN)])
def test_polarity_parse_accepts_any_case(raw, expected):
    assert polarity_parse(raw) is expected


@pytest.mark.parametrize("raw", ["great", "", "pos", None, 3])
def test_polarity_parse_rejects(raw):
    with pytest.raises(UnknownPolarity):
        polarity_parse(raw)


@given(polarities, polarities)
def test_merge_commutes(a, b):
    assert polarity_merge(a, b) is polarity_merge(b, a)


@given(polarities)
def test_merge_idempotent(a):
    assert polarity_merge(a, a) is a


@given(polarities, polarities)
def test_distinct_labels_merge_to_mixed(a, b):
    if a is not b:
        assert polarity_merge(a, b) is Polarity.MIXED


def test_normalize_text_folds_case_space_and_unicode():
    assert normalize_text("  Café   au  LAIT ") == normalize_text("café au lait")
    assert normalize_text("Straße") == normalize_text("STRASSE")


def test_aspect_label_equality_is_normalized():
    assert AspectLabel("Battery  Life") == AspectLabel("battery life")
    assert len({AspectLabel("Screen"), AspectLabel("screen ")}) == 1
    with pytest.raises(ValueError):
        AspectLabel("   ")


def test_aspect_map_rejects_colliding_keys():
    with pytest.raises(ValueError, match="duplicate"):
        aspect_map([("food", "positive"), ("FOOD", "negative")])


def test_sample_validation():
    with pytest.raises(ValueError):
        Sample("  ")
    with pytest.raises(UnknownPolarity):
        Sample("ok", {"food": "tasty"})
    s = Sample("ok", {"food": "Positive"}, overall="neutral")
    assert s.aspects == {AspectLabel("food"): Polarity.POSITIVE}
    assert s.overall is Polarity.NEUTRAL


def test_sample_merge_conflict_becomes_mixed():
    a = Sample("The food was great.", {"food": "positive"}, source="a")
    b = Sample("the food was  great.", {"food": "negative", "price": "neutral"}, source="b")
    m = sample_merge(a, b)
    assert m.aspects == {AspectLabel("food"): Polarity.MIXED, AspectLabel("price"): Polarity.NEUTRAL}
    assert m.provenance == ("a", "b")
    assert m.text == a.text


def test_sample_merge_overall_disagreement_is_tagged():
    a = Sample("t", overall="positive", source="a")
    b = Sample("T", overall="negative", source="b")
    m = sample_merge(a, b)
    assert m.overall is Polarity.MIXED
    assert MERGED_OVERALL_TAG in m.provenance
    assert sample_merge(a, Sample("t", source="c")).overall is Polarity.POSITIVE


def test_sample_merge_refuses_different_texts():
    with pytest.raises(TextMismatch):
        sample_merge(Sample("one"), Sample("two"))


def test_dataset_manifest_counts_sources():
    d = Dataset((Sample("a", source="x"), Sample("b", source="x"), Sample("c", source="y")))
    assert dict(d.manifest) == {"x": 2, "y": 1}
    with pytest.raises(ValueError):
        Dataset((Sample("a"),), manifest=(("x", 2),))
    with pytest.raises(ValueError):
        Dataset((), split="dev")


def test_jsonl_round_trip(tmp_path):
    samples = [
        Sample("Café crème was fine.", {"café crème": "neutral"}, overall="neutral", language="fr", source="x"),
        Sample("Plain.", {}, source="y", reasoning=ReasoningChain("because", source_answer_correct=False)),
    ]
    path = tmp_path / "d.jsonl"
    write_jsonl(path, samples)
    lines = path.read_text(encoding="utf-8").splitlines()
    assert list(json.loads(lines[0])) == ["text", "aspects", "overall", "language", "source"]
    assert "reasoning" in json.loads(lines[1])
    assert "Café" in lines[0]
    back = read_jsonl(path)
    assert list(back) == samples
