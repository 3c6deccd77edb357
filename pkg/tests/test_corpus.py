from __future__ import annotations

import pytest
from scipy.stats import chisquare

from absa_forge.core import AspectLabel, Dataset, Polarity, Sample, UnknownPolarity, read_jsonl
from absa_forge.corpus import (
    STATS_COLUMNS,
    AdapterParseError,
    PoolTooSmall,
    SourceDescriptor,
    dataset_stats,
    dedup_merge,
    ingest,
    leak_check,
    parse_pairs,
    sample_overalls,
    stats_table,
    translate_dataset,
)
from helpers import FIXTURES, replay_gateway

COMPOSE = FIXTURES / "compose"


def test_jsonl_adapter_tags_source():
    d = ingest(SourceDescriptor("reviews", str(COMPOSE / "public_reviews.jsonl")))
    assert len(d) == 15
    assert {s.source for s in d} == {"reviews"}
    assert dict(d.manifest) == {"reviews": 15}


def test_csv_adapter_reads_pairs_and_overall():
    desc = SourceDescriptor("pairs", str(COMPOSE / "public_pairs.csv"), "csv-pairs", {"overall": "overall"})
    d = ingest(desc)
    assert len(d) == 15
    assert d[0].aspects == {AspectLabel("music"): Polarity.NEGATIVE}
    assert d[0].overall is Polarity.NEGATIVE
    assert d[1].overall is None


def test_semeval_adapter_maps_conflict():
    desc = SourceDescriptor("mams", str(COMPOSE / "public_mams.xml"), "semeval-xml-like", polarity_map={"conflict": "mixed"})
    d = ingest(desc)
    assert len(d) == 10
    assert d[0].aspects == {AspectLabel("dessert"): Polarity.NEUTRAL, AspectLabel("service"): Polarity.NEUTRAL}


def test_semeval_adapter_without_map_rejects_conflict(tmp_path):
    p = tmp_path / "x.xml"
    p.write_text('<sentences><sentence><text>t</text><aspectTerm term="a" polarity="conflict"/></sentence></sentences>')
    with pytest.raises(UnknownPolarity):
        ingest(SourceDescriptor("x", str(p), "semeval-xml-like"))


def test_csv_empty_text_reports_line(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("text,aspects\nfine,food:positive\n,food:negative\n")
    with pytest.raises(AdapterParseError) as info:
        ingest(SourceDescriptor("bad", str(p), "csv-pairs"))
    assert info.value.line == 3


def test_malformed_xml(tmp_path):
    p = tmp_path / "bad.xml"
    p.write_text("<sentences><sentence>")
    with pytest.raises(AdapterParseError):
        ingest(SourceDescriptor("bad", str(p), "semeval-xml-like"))


def test_descriptor_validation(tmp_path):
    with pytest.raises(ValueError):
        SourceDescriptor("x", "p", "parquet")
    with pytest.raises(ValueError):
        SourceDescriptor("x", "p", "csv-pairs", {"aspects": "body"})
    with pytest.raises(FileNotFoundError):
        ingest(SourceDescriptor("x", str(tmp_path / "missing.jsonl")))
    d = SourceDescriptor.from_dict({"id": "x", "path": "a.jsonl"}, base=tmp_path)
    assert d.path == str(tmp_path / "a.jsonl")


def test_parse_pairs():
    assert parse_pairs("battery life:positive; price: negative;") == [("battery life", "positive"), ("price", "negative")]
    assert parse_pairs("") == []
    with pytest.raises(ValueError):
        parse_pairs("battery")


def test_row_with_repeated_aspect_merges():
    desc = SourceDescriptor("x", "unused", "csv-pairs")
    from absa_forge.corpus import _row_aspects

    assert _row_aspects(desc, [("food", "positive"), ("Food", "negative")]) == {AspectLabel("food"): Polarity.MIXED}


def test_dedup_merge_example_and_idempotence():
    d = Dataset(
        (
            Sample("The battery is great.", {"battery": "positive"}, source="a"),
            Sample("Screen ok.", {"screen": "neutral"}, source="a"),
            Sample("the battery  is GREAT.", {"battery": "negative"}, source="b"),
        )
    )
    m = dedup_merge(d)
    assert len(m) == 2
    assert m[0].aspects[AspectLabel("battery")] is Polarity.MIXED
    assert m[0].source == "a|b"
    assert dedup_merge(m) == m


def test_leak_check_removes_normalized_matches():
    train = Dataset((Sample("Keep me."), Sample("The Soup  was cold."), Sample("Also keep.")))
    test = Dataset((Sample("the soup was cold."),), split="test")
    kept, report = leak_check(train, test)
    assert [s.text for s in kept] == ["Keep me.", "Also keep."]
    assert report.removed_count == 1
    assert report.collisions[0][:2] == (1, 0)
    again, r2 = leak_check(kept, test)
    assert again == kept and r2.removed_count == 0


def test_stats_hand_counted():
    row = dataset_stats(read_jsonl(FIXTURES / "stats" / "small.jsonl"), "small").rows[0]
    assert (row.sample_count, row.unique_aspect_count) == (6, 5)
    assert row.counts == (3, 2, 1, 1, 1)
    assert row.total_annotations == 8


def test_stats_table_format():
    d = read_jsonl(FIXTURES / "stats" / "small.jsonl")
    table = stats_table({"small": d, "empty": Dataset()})
    text = table.format()
    assert text.splitlines()[0].split() == ["Dataset", "#Samples", "#Unique", "aspects", "#Pos", "#Neg", "#Neu", "#Mixed", "#Unk"]
    assert len(text.splitlines()) == 4
    assert table.to_dict()["columns"] == list(STATS_COLUMNS)
    assert table.rows[1].cells() == ("empty", 0, 0, 0, 0, 0, 0, 0)


def _overall_pool(n: int) -> Dataset:
    return Dataset(tuple(Sample(f"doc {i}", {"x": "positive"}, overall="neutral") for i in range(n)))


def test_sample_overalls_is_seeded_and_strips_aspects():
    pool = [_overall_pool(30), Dataset((Sample("no overall"),))]
    a = sample_overalls(pool, 10, seed=3)
    assert a == sample_overalls(pool, 10, seed=3)
    assert a != sample_overalls(pool, 10, seed=4)
    assert len({s.text for s in a}) == 10
    assert all(not s.aspects and s.overall is Polarity.NEUTRAL for s in a)
    with pytest.raises(PoolTooSmall):
        sample_overalls(pool, 31, seed=0)


def test_sample_overalls_is_uniform():
    pool = [_overall_pool(20)]
    hits = dict.fromkeys(range(20), 0)
    for seed in range(2000):
        for s in sample_overalls(pool, 5, seed):
            hits[int(s.text.split()[1])] += 1
    assert chisquare(list(hits.values())).pvalue > 0.001


def test_translate_with_cassette():
    gw = replay_gateway(FIXTURES / "translate" / "cassette_fr.json")
    en = read_jsonl(FIXTURES / "translate" / "en.jsonl")
    fr, dropped = translate_dataset(en, "fr", gw)
    assert dropped == 0
    assert [s.language for s in fr] == ["fr"] * 3
    assert list(fr[0].aspects) == [AspectLabel("batterie"), AspectLabel("écran")]
    assert list(fr[0].aspects.values()) == list(en[0].aspects.values())
    assert fr[1].source == "translate-fixture:translated"


def test_translate_miss_drops_sample():
    gw = replay_gateway(FIXTURES / "translate" / "cassette_fr.json")
    en = read_jsonl(FIXTURES / "translate" / "en.jsonl")
    extra = en.replace_samples([*en, Sample("Not recorded.", {"thing": "neutral"})])
    fr, dropped = translate_dataset(extra, "fr", gw)
    assert dropped == 1 and len(fr) == 3


def test_translate_same_language_keeps_text():
    gw = replay_gateway({})
    d = Dataset((Sample("Hello.", {"x": "positive"}),))
    out, dropped = translate_dataset(d, "en", gw)
    assert out[0].text == "Hello." and dropped == 0
