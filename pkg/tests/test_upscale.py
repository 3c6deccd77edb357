from __future__ import annotations

import json

import pytest

from absa_forge.core import Dataset, Polarity, Sample, read_jsonl
from absa_forge.testing import unique_upscale, upscale_exemplars
from absa_forge.upscale import (
    SOURCE_TAG,
    MaxPassesExceeded,
    UpscaleConfig,
    build_upscale_prompt,
    parse_upscale,
    upscale,
)
from helpers import FIXTURES, record_then_replay, replay_gateway

UPSCALE = FIXTURES / "upscale"


def _train() -> Dataset:
    return read_jsonl(UPSCALE / "train.jsonl")


def test_prompt_embeds_every_exemplar():
    batch = list(_train())[:10]
    req = build_upscale_prompt(batch, UpscaleConfig())
    assert upscale_exemplars(req) == [{"text": s.text, "aspects": {a.name: p.value for a, p in s.aspects.items()}} for s in batch]
    assert "neutral" in req.user_text.lower() and "Prioritize" in req.user_text
    assert (req.params.temperature, req.params.top_p) == (0.3, 0.95)
    assert build_upscale_prompt(batch[:1]).fingerprint == build_upscale_prompt(batch[:1]).fingerprint
    assert len(upscale_exemplars(build_upscale_prompt(batch[:1]))) == 1
    with pytest.raises(ValueError):
        build_upscale_prompt([])


def test_parse_upscale_validity():
    cfg = UpscaleConfig()
    ok = parse_upscale('{"text": "Fine soup.", "aspects": {"soup": "neutral"}}', cfg)
    assert ok.source == SOURCE_TAG and ok.aspects
    assert parse_upscale('{"text": "Fine soup.", "aspects": {"soup": "mixed"}}', cfg) is None
    assert parse_upscale('{"text": "Fine soup.", "aspects": {"soup": "mixed"}}', UpscaleConfig(five_class=True)) is not None
    assert parse_upscale('{"text": "", "aspects": {"soup": "neutral"}}', cfg) is None
    assert parse_upscale('{"text": "Soup.", "aspects": {}}', cfg) is None
    assert parse_upscale("no json", cfg) is None
    assert parse_upscale('{"text": "Soup.", "aspects": ["soup"]}', cfg) is None


def test_one_sample_dataset_finishes_in_one_pass():
    ds = Dataset((Sample("The tea was hot.", {"tea": "positive"}),))
    (out, report), (again, _), _ = record_then_replay(lambda gw: upscale(ds, UpscaleConfig(seed=1), gw), unique_upscale)
    assert len(out) == 1 and report.passes == 1 and report.calls == 1
    assert out == again
    assert out[0].aspects == {next(iter(ds[0].aspects)): Polarity.NEUTRAL}


def test_unique_cassette_counts():
    out, report = upscale(_train(), UpscaleConfig(batch_size=10, seed=11), replay_gateway(UPSCALE / "cassette_unique.json"))
    assert report.calls_per_pass == [3] * report.passes
    assert len({s.key for s in out}) == len(out) >= 25
    assert report.class_counts["neutral"] > 0 and 0 < report.neutral_share < 1


def test_degenerate_generator_hits_the_cap():
    with pytest.raises(MaxPassesExceeded) as info:
        upscale(_train(), UpscaleConfig(batch_size=10, seed=11), replay_gateway(UPSCALE / "cassette_degenerate.json"))
    assert info.value.passes == 50 and info.value.generated == 1


def test_lower_cap_is_configurable():
    ds = Dataset((Sample("a", {"x": "neutral"}), Sample("b", {"x": "neutral"})))
    gw = replay_gateway({}, concurrency=1)
    with pytest.raises(MaxPassesExceeded):
        upscale(ds, UpscaleConfig(max_passes=2), gw)


def test_echoes_of_originals_are_dropped():
    train = _train()
    out, report = upscale(train, UpscaleConfig(batch_size=10, seed=11), replay_gateway(UPSCALE / "cassette_echo.json"))
    originals = {s.key for s in train}
    assert report.duplicates > 0
    assert not originals & {s.key for s in out}
    assert len({s.key for s in out}) == len(out)


def test_empty_dataset_rejected():
    with pytest.raises(ValueError):
        upscale(Dataset(), UpscaleConfig(), replay_gateway({}))


def test_config_validation():
    with pytest.raises(ValueError):
        UpscaleConfig(batch_size=0)
    with pytest.raises(ValueError):
        UpscaleConfig(max_passes=0)


def test_report_serializes():
    _, report = upscale(_train(), UpscaleConfig(batch_size=10, seed=11), replay_gateway(UPSCALE / "cassette_unique.json"))
    json.dumps(report.to_dict())
