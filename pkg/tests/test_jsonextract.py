from __future__ import annotations

import pytest

from absa_forge.jsonextract import NoJsonFound, extract_json_object


@pytest.mark.parametrize(
    "raw",
    [
        '{"a": 1}',
        '```json\n{"a": 1}\n```',
        'Sure! Here is the answer:\n```\n{"a": 1}\n```\nHope this helps.',
        'The result is {"a": 1} as requested.',
        '  {"a": 1}  trailing words',
    ],
)
def test_finds_object(raw):
    assert extract_json_object(raw) == {"a": 1}


def test_braces_inside_strings():
    assert extract_json_object('x {"t": "a } b {", "n": {"m": 2}} y') == {"t": "a } b {", "n": {"m": 2}}


def test_skips_non_object_candidates():
    assert extract_json_object('{not json} then {"ok": true}') == {"ok": True}


@pytest.mark.parametrize("raw", ["", "no json here", "[1, 2]", "{broken", None])
def test_no_json(raw):
    with pytest.raises(NoJsonFound):
        extract_json_object(raw)


def test_strict_requires_whole_completion():
    assert extract_json_object(' {"a": 1}\n', strict=True) == {"a": 1}
    with pytest.raises(NoJsonFound):
        extract_json_object('Answer: {"a": 1}', strict=True)


def test_pairs_hook_keeps_duplicates():
    assert extract_json_object('{"a": 1, "a": 2}', object_pairs_hook=list) == [("a", 1), ("a", 2)]
