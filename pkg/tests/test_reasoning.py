from __future__ import annotations

import json
import random

import pytest
from hypothesis import given
from hypothesis import strategies as st

from absa_forge.core import ChainStatus, ReasoningChain, Sample, read_jsonl
from absa_forge.evaluation import THOUGHTS_KEY, parse_response
from absa_forge.reasoning import (
    IGNORE_INDEX,
    MaskedSequence,
    PackedSequence,
    RatioTooSmall,
    ReferenceTokenizer,
    SequenceTooLong,
    TokenSequence,
    Vocab,
    bootstrap,
    curate,
    pack,
    plan_packs,
    render_decoder_target,
    render_encoder_cls_input,
    render_encoder_template,
    targeted_mask,
)
from absa_forge.reasoning.chains import parse_reasoning, refined_from_completion
from absa_forge.reasoning.masking import selection_budget
from absa_forge.reasoning.packing import write_packs
from absa_forge.reasoning.sequences import decode_spans
from absa_forge.reasoning.tokenizer import SPECIAL_TOKENS
from helpers import FIXTURES, replay_gateway

SAMPLE = Sample("The soup was cold.", {"soup": "negative", "bread": "unknown"}, overall="negative")
CHAIN = ReasoningChain("Cold soup is a complaint; bread is never mentioned.")


@given(st.text())
def test_tokenizer_round_trips(text):
    tok = ReferenceTokenizer()
    assert tok.decode(tok.encode(text)) == text


def test_vocab_specials_and_persistence(tmp_path):
    v = Vocab()
    assert [v.token(i) for i in range(5)] == list(SPECIAL_TOKENS)
    assert (v.pad_id, v.cls_id, v.sep_id, v.mask_id) == (0, 1, 2, 3)
    tok = ReferenceTokenizer(v)
    ids = tok.encode("hello world")
    assert min(ids) >= 5 and list(v.regular_ids()) == list(range(5, len(v)))
    v.save(tmp_path / "v.json")
    back = Vocab.load(tmp_path / "v.json")
    assert ReferenceTokenizer(back, grow=False).encode("hello world") == ids


def test_frozen_tokenizer_maps_unseen_to_unk():
    tok = ReferenceTokenizer(Vocab(), grow=False)
    assert set(tok.encode("brand new")) == {4}


def test_template_fields_decode_back():
    tok = ReferenceTokenizer()
    seq = render_encoder_template(SAMPLE, CHAIN, tok)
    text = tok.decode(seq.tokens)
    for marker in ("<input text>:", "<input aspects>:", "<intermediate reasoning>:", "<output sentiments for aspects>:"):
        assert text.count(marker) == 1
    assert decode_spans(seq, "text", tok) == [SAMPLE.text]
    assert decode_spans(seq, "aspects", tok) == ["soup, bread, overall sentiment"]
    assert decode_spans(seq, "reasoning", tok) == [CHAIN.text]
    assert decode_spans(seq, "sentiments", tok) == ["negative", "unknown", "negative"]


def test_template_refuses_missing_or_rejected_chain():
    tok = ReferenceTokenizer()
    with pytest.raises(ValueError):
        render_encoder_template(SAMPLE, ReasoningChain("  "), tok)
    with pytest.raises(ValueError):
        render_encoder_template(SAMPLE, ReasoningChain("x", ChainStatus.REJECTED), tok)


def test_cls_input_layout():
    tok = ReferenceTokenizer()
    seq = render_encoder_cls_input("The soup was cold.", "soup", tok)
    v = tok.vocab
    assert seq.tokens[0] == v.cls_id and seq.tokens[-1] == v.sep_id
    assert seq.tokens.count(v.sep_id) == 2
    assert decode_spans(seq, "aspects", tok) == ["soup"]
    with pytest.raises(ValueError):
        render_encoder_cls_input(" ", "soup", tok)


def test_token_sequence_rejects_overlapping_spans():
    with pytest.raises(ValueError):
        TokenSequence((5, 6, 7), {"a": ((0, 2),), "b": ((1, 3),)})
    with pytest.raises(ValueError):
        TokenSequence((5, 6), {"a": ((0, 3),)})


def _plain_sequence(length: int, sentiment: list[int]) -> TokenSequence:
    tok = ReferenceTokenizer()
    ids = tok.encode(" ".join(f"w{i}" for i in range(length)))
    assert len(ids) == length
    return TokenSequence(tuple(ids), {"sentiments": tuple((i, i + 1) for i in sentiment)}, tok.vocab)


def test_budget_examples():
    assert selection_budget(20, 0.3) == 6
    assert selection_budget(10, 0.3) == 3
    assert selection_budget(7, 0.3) == 3
    assert selection_budget(1, 0.3) == 1


def test_masking_selects_budget_including_sentiments():
    seq = _plain_sequence(20, [4, 11])
    m = targeted_mask(seq, 0.3, random.Random(0))
    assert sum(m.selection_mask) == 6
    assert m.selection_mask[4] and m.selection_mask[11]
    assert all((lab != IGNORE_INDEX) == sel for lab, sel in zip(m.labels, m.selection_mask))
    assert [lab for lab, sel in zip(m.labels, m.selection_mask) if sel] == [t for t, sel in zip(seq.tokens, m.selection_mask) if sel]
    for t_in, t_orig, sel in zip(m.input_tokens, seq.tokens, m.selection_mask):
        if not sel:
            assert t_in == t_orig


def test_masking_ratio_too_small():
    with pytest.raises(RatioTooSmall):
        targeted_mask(_plain_sequence(10, [0, 2, 4, 6]), 0.3, 0)


def test_masking_needs_sentiments_and_vocab():
    with pytest.raises(ValueError):
        targeted_mask(_plain_sequence(10, []), 0.3, 0)
    with pytest.raises(ValueError):
        targeted_mask(TokenSequence((5, 6), {"sentiments": ((0, 1),)}), 0.3, 0)


def test_masking_never_picks_delimiters():
    tok = ReferenceTokenizer()
    seq = render_encoder_cls_input("a b c d e f g h", "x", tok)
    seq = TokenSequence(seq.tokens, {"sentiments": ((2, 3),)}, tok.vocab)
    for seed in range(50):
        m = targeted_mask(seq, 0.9, seed)
        assert not any(sel for t, sel in zip(seq.tokens, m.selection_mask) if t == tok.vocab.sep_id)


def test_masked_record_round_trip():
    m = targeted_mask(_plain_sequence(20, [3]), 0.3, 1)
    rec = json.loads(json.dumps(m.to_record()))
    assert MaskedSequence.from_record(rec) == m
    with pytest.raises(ValueError):
        MaskedSequence((5, 6), (5, IGNORE_INDEX), (False, False))


def test_plan_examples():
    assert plan_packs([5, 7, 4], 12) == [[0], [1, 2]]
    assert plan_packs([3, 3, 3], 11) == [[0, 1, 2]]
    assert plan_packs([], 5) == []
    with pytest.raises(SequenceTooLong):
        plan_packs([4, 13], 12)


def test_pack_masked_sequences(tmp_path):
    seqs = [targeted_mask(_plain_sequence(n, [0]), 0.3, n) for n in (5, 7, 4)]
    packs = pack(seqs, 12)
    assert [p.members for p in packs] == [(0,), (1, 2)]
    second = packs[1]
    assert second.unpack() == [seqs[1].input_tokens, seqs[2].input_tokens]
    sep_pos = second.boundaries[0][1]
    assert second.tokens[sep_pos] == seqs[0].vocab.sep_id
    assert second.labels[sep_pos] == IGNORE_INDEX and not second.selection_mask[sep_pos]
    assert second.spans[1]["sentiments"] == ((8, 9),)
    write_packs(tmp_path / "p.jsonl", packs)
    recs = [json.loads(line) for line in (tmp_path / "p.jsonl").read_text().splitlines()]
    assert recs[1]["boundaries"] == [[0, 7], [8, 12]] and recs[1]["version"] == 1


def test_pack_plain_sequences_need_sep():
    with pytest.raises(ValueError):
        pack([TokenSequence((5, 6))], 10)
    packs = pack([TokenSequence((5, 6)), TokenSequence((7,))], 10, sep_id=2)
    assert packs == [PackedSequence((5, 6, 2, 7), ((0, 2), (3, 4)), ({}, {}), None, None, (0, 1))]


def test_decoder_target_masks_prompt():
    tok = ReferenceTokenizer()
    t = render_decoder_target(SAMPLE, CHAIN, True, tok)
    n = len(t.prompt_tokens)
    assert not any(t.loss_mask[:n]) and all(t.loss_mask[n:])
    assert len(t.loss_mask) == len(t.tokens)
    assert list(json.loads(t.completion))[0] == THOUGHTS_KEY
    assert t.prompt.endswith("\n\n") and SAMPLE.text in t.prompt
    pred = parse_response(t.completion)
    assert pred.aspects == SAMPLE.aspects and pred.overall is SAMPLE.overall
    assert t.to_record()["loss_mask_rle"] == [[False, n], [True, len(t.completion_tokens)]]


def test_decoder_target_plain_mode():
    tok = ReferenceTokenizer()
    t = render_decoder_target(SAMPLE, None, False, tok)
    assert THOUGHTS_KEY not in json.loads(t.completion)
    with pytest.raises(ValueError):
        render_decoder_target(SAMPLE, None, True, tok)


def test_parse_reasoning():
    text, preds = parse_reasoning('```json\n{"reasoning": "r", "aspects": {"a": "positive"}}\n```')
    assert text == "r" and len(preds) == 1
    for bad in ("nothing", '{"aspects": {"a": "positive"}}', '{"reasoning": "r"}'):
        with pytest.raises(ValueError):
            parse_reasoning(bad)


@pytest.mark.parametrize("raw", ["", "I'm sorry, I can't help with that.", '{"reasoning": "r", "aspects": {"soup": "positive"}}'])
def test_refinement_rejections(raw):
    start = ReasoningChain("first try", ChainStatus.GENERATED, False)
    assert refined_from_completion(SAMPLE, start, raw).status is ChainStatus.REJECTED


def test_star_fixture():
    samples = list(read_jsonl(FIXTURES / "star" / "samples.jsonl"))
    pairs = bootstrap(samples, replay_gateway(FIXTURES / "star" / "cassette.json"))
    statuses = {s.source: c.status for s, c in pairs}
    assert statuses == {
        "star:correct": ChainStatus.GENERATED,
        "star:refinable": ChainStatus.REFINED,
        "star:unrefinable": ChainStatus.REJECTED,
        "star:refusal": ChainStatus.REJECTED,
    }
    kept = curate(pairs)
    assert [s.source for s, _ in kept] == ["star:correct", "star:refinable"]
