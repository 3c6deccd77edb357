"""Token sequences with named spans, and the renderers that produce them."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Mapping

from ..core import ChainStatus, ReasoningChain, Sample
from ..evaluation import OVERALL_ASPECT, THOUGHTS_KEY, EvalConfig, build_eval_prompt
from .tokenizer import Tokenizer, Vocab

Span = tuple[tuple[int, int], ...]

SPAN_NAMES = ("text", "aspects", "reasoning", "sentiments")

TEXT_MARKER = "<input text>:"
ASPECTS_MARKER = "\n<input aspects>:"
REASONING_MARKER = "\n<intermediate reasoning>:"
OUTPUT_MARKER = "\n<output sentiments for aspects>:"


@dataclass(frozen=True)
class TokenSequence:
    """Token ids plus half-open ranges naming the template fields.

    A span is a tuple of ranges because the sentiment words of the output
    field are interleaved with aspect names.
    """

    tokens: tuple[int, ...]
    spans: Mapping[str, Span] = field(default_factory=dict)
    vocab: Vocab | None = field(default=None, compare=False, repr=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "tokens", tuple(self.tokens))
        spans = {k: tuple((int(s), int(e)) for s, e in v) for k, v in self.spans.items()}
        object.__setattr__(self, "spans", spans)
        ranges = sorted(r for v in spans.values() for r in v)
        prev = 0
        for s, e in ranges:
            if not (prev <= s <= e <= len(self.tokens)):
                raise ValueError(f"span {(s, e)} overlaps or leaves bounds 0..{len(self.tokens)}")
            prev = e

    def __len__(self) -> int:
        return len(self.tokens)

    def positions(self, name: str) -> list[int]:
        return [i for s, e in self.spans.get(name, ()) for i in range(s, e)]

    def to_record(self) -> dict:
        return {"tokens": list(self.tokens), "spans": {k: [list(r) for r in v] for k, v in self.spans.items()}}

    @classmethod
    def from_record(cls, rec: Mapping, vocab: Vocab | None = None) -> TokenSequence:
        return cls(tuple(rec["tokens"]), rec.get("spans", {}), vocab)


class _Builder:
    def __init__(self, tokenizer: Tokenizer):
        self.tok = tokenizer
        self.ids: list[int] = []
        self.spans: dict[str, list[tuple[int, int]]] = {}

    def add(self, text: str, span: str | None = None) -> None:
        start = len(self.ids)
        self.ids.extend(self.tok.encode(text))
        if span is not None:
            self.spans.setdefault(span, []).append((start, len(self.ids)))

    def special(self, token_id: int) -> None:
        self.ids.append(token_id)

    def build(self) -> TokenSequence:
        return TokenSequence(tuple(self.ids), {k: tuple(v) for k, v in self.spans.items()}, self.tok.vocab)


def labeled_items(sample: Sample) -> list[tuple[str, str]]:
    items = [(a.name, p.value) for a, p in sample.aspects.items()]
    if sample.overall is not None:
        items.append((OVERALL_ASPECT, sample.overall.value))
    return items


def render_encoder_template(sample: Sample, chain: ReasoningChain, tokenizer: Tokenizer) -> TokenSequence:
    """Four-field thinking template for masked-LM pretraining."""
    if chain is None or not chain.text.strip():
        raise ValueError("curated pairs must carry a non-empty reasoning chain")
    if chain.status is ChainStatus.REJECTED:
        raise ValueError("rejected chains do not enter the template")
    items = labeled_items(sample)
    if not items:
        raise ValueError("sample has nothing to label")

    b = _Builder(tokenizer)
    b.add(TEXT_MARKER)
    b.add(" " + sample.text, "text")
    b.add(ASPECTS_MARKER)
    b.add(" " + ", ".join(name for name, _ in items), "aspects")
    b.add(REASONING_MARKER)
    b.add(" " + chain.text, "reasoning")
    b.add(OUTPUT_MARKER)
    for n, (name, pol) in enumerate(items):
        b.add((", " if n else " ") + name + ":")
        b.add(" " + pol, "sentiments")
    return b.build()


def render_encoder_cls_input(text: str, aspect: str, tokenizer: Tokenizer) -> TokenSequence:
    """``[CLS] text [SEP] aspect [SEP]`` for the classification head."""
    if not text or not text.strip():
        raise ValueError("text must be non-empty")
    v = tokenizer.vocab
    b = _Builder(tokenizer)
    b.special(v.cls_id)
    b.add(text, "text")
    b.special(v.sep_id)
    b.add(aspect, "aspects")
    b.special(v.sep_id)
    return b.build()


@dataclass(frozen=True)
class DecoderTarget:
    prompt: str
    completion: str
    prompt_tokens: tuple[int, ...]
    completion_tokens: tuple[int, ...]
    loss_mask: tuple[bool, ...]

    @property
    def tokens(self) -> tuple[int, ...]:
        return self.prompt_tokens + self.completion_tokens

    def loss_mask_rle(self) -> list[list]:
        runs: list[list] = []
        for flag in self.loss_mask:
            if runs and runs[-1][0] == flag:
                runs[-1][1] += 1
            else:
                runs.append([flag, 1])
        return runs

    def to_record(self) -> dict:
        return {"prompt": self.prompt, "completion": self.completion, "loss_mask_rle": self.loss_mask_rle()}


def completion_json(sample: Sample, chain: ReasoningChain | None = None, thinking: bool = False) -> str:
    obj: dict[str, str] = {}
    if thinking:
        obj[THOUGHTS_KEY] = chain.text
    obj.update(labeled_items(sample))
    return json.dumps(obj, ensure_ascii=False)


def render_decoder_target(
    sample: Sample,
    chain: ReasoningChain | None,
    thinking: bool,
    tokenizer: Tokenizer,
    class_mode: str = "five",
) -> DecoderTarget:
    """Instruction prompt plus JSON completion; loss only on the completion."""
    if thinking and (chain is None or not chain.text.strip() or chain.status is ChainStatus.REJECTED):
        raise ValueError("thinking mode needs a curated reasoning chain")
    request = build_eval_prompt(sample, EvalConfig(class_mode=class_mode, include_overall=sample.overall is not None))
    prompt = "\n\n".join(m.content for m in request.messages) + "\n\n"
    completion = completion_json(sample, chain, thinking)
    p_ids = tuple(tokenizer.encode(prompt))
    c_ids = tuple(tokenizer.encode(completion))
    return DecoderTarget(prompt, completion, p_ids, c_ids, (False,) * len(p_ids) + (True,) * len(c_ids))


def decode_spans(seq: TokenSequence, name: str, tokenizer: Tokenizer) -> list[str]:
    return [tokenizer.decode(seq.tokens[s:e]).strip() for s, e in seq.spans.get(name, ())]

