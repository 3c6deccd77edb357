"""Targeted masked-LM corruption.

A ``ratio`` share of positions is selected, always including every
sentiment-label token; the remaining budget is filled uniformly from the
other positions. Selected positions are then corrupted the usual way:
80% ``[MASK]``, 10% a random regular token, 10% left as is.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, field
from typing import Mapping

from ..core import AbsaForgeError
from .sequences import Span, TokenSequence
from .tokenizer import Vocab

IGNORE_INDEX = -100


class RatioTooSmall(AbsaForgeError, ValueError):
    pass


@dataclass(frozen=True)
class MaskedSequence:
    input_tokens: tuple[int, ...]
    labels: tuple[int, ...]
    selection_mask: tuple[bool, ...]
    spans: Mapping[str, Span] = field(default_factory=dict)
    vocab: Vocab | None = field(default=None, compare=False, repr=False)

    def __post_init__(self) -> None:
        if not len(self.input_tokens) == len(self.labels) == len(self.selection_mask):
            raise ValueError("input_tokens, labels and selection_mask differ in length")
        if any((lab != IGNORE_INDEX) != sel for lab, sel in zip(self.labels, self.selection_mask)):
            raise ValueError("labels must be set exactly at selected positions")

    def __len__(self) -> int:
        return len(self.input_tokens)

    def to_record(self) -> dict:
        return {
            "input_tokens": list(self.input_tokens),
            "labels": list(self.labels),
            "selection_mask": [int(b) for b in self.selection_mask],
            "spans": {k: [list(r) for r in v] for k, v in self.spans.items()},
        }

    @classmethod
    def from_record(cls, rec: Mapping, vocab: Vocab | None = None) -> MaskedSequence:
        spans = {k: tuple(tuple(r) for r in v) for k, v in rec.get("spans", {}).items()}
        return cls(
            tuple(rec["input_tokens"]), tuple(rec["labels"]), tuple(bool(b) for b in rec["selection_mask"]), spans, vocab
        )


def selection_budget(length: int, ratio: float) -> int:
    # round() first so 0.3 * 20 style products do not ceil up on float noise
    return min(length, math.ceil(round(ratio * length, 9)))


def targeted_mask(
    seq: TokenSequence,
    ratio: float = 0.30,
    rng: random.Random | int | None = None,
    *,
    mask_prob: float = 0.8,
    random_prob: float = 0.1,
) -> MaskedSequence:
    if not 0.0 < ratio <= 1.0:
        raise ValueError("ratio must be in (0, 1]")
    vocab = seq.vocab
    if vocab is None:
        raise ValueError("sequence carries no vocabulary")
    rng = rng if isinstance(rng, random.Random) else random.Random(rng)

    sentiment = seq.positions("sentiments")
    if not sentiment:
        raise ValueError("sequence has no sentiment tokens to target")
    budget = selection_budget(len(seq), ratio)
    if len(sentiment) > budget:
        raise RatioTooSmall(f"{len(sentiment)} sentiment tokens exceed the budget of {budget}")

    forced = set(sentiment)
    delimiters = {vocab.sep_id, vocab.pad_id}
    others = [i for i, t in enumerate(seq.tokens) if i not in forced and t not in delimiters]
    chosen = forced.union(rng.sample(others, min(budget - len(forced), len(others))))

    regular = vocab.regular_ids()
    inputs = list(seq.tokens)
    labels = [IGNORE_INDEX] * len(inputs)
    selected = [False] * len(inputs)
    for i in sorted(chosen):
        selected[i] = True
        labels[i] = inputs[i]
        u = rng.random()
        if u < mask_prob:
            inputs[i] = vocab.mask_id
        elif u < mask_prob + random_prob:
            inputs[i] = regular[rng.randrange(len(regular))]
    return MaskedSequence(tuple(inputs), tuple(labels), tuple(selected), seq.spans, vocab)
