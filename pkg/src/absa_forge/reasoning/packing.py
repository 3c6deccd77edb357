"""Unpadded packing: concatenate whole samples, ``[SEP]``-delimited, up to ``l_max``."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from ..core import AbsaForgeError
from .masking import IGNORE_INDEX, MaskedSequence
from .sequences import Span, TokenSequence

PACK_FORMAT_VERSION = 1


class SequenceTooLong(AbsaForgeError, ValueError):
    pass


def plan_packs(lengths: Sequence[int], l_max: int, sep_cost: int = 1) -> list[list[int]]:
    """Greedy in-order packing; returns member indices per pack.

    A sequence joins the open pack when it fits together with its delimiter,
    otherwise it opens a new pack. Order is never changed.
    """
    if l_max < 1:
        raise ValueError("l_max must be >= 1")
    packs: list[list[int]] = []
    used = 0
    for i, n in enumerate(lengths):
        if n > l_max:
            raise SequenceTooLong(f"sequence {i} has {n} tokens, l_max is {l_max}")
        if packs and used + sep_cost + n <= l_max:
            packs[-1].append(i)
            used += sep_cost + n
        else:
            packs.append([i])
            used = n
    return packs


@dataclass(frozen=True)
class PackedSequence:
    tokens: tuple[int, ...]
    boundaries: tuple[tuple[int, int], ...]
    spans: tuple[Mapping[str, Span], ...] = ()
    labels: tuple[int, ...] | None = None
    selection_mask: tuple[bool, ...] | None = None
    members: tuple[int, ...] = field(default=())

    def __len__(self) -> int:
        return len(self.tokens)

    def unpack(self) -> list[tuple[int, ...]]:
        return [self.tokens[s:e] for s, e in self.boundaries]

    def to_record(self) -> dict:
        rec = {
            "version": PACK_FORMAT_VERSION,
            "input_tokens": list(self.tokens),
            "boundaries": [list(b) for b in self.boundaries],
            "members": list(self.members),
        }
        if self.labels is not None:
            rec["labels"] = list(self.labels)
            rec["selection_mask"] = [int(b) for b in self.selection_mask]
        return rec


def _shift(spans: Mapping[str, Span], offset: int) -> dict[str, Span]:
    return {k: tuple((s + offset, e + offset) for s, e in v) for k, v in spans.items()}


def pack(sequences: Sequence[TokenSequence | MaskedSequence], l_max: int, sep_id: int | None = None) -> list[PackedSequence]:
    """Pack token or masked sequences; delimiters are never selected for loss."""
    if not sequences:
        return []
    if sep_id is None:
        vocab = sequences[0].vocab
        if vocab is None:
            raise ValueError("sep_id is required when sequences carry no vocabulary")
        sep_id = vocab.sep_id
    masked = isinstance(sequences[0], MaskedSequence)
    out = []
    for members in plan_packs([len(s) for s in sequences], l_max):
        tokens: list[int] = []
        labels: list[int] = []
        selection: list[bool] = []
        bounds, spans = [], []
        for n, idx in enumerate(members):
            seq = sequences[idx]
            if n:
                tokens.append(sep_id)
                labels.append(IGNORE_INDEX)
                selection.append(False)
            start = len(tokens)
            if masked:
                tokens.extend(seq.input_tokens)
                labels.extend(seq.labels)
                selection.extend(seq.selection_mask)
            else:
                tokens.extend(seq.tokens)
            bounds.append((start, len(tokens)))
            spans.append(_shift(seq.spans, start))
        out.append(
            PackedSequence(
                tuple(tokens),
                tuple(bounds),
                tuple(spans),
                tuple(labels) if masked else None,
                tuple(selection) if masked else None,
                tuple(members),
            )
        )
    return out


def write_packs(path: str | Path, packs: Iterable[PackedSequence]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for p in packs:
            fh.write(json.dumps(p.to_record()) + "\n")
