"""Reference tokenizer and vocabulary.

Tokens are words or single punctuation marks carrying their leading
whitespace, so ``decode(encode(s)) == s`` for every string. Real subword
vocabularies can stand in as long as they offer ``encode``/``decode`` and a
:class:`Vocab`-like ``vocab`` attribute.
"""

from __future__ import annotations

import json
import re
from pathlib import Path
from typing import Iterable, Protocol, Sequence

PAD, CLS, SEP, MASK, UNK = "[PAD]", "[CLS]", "[SEP]", "[MASK]", "[UNK]"
SPECIAL_TOKENS = (PAD, CLS, SEP, MASK, UNK)
VOCAB_VERSION = 1

_TOKEN = re.compile(r"\s*(?:\w+|[^\w\s])|\s+")


class Vocab:
    def __init__(self, tokens: Iterable[str] = ()):
        self._tokens: list[str] = []
        self._ids: dict[str, int] = {}
        for t in SPECIAL_TOKENS:
            self.add(t)
        for t in tokens:
            self.add(t)

    def add(self, token: str) -> int:
        idx = self._ids.get(token)
        if idx is None:
            idx = self._ids[token] = len(self._tokens)
            self._tokens.append(token)
        return idx

    def __len__(self) -> int:
        return len(self._tokens)

    def __contains__(self, token: str) -> bool:
        return token in self._ids

    def id(self, token: str) -> int:
        return self._ids.get(token, self._ids[UNK])

    def token(self, idx: int) -> str:
        return self._tokens[idx]

    @property
    def pad_id(self) -> int:
        return self._ids[PAD]

    @property
    def cls_id(self) -> int:
        return self._ids[CLS]

    @property
    def sep_id(self) -> int:
        return self._ids[SEP]

    @property
    def mask_id(self) -> int:
        return self._ids[MASK]

    @property
    def special_ids(self) -> frozenset[int]:
        return frozenset(self._ids[t] for t in SPECIAL_TOKENS)

    def regular_ids(self) -> range:
        """Ids of ordinary tokens; specials occupy the first slots."""
        return range(len(SPECIAL_TOKENS), len(self._tokens))

    def to_dict(self) -> dict:
        return {"version": VOCAB_VERSION, "tokens": self._tokens[len(SPECIAL_TOKENS) :]}

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), ensure_ascii=False) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> Vocab:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
        if doc.get("version") != VOCAB_VERSION:
            raise ValueError(f"unsupported vocab version {doc.get('version')!r}")
        return cls(doc["tokens"])


class Tokenizer(Protocol):
    vocab: Vocab

    def encode(self, text: str) -> list[int]: ...

    def decode(self, ids: Sequence[int]) -> str: ...


class ReferenceTokenizer:
    def __init__(self, vocab: Vocab | None = None, grow: bool = True):
        self.vocab = vocab if vocab is not None else Vocab()
        self.grow = grow

    @staticmethod
    def tokenize(text: str) -> list[str]:
        return _TOKEN.findall(text)

    def encode(self, text: str) -> list[int]:
        lookup = self.vocab.add if self.grow else self.vocab.id
        return [lookup(t) for t in self.tokenize(text)]

    def decode(self, ids: Sequence[int]) -> str:
        return "".join(self.vocab.token(i) for i in ids)
