"""Five-class ABSA data model and the merge rules shared by every stage."""

from __future__ import annotations

import enum
import json
import re
import unicodedata
from collections import Counter
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Iterator, Mapping

PROVENANCE_SEP = "|"
MERGED_OVERALL_TAG = "merged-overall"
SPLITS = ("train", "validation", "test")

_WS = re.compile(r"\s+")


class AbsaForgeError(Exception):
    """Base class for every error raised by this package."""


class UnknownPolarity(AbsaForgeError, ValueError):
    def __init__(self, raw: object):
        self.raw = raw
        super().__init__(f"unknown sentiment polarity: {raw!r}")


class TextMismatch(AbsaForgeError, ValueError):
    pass


class GenerationUnparseable(AbsaForgeError, ValueError):
    """An LLM completion did not have the required structure."""


class Polarity(str, enum.Enum):
    POSITIVE = "positive"
    NEGATIVE = "negative"
    NEUTRAL = "neutral"
    MIXED = "mixed"
    UNKNOWN = "unknown"

    def __str__(self) -> str:
        return self.value


THREE_CLASSES = (Polarity.POSITIVE, Polarity.NEGATIVE, Polarity.NEUTRAL)
FIVE_CLASSES = tuple(Polarity)


def polarity_parse(raw: str) -> Polarity:
    """Parse a polarity name, ignoring case and surrounding whitespace."""
    if not isinstance(raw, str):
        raise UnknownPolarity(raw)
    try:
        return Polarity(raw.strip().lower())
    except ValueError:
        raise UnknownPolarity(raw) from None


def polarity_merge(p1: Polarity, p2: Polarity) -> Polarity:
    """Equal labels survive; any disagreement becomes ``mixed``."""
    return p1 if p1 is p2 else Polarity.MIXED


def normalize_text(text: str) -> str:
    """Equality key for texts and aspect names.

    NFC, trimmed, inner whitespace runs collapsed, case-folded. Re-normalised
    after folding because casefold can leave a non-NFC string.
    """
    s = unicodedata.normalize("NFC", text)
    s = _WS.sub(" ", s).strip().casefold()
    return unicodedata.normalize("NFC", s)


@dataclass(frozen=True, eq=False)
class AspectLabel:
    """An aspect term; compares and hashes by its normalized form."""

    name: str

    def __post_init__(self) -> None:
        if not isinstance(self.name, str) or not self.name.strip():
            raise ValueError("aspect name must be a non-empty string")

    @property
    def key(self) -> str:
        return normalize_text(self.name)

    def __eq__(self, other: object) -> bool:
        if isinstance(other, AspectLabel):
            return self.key == other.key
        return NotImplemented

    def __hash__(self) -> int:
        return hash(self.key)

    def __str__(self) -> str:
        return self.name


class ChainStatus(str, enum.Enum):
    GENERATED = "generated"
    REFINED = "refined"
    REJECTED = "rejected"


@dataclass(frozen=True)
class ReasoningChain:
    text: str
    status: ChainStatus = ChainStatus.GENERATED
    source_answer_correct: bool = True

    def to_dict(self) -> dict:
        return {
            "text": self.text,
            "status": self.status.value,
            "source_answer_correct": self.source_answer_correct,
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> ReasoningChain:
        return cls(
            text=str(d["text"]),
            status=ChainStatus(d.get("status", "generated")),
            source_answer_correct=bool(d.get("source_answer_correct", True)),
        )


def aspect_map(
    pairs: Iterable[tuple[AspectLabel | str, Polarity | str]] | Mapping,
) -> dict[AspectLabel, Polarity]:
    """Build an ordered aspect map, rejecting keys that collide after normalization."""
    items = pairs.items() if isinstance(pairs, Mapping) else pairs
    out: dict[AspectLabel, Polarity] = {}
    for aspect, pol in items:
        label = aspect if isinstance(aspect, AspectLabel) else AspectLabel(aspect)
        if label in out:
            raise ValueError(f"duplicate aspect {label.name!r}")
        out[label] = pol if isinstance(pol, Polarity) else polarity_parse(pol)
    return out


@dataclass(frozen=True)
class Sample:
    text: str
    aspects: dict[AspectLabel, Polarity] = field(default_factory=dict)
    overall: Polarity | None = None
    language: str = "en"
    source: str = "unknown"
    reasoning: ReasoningChain | None = None

    def __post_init__(self) -> None:
        if not isinstance(self.text, str) or not self.text.strip():
            raise ValueError("sample text must be non-empty")
        object.__setattr__(self, "aspects", aspect_map(self.aspects))
        if self.overall is not None and not isinstance(self.overall, Polarity):
            object.__setattr__(self, "overall", polarity_parse(self.overall))

    @property
    def key(self) -> str:
        return normalize_text(self.text)

    @property
    def provenance(self) -> tuple[str, ...]:
        return tuple(self.source.split(PROVENANCE_SEP))

    def with_aspects(self, aspects: Mapping[AspectLabel, Polarity]) -> Sample:
        return replace(self, aspects=dict(aspects))

    def to_dict(self) -> dict:
        d = {
            "text": self.text,
            "aspects": {a.name: p.value for a, p in self.aspects.items()},
            "overall": self.overall.value if self.overall else None,
            "language": self.language,
            "source": self.source,
        }
        if self.reasoning is not None:
            d["reasoning"] = self.reasoning.to_dict()
        return d

    @classmethod
    def from_dict(cls, d: Mapping) -> Sample:
        aspects = d.get("aspects") or {}
        if not isinstance(aspects, Mapping):
            raise ValueError("'aspects' must be an object")
        reasoning = d.get("reasoning")
        return cls(
            text=d.get("text"),
            aspects=aspects,
            overall=d.get("overall"),
            language=d.get("language") or "en",
            source=d.get("source") or "unknown",
            reasoning=ReasoningChain.from_dict(reasoning) if reasoning else None,
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), ensure_ascii=False)


def _merge_tags(*sources: str) -> str:
    tags: dict[str, None] = {}
    for s in sources:
        for tag in s.split(PROVENANCE_SEP):
            tags.setdefault(tag, None)
    return PROVENANCE_SEP.join(tags)


def sample_merge(s1: Sample, s2: Sample) -> Sample:
    """Union two annotations of the same text; conflicting labels become mixed."""
    if s1.key != s2.key:
        raise TextMismatch(f"cannot merge different texts: {s1.text!r} / {s2.text!r}")
    aspects = dict(s1.aspects)
    for aspect, pol in s2.aspects.items():
        aspects[aspect] = polarity_merge(aspects[aspect], pol) if aspect in aspects else pol

    extra = []
    if s1.overall is None or s2.overall is None:
        overall = s1.overall or s2.overall
    else:
        overall = polarity_merge(s1.overall, s2.overall)
        if s1.overall is not s2.overall:
            extra.append(MERGED_OVERALL_TAG)

    return Sample(
        text=s1.text,
        aspects=aspects,
        overall=overall,
        language=s1.language,
        source=_merge_tags(s1.source, s2.source, *extra),
        reasoning=s1.reasoning or s2.reasoning,
    )


def build_manifest(samples: Iterable[Sample]) -> tuple[tuple[str, int], ...]:
    counts = Counter(s.source for s in samples)
    return tuple(counts.items())


@dataclass(frozen=True)
class Dataset:
    samples: tuple[Sample, ...] = ()
    split: str = "train"
    manifest: tuple[tuple[str, int], ...] | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "samples", tuple(self.samples))
        if self.split not in SPLITS:
            raise ValueError(f"split must be one of {SPLITS}, got {self.split!r}")
        if self.manifest is None:
            object.__setattr__(self, "manifest", build_manifest(self.samples))
        else:
            manifest = tuple((str(k), int(v)) for k, v in self.manifest)
            if sum(v for _, v in manifest) != len(self.samples):
                raise ValueError("manifest counts must sum to the number of samples")
            object.__setattr__(self, "manifest", manifest)

    def __len__(self) -> int:
        return len(self.samples)

    def __iter__(self) -> Iterator[Sample]:
        return iter(self.samples)

    def __getitem__(self, i: int) -> Sample:
        return self.samples[i]

    def replace_samples(self, samples: Iterable[Sample]) -> Dataset:
        return Dataset(tuple(samples), split=self.split)

    @property
    def n_annotations(self) -> int:
        return sum(len(s.aspects) for s in self.samples)


def concat(datasets: Iterable[Dataset], split: str | None = None) -> Dataset:
    datasets = list(datasets)
    samples = [s for d in datasets for s in d.samples]
    if split is None:
        split = datasets[0].split if datasets else "train"
    return Dataset(tuple(samples), split=split)


def dumps_jsonl(samples: Iterable[Sample]) -> str:
    return "".join(s.to_json() + "\n" for s in samples)


def write_jsonl(path: str | Path, dataset: Dataset | Iterable[Sample]) -> None:
    Path(path).write_text(dumps_jsonl(dataset), encoding="utf-8")


def read_jsonl(path: str | Path, split: str = "train") -> Dataset:
    samples = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                samples.append(Sample.from_dict(json.loads(line)))
            except (ValueError, KeyError, TypeError) as exc:
                raise ValueError(f"{path}:{lineno}: {exc}") from exc
    return Dataset(tuple(samples), split=split)
