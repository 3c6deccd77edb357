"""Ingest public ABSA sources and clean the merged corpus."""

from __future__ import annotations

import csv
import json
import logging
import random
import xml.etree.ElementTree as ET
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Iterator, Mapping

from .core import (
    FIVE_CLASSES,
    AbsaForgeError,
    AspectLabel,
    Dataset,
    Polarity,
    Sample,
    UnknownPolarity,
    concat,
    polarity_merge,
    polarity_parse,
    sample_merge,
)
from .gateway import Gateway, GatewayError, translation_request

logger = logging.getLogger(__name__)


class AdapterParseError(AbsaForgeError, ValueError):
    def __init__(self, line: int, cause: object):
        self.line = line
        self.cause = cause
        super().__init__(f"line {line}: {cause}")


class PoolTooSmall(AbsaForgeError, ValueError):
    pass


@dataclass(frozen=True)
class SourceDescriptor:
    """Where a public dataset lives and how to read it.

    ``field_map`` maps source columns (or XML tags) to canonical fields; it
    must name a source for ``text`` and ``aspects``. ``polarity_map``
    translates dataset-specific labels such as SemEval's ``conflict``.
    """

    id: str
    path: str
    format: str = "jsonl-canonical"
    field_map: Mapping[str, str] = field(default_factory=dict)
    default_language: str = "en"
    polarity_map: Mapping[str, str] = field(default_factory=dict)
    exclude_from_encoder_train: bool = False

    def __post_init__(self) -> None:
        if self.format not in ADAPTERS:
            raise ValueError(f"unknown adapter {self.format!r}; known: {sorted(ADAPTERS)}")
        fm = dict(DEFAULT_FIELD_MAPS[self.format])
        fm.update(self.field_map or {})
        targets = set(fm.values())
        if not {"text", "aspects"} <= targets:
            raise ValueError(f"field_map of {self.id!r} must cover text and aspects")
        object.__setattr__(self, "field_map", fm)
        object.__setattr__(self, "polarity_map", dict(self.polarity_map or {}))

    @classmethod
    def from_dict(cls, d: Mapping, base: Path | None = None) -> SourceDescriptor:
        d = dict(d)
        path = Path(d.pop("path"))
        if base is not None and not path.is_absolute():
            path = base / path
        return cls(path=str(path), **d)

    def source_of(self, canonical: str) -> str | None:
        for src, dst in self.field_map.items():
            if dst == canonical:
                return src
        return None

    def polarity(self, raw: str) -> Polarity:
        key = raw.strip().lower() if isinstance(raw, str) else raw
        return polarity_parse(self.polarity_map.get(key, raw))


def _row_aspects(desc: SourceDescriptor, pairs: Iterable[tuple[str, str]]) -> dict[AspectLabel, Polarity]:
    # A source listing one aspect twice is a conflict like any other.
    out: dict[AspectLabel, Polarity] = {}
    for name, raw in pairs:
        label = AspectLabel(name)
        pol = desc.polarity(raw)
        out[label] = polarity_merge(out[label], pol) if label in out else pol
    return out


def _make_sample(desc: SourceDescriptor, text, aspects, overall=None, language=None) -> Sample:
    if not isinstance(text, str) or not text.strip():
        raise ValueError("empty text")
    return Sample(
        text=text,
        aspects=aspects,
        overall=desc.polarity(overall) if overall not in (None, "") else None,
        language=language or desc.default_language,
        source=desc.id,
    )


def _read_jsonl(desc: SourceDescriptor) -> Iterator[tuple[int, Callable[[], Sample]]]:
    fm = {dst: src for src, dst in desc.field_map.items()}
    with open(desc.path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue

            def build(line=line) -> Sample:
                row = json.loads(line)
                aspects = row.get(fm["aspects"]) or {}
                if not isinstance(aspects, Mapping):
                    raise ValueError("aspects must be an object")
                return _make_sample(
                    desc,
                    row.get(fm["text"]),
                    _row_aspects(desc, aspects.items()),
                    row.get(fm.get("overall", "overall")),
                    row.get(fm.get("language", "language")),
                )

            yield lineno, build


def parse_pairs(cell: str) -> list[tuple[str, str]]:
    """Parse ``"battery life:positive; price:negative"``."""
    pairs = []
    for chunk in (cell or "").split(";"):
        if not chunk.strip():
            continue
        if ":" not in chunk:
            raise ValueError(f"aspect pair without polarity: {chunk.strip()!r}")
        name, pol = chunk.rsplit(":", 1)
        pairs.append((name.strip(), pol.strip()))
    return pairs


def _read_csv(desc: SourceDescriptor) -> Iterator[tuple[int, Callable[[], Sample]]]:
    fm = {dst: src for src, dst in desc.field_map.items()}
    with open(desc.path, encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        for row in reader:
            lineno = reader.line_num

            def build(row=row) -> Sample:
                return _make_sample(
                    desc,
                    row.get(fm["text"]),
                    _row_aspects(desc, parse_pairs(row.get(fm["aspects"], ""))),
                    row.get(fm["overall"]) if "overall" in fm else None,
                    row.get(fm["language"]) if "language" in fm else None,
                )

            yield lineno, build


def _read_semeval(desc: SourceDescriptor) -> Iterator[tuple[int, Callable[[], Sample]]]:
    fm = {dst: src for src, dst in desc.field_map.items()}
    try:
        root = ET.parse(desc.path).getroot()
    except ET.ParseError as exc:
        raise AdapterParseError(exc.position[0], exc) from exc
    for idx, sent in enumerate(root.iter("sentence"), 1):

        def build(sent=sent) -> Sample:
            text_el = sent.find(fm["text"])
            pairs = [(el.get("term"), el.get("polarity")) for el in sent.iter(fm["aspects"])]
            if any(name is None or pol is None for name, pol in pairs):
                raise ValueError("aspect element needs term and polarity attributes")
            return _make_sample(desc, text_el.text if text_el is not None else None, _row_aspects(desc, pairs))

        yield idx, build


ADAPTERS = {
    "jsonl-canonical": _read_jsonl,
    "csv-pairs": _read_csv,
    "semeval-xml-like": _read_semeval,
}
DEFAULT_FIELD_MAPS = {
    "jsonl-canonical": {"text": "text", "aspects": "aspects", "overall": "overall", "language": "language"},
    "csv-pairs": {"text": "text", "aspects": "aspects"},
    "semeval-xml-like": {"text": "text", "aspectTerm": "aspects"},
}


def ingest(descriptor: SourceDescriptor, split: str = "train") -> Dataset:
    """Read one source into canonical samples tagged with the descriptor id.

    Duplicates are kept here; :func:`dedup_merge` handles them.
    """
    path = Path(descriptor.path)
    if not path.exists():
        raise FileNotFoundError(path)
    samples = []
    for line, build in ADAPTERS[descriptor.format](descriptor):
        try:
            samples.append(build())
        except UnknownPolarity:
            raise
        except (ValueError, KeyError, TypeError, AttributeError) as exc:
            raise AdapterParseError(line, exc) from exc
    logger.info("ingested %d samples from %s", len(samples), descriptor.id)
    return Dataset(tuple(samples), split=split, manifest=((descriptor.id, len(samples)),))


def dedup_merge(dataset: Dataset) -> Dataset:
    """Merge samples with equal normalized text, keeping first-occurrence order."""
    index: dict[str, int] = {}
    merged: list[Sample] = []
    for s in dataset.samples:
        k = s.key
        if k in index:
            merged[index[k]] = sample_merge(merged[index[k]], s)
        else:
            index[k] = len(merged)
            merged.append(s)
    if len(merged) == len(dataset.samples):
        return dataset
    return dataset.replace_samples(merged)


@dataclass(frozen=True)
class LeakReport:
    collisions: tuple[tuple[int, int, str], ...] = ()
    removed_count: int = 0

    def to_dict(self) -> dict:
        return {
            "removed_count": self.removed_count,
            "collisions": [{"train_index": t, "eval_index": e, "text": k} for t, e, k in self.collisions],
        }


def leak_check(train: Dataset, eval_set: Dataset) -> tuple[Dataset, LeakReport]:
    """Drop training samples whose normalized text occurs in the eval split."""
    eval_index: dict[str, int] = {}
    for j, s in enumerate(eval_set.samples):
        eval_index.setdefault(s.key, j)
    kept, collisions = [], []
    for i, s in enumerate(train.samples):
        j = eval_index.get(s.key)
        if j is None:
            kept.append(s)
        else:
            collisions.append((i, j, s.key))
    report = LeakReport(tuple(collisions), len(collisions))
    if not collisions:
        return train, report
    return train.replace_samples(kept), report


STATS_COLUMNS = ("Dataset", "#Samples", "#Unique aspects", "#Pos", "#Neg", "#Neu", "#Mixed", "#Unk")


@dataclass(frozen=True)
class StatsRow:
    name: str
    sample_count: int
    unique_aspect_count: int
    counts: tuple[int, int, int, int, int]

    @property
    def total_annotations(self) -> int:
        return sum(self.counts)

    def cells(self) -> tuple:
        return (self.name, self.sample_count, self.unique_aspect_count, *self.counts)

    def to_dict(self) -> dict:
        d = {"dataset": self.name, "samples": self.sample_count, "unique_aspects": self.unique_aspect_count}
        d.update({p.value: c for p, c in zip(FIVE_CLASSES, self.counts)})
        return d


@dataclass(frozen=True)
class StatsTable:
    rows: tuple[StatsRow, ...]

    def to_dict(self) -> dict:
        return {"columns": list(STATS_COLUMNS), "rows": [r.to_dict() for r in self.rows]}

    def format(self) -> str:
        table = [STATS_COLUMNS] + [tuple(map(str, r.cells())) for r in self.rows]
        widths = [max(len(row[i]) for row in table) for i in range(len(STATS_COLUMNS))]
        lines = []
        for n, row in enumerate(table):
            cells = [row[0].ljust(widths[0])] + [c.rjust(w) for c, w in zip(row[1:], widths[1:])]
            lines.append("  ".join(cells))
            if n == 0:
                lines.append("  ".join("-" * w for w in widths))
        return "\n".join(lines)


def dataset_stats(dataset: Dataset, name: str = "dataset") -> StatsTable:
    """Sample count, unique aspects and per-polarity aspect annotation counts."""
    counts = dict.fromkeys(FIVE_CLASSES, 0)
    unique: set[AspectLabel] = set()
    for s in dataset.samples:
        for aspect, pol in s.aspects.items():
            unique.add(aspect)
            counts[pol] += 1
    row = StatsRow(name, len(dataset), len(unique), tuple(counts[p] for p in FIVE_CLASSES))
    return StatsTable((row,))


def stats_table(named: Mapping[str, Dataset]) -> StatsTable:
    return StatsTable(tuple(dataset_stats(d, name).rows[0] for name, d in named.items()))


def sample_overalls(sources: Iterable[Dataset], n: int, seed: int) -> Dataset:
    """Uniformly sample ``n`` document-level samples without replacement.

    Only samples carrying an overall label enter the pool; kept samples lose
    their aspect map because they are queried through the overall pseudo-aspect.
    """
    pool = [s for s in concat(list(sources)).samples if s.overall is not None]
    if n > len(pool):
        raise PoolTooSmall(f"need {n} samples, pool has {len(pool)}")
    picked = sorted(random.Random(seed).sample(range(len(pool)), n))
    return Dataset(tuple(pool[i].with_aspects({}) for i in picked), split="test")


def translate_dataset(dataset: Dataset, language: str, gateway: Gateway) -> tuple[Dataset, int]:
    """Translate texts and aspect names; polarities are untouched.

    Returns the translated dataset and the number of samples dropped because
    a translation call failed.
    """
    if language not in gateway.languages:
        raise ValueError(f"unsupported language {language!r}")
    plans, requests = [], []
    for s in dataset.samples:
        if s.language == language:
            plans.append(None)
            continue
        reqs = [translation_request(s.text, language, s.language)]
        reqs += [translation_request(a.name, language, s.language) for a in s.aspects]
        plans.append((len(requests), len(reqs)))
        requests.extend(reqs)
    results = gateway.complete_many(requests)

    out, dropped = [], 0
    for s, plan in zip(dataset.samples, plans):
        suffix = s.source + ":translated"
        if plan is None:
            out.append(Sample(s.text, s.aspects, s.overall, language, suffix, s.reasoning))
            continue
        start, count = plan
        got = results[start : start + count]
        if any(isinstance(r, GatewayError) for r in got):
            dropped += 1
            continue
        text, *names = (r.strip() for r in got)
        try:
            aspects = {AspectLabel(n): p for n, p in zip(names, s.aspects.values())}
            if len(aspects) != len(s.aspects):
                raise ValueError("translated aspect names collide")
            out.append(Sample(text, aspects, s.overall, language, suffix, s.reasoning))
        except ValueError as exc:
            logger.warning("dropping sample after translation: %s", exc)
            dropped += 1
    if dropped:
        logger.warning("translation to %s dropped %d samples", language, dropped)
    return dataset.replace_samples(out), dropped

