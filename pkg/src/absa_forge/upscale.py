"""Grow a dataset with look-alike synthetic samples, favouring ``neutral``."""

from __future__ import annotations

import json
import logging
import math
import random
from dataclasses import dataclass, field
from typing import Sequence

from .core import (
    FIVE_CLASSES,
    THREE_CLASSES,
    AbsaForgeError,
    Dataset,
    Polarity,
    Sample,
    UnknownPolarity,
    aspect_map,
)
from .corpus import dataset_stats
from .gateway import ChatRequest, Gateway, GatewayError, GenParams
from .jsonextract import NoJsonFound, extract_json_object

logger = logging.getLogger(__name__)

SOURCE_TAG = "synthetic:upscale"


class MaxPassesExceeded(AbsaForgeError, RuntimeError):
    def __init__(self, passes: int, generated: int, target: int):
        self.passes = passes
        self.generated = generated
        self.target = target
        super().__init__(f"{passes} passes produced {generated} unique samples, needed {target}")


@dataclass(frozen=True)
class UpscaleConfig:
    batch_size: int = 10
    temperature: float = 0.3
    top_p: float = 0.95
    seed: int = 0
    max_passes: int = 50
    five_class: bool = False

    def __post_init__(self) -> None:
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.max_passes < 1:
            raise ValueError("max_passes must be >= 1")

    @property
    def classes(self) -> tuple[Polarity, ...]:
        return FIVE_CLASSES if self.five_class else THREE_CLASSES


def _exemplar(sample: Sample) -> str:
    return json.dumps(
        {"text": sample.text, "aspects": {a.name: p.value for a, p in sample.aspects.items()}},
        ensure_ascii=False,
    )


def build_upscale_prompt(batch: Sequence[Sample], config: UpscaleConfig | None = None) -> ChatRequest:
    if not batch:
        raise ValueError("batch must not be empty")
    config = config or UpscaleConfig()
    labels = ", ".join(p.value for p in config.classes)
    exemplars = "\n".join(f"{i}. {_exemplar(s)}" for i, s in enumerate(batch, 1))
    user = (
        f"Here are {len(batch)} labeled samples from an aspect-based sentiment dataset:\n"
        f"{exemplars}\n\n"
        "Write one new sample that is similar to these in style, topic and structure. "
        "It must be a new text, not a copy of any sample above. Label every aspect it "
        f"mentions with one of: {labels}.\n"
        "Prioritize the neutral sentiment: where it fits naturally, include aspects that "
        "are mentioned without a clear positive or negative opinion.\n\n"
        'Answer with a single JSON object: {"text": "<new text>", "aspects": {"<aspect>": "<sentiment>"}}'
    )
    return ChatRequest.chat(
        "You generate training data for aspect-based sentiment analysis.",
        user,
        GenParams(temperature=config.temperature, top_p=config.top_p, max_tokens=512),
        tag="upscale",
    )


def parse_upscale(raw: str, config: UpscaleConfig, language: str = "en") -> Sample | None:
    """The valid-result check; ``None`` when the completion is unusable."""
    try:
        obj = extract_json_object(raw)
        aspects = aspect_map(obj.get("aspects") or {})
        text = obj.get("text")
        if not aspects or not isinstance(text, str) or not text.strip():
            return None
    except (NoJsonFound, UnknownPolarity, ValueError, TypeError, AttributeError):
        return None
    if any(p not in config.classes for p in aspects.values()):
        return None
    return Sample(text=text.strip(), aspects=aspects, language=language, source=SOURCE_TAG)


@dataclass
class UpscaleReport:
    passes: int = 0
    calls: int = 0
    calls_per_pass: list[int] = field(default_factory=list)
    invalid: int = 0
    duplicates: int = 0
    class_counts: dict[str, int] = field(default_factory=dict)

    @property
    def neutral_share(self) -> float:
        total = sum(self.class_counts.values())
        return self.class_counts.get("neutral", 0) / total if total else 0.0

    def to_dict(self) -> dict:
        return {
            "passes": self.passes,
            "calls": self.calls,
            "calls_per_pass": self.calls_per_pass,
            "invalid": self.invalid,
            "duplicates": self.duplicates,
            "class_counts": self.class_counts,
            "neutral_share": self.neutral_share,
        }


def upscale(dataset: Dataset, config: UpscaleConfig, gateway: Gateway) -> tuple[Dataset, UpscaleReport]:
    """Shuffle, batch, generate one sample per batch; repeat until big enough.

    The loop counts generated samples after deduplication (within the new
    samples and against the originals), so a generator that keeps repeating
    itself runs into ``max_passes`` instead of ending with a tiny dataset.
    Returns only the generated samples.
    """
    if not len(dataset):
        raise ValueError("cannot upscale an empty dataset")
    rng = random.Random(config.seed)
    order = list(dataset.samples)
    target = len(order)
    seen = {s.key for s in order}
    generated: list[Sample] = []
    report = UpscaleReport()
    language = order[0].language

    while len(generated) < target:
        if report.passes >= config.max_passes:
            raise MaxPassesExceeded(report.passes, len(generated), target)
        report.passes += 1
        rng.shuffle(order)
        batches = [order[i : i + config.batch_size] for i in range(0, len(order), config.batch_size)]
        assert len(batches) == math.ceil(target / config.batch_size)
        results = gateway.complete_many([build_upscale_prompt(b, config) for b in batches])
        report.calls += len(batches)
        report.calls_per_pass.append(len(batches))
        for raw in results:
            sample = None if isinstance(raw, GatewayError) else parse_upscale(raw, config, language)
            if sample is None:
                report.invalid += 1
            elif sample.key in seen:
                report.duplicates += 1
            else:
                seen.add(sample.key)
                generated.append(sample)
        logger.info("upscale pass %d: %d/%d samples", report.passes, len(generated), target)

    out = Dataset(tuple(generated), split=dataset.split)
    row = dataset_stats(out).rows[0]
    report.class_counts = {p.value: c for p, c in zip(FIVE_CLASSES, row.counts)}
    return out, report
