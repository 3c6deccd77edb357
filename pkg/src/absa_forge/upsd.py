"""Upside-down synthetic data generation.

Labels come first: a spec of aspect/polarity pairs is sampled from the seed
corpus, and the LLM writes a text that carries exactly those sentiments.
"""

from __future__ import annotations

import json
import logging
import random
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Mapping, Sequence

import yaml

from .core import (
    FIVE_CLASSES,
    AbsaForgeError,
    AspectLabel,
    ChainStatus,
    Dataset,
    GenerationUnparseable,
    Polarity,
    ReasoningChain,
    Sample,
    UnknownPolarity,
    aspect_map,
)
from .corpus import dedup_merge
from .gateway import ChatRequest, Gateway, GatewayError, GenParams
from .jsonextract import NoJsonFound, extract_json_object
from .seeding import as_rng

logger = logging.getLogger(__name__)

CORPUS_VERSION = 1
MIN_PAIRS, MAX_PAIRS = 1, 6
SOURCE_TAG = "synthetic:upsd"
DEFAULT_CORPUS = Path(__file__).parent / "data" / "seed_corpus.yaml"


class CorpusSchemaError(AbsaForgeError, ValueError):
    pass


class SpecMismatch(AbsaForgeError, ValueError):
    pass


class BudgetExhausted(AbsaForgeError, RuntimeError):
    def __init__(self, collected: int, attempted: int):
        self.collected = collected
        self.attempted = attempted
        super().__init__(f"collected {collected} samples after {attempted} attempts")


@dataclass(frozen=True)
class Category:
    name: str
    aspects: tuple[tuple[AspectLabel, tuple[str, ...]], ...]

    def __post_init__(self) -> None:
        if not self.aspects:
            raise CorpusSchemaError(f"category {self.name!r} has no aspects")


@dataclass(frozen=True)
class SeedCorpus:
    categories: tuple[Category, ...]
    personas: tuple[str, ...]

    def __post_init__(self) -> None:
        names = [c.name for c in self.categories]
        if len(set(names)) != len(names):
            raise CorpusSchemaError("category names must be unique")
        if not self.categories:
            raise CorpusSchemaError("corpus has no categories")
        if not self.personas or any(not isinstance(p, str) or not p.strip() for p in self.personas):
            raise CorpusSchemaError("personas must be a non-empty list of non-empty strings")

    def category(self, name: str) -> Category:
        for c in self.categories:
            if c.name == name:
                return c
        raise KeyError(name)


def parse_seed_corpus(doc: Mapping) -> SeedCorpus:
    if not isinstance(doc, Mapping):
        raise CorpusSchemaError("corpus document must be a mapping")
    if doc.get("version", CORPUS_VERSION) != CORPUS_VERSION:
        raise CorpusSchemaError(f"unsupported corpus version {doc.get('version')!r}")
    categories = []
    for raw in doc.get("categories") or []:
        try:
            aspects = []
            for entry in raw["aspects"]:
                keywords = entry.get("keywords", [])
                if keywords is None or not isinstance(keywords, list):
                    raise CorpusSchemaError(f"keywords of {entry.get('aspect')!r} must be a list")
                aspects.append((AspectLabel(entry["aspect"]), tuple(str(k) for k in keywords)))
            categories.append(Category(str(raw["name"]), tuple(aspects)))
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, CorpusSchemaError):
                raise
            raise CorpusSchemaError(f"malformed category: {exc}") from exc
    return SeedCorpus(tuple(categories), tuple(doc.get("personas") or ()))


def load_seed_corpus(path: str | Path = DEFAULT_CORPUS) -> SeedCorpus:
    try:
        doc = yaml.safe_load(Path(path).read_text(encoding="utf-8"))
    except yaml.YAMLError as exc:
        raise CorpusSchemaError(f"{path}: {exc}") from exc
    return parse_seed_corpus(doc)


def normalize_policy(policy: Mapping | Sequence[float] | None) -> tuple[float, ...]:
    """Five weights in positive/negative/neutral/mixed/unknown order."""
    if policy is None:
        return (0.2,) * 5
    if isinstance(policy, Mapping):
        weights = {Polarity(k) if not isinstance(k, Polarity) else k: float(v) for k, v in policy.items()}
        policy = [weights.get(p, 0.0) for p in FIVE_CLASSES]
    weights = tuple(float(w) for w in policy)
    if len(weights) != 5 or any(w < 0 for w in weights):
        raise ValueError("policy needs five non-negative weights")
    if abs(sum(weights) - 1.0) > 1e-9:
        raise ValueError(f"policy weights must sum to 1, got {sum(weights)}")
    return weights


@dataclass(frozen=True)
class GenerationSpec:
    category: str
    pairs: dict[AspectLabel, Polarity]
    keywords: tuple[str, ...]
    persona: str
    constraints: str | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "pairs", aspect_map(self.pairs))
        if not MIN_PAIRS <= len(self.pairs) <= MAX_PAIRS:
            raise ValueError(f"a spec carries {MIN_PAIRS}-{MAX_PAIRS} pairs")


def sample_spec(
    corpus: SeedCorpus,
    rng_seed: int | random.Random,
    policy: Mapping | Sequence[float] | None = None,
    constraints: str | None = None,
) -> GenerationSpec:
    rng = as_rng(rng_seed)
    weights = normalize_policy(policy)
    cat = rng.choice(corpus.categories)
    k = rng.randint(MIN_PAIRS, min(MAX_PAIRS, len(cat.aspects)))
    chosen = rng.sample(cat.aspects, k)
    pols = rng.choices(FIVE_CLASSES, weights=weights, k=k)
    keywords = tuple(rng.choice(kws) for _, kws in chosen if kws)
    persona = rng.choice(corpus.personas)
    return GenerationSpec(
        category=cat.name,
        pairs={a: p for (a, _), p in zip(chosen, pols)},
        keywords=keywords,
        persona=persona,
        constraints=constraints,
    )


def iter_specs(corpus: SeedCorpus, rng_seed: int, policy=None, constraints: str | None = None) -> Iterator[GenerationSpec]:
    """The spec stream :func:`forge_dataset` consumes, one RNG for all draws."""
    rng = random.Random(rng_seed)
    while True:
        yield sample_spec(corpus, rng, policy, constraints)


GENERATION_SYSTEM = (
    "You write realistic customer texts for an aspect-based sentiment analysis "
    "dataset. You are given the sentiment each aspect must carry and you write "
    "a text that expresses exactly those sentiments."
)

LABEL_GUIDE = """Sentiment labels:
- positive: the text expresses a favourable opinion about the aspect.
- negative: the text expresses an unfavourable opinion about the aspect.
- neutral: the aspect is mentioned without a clear opinion.
- mixed: the text expresses both favourable and unfavourable opinions about the same aspect (this is about the aspect itself, not the text as a whole).
- unknown: the aspect must not be mentioned at all, neither explicitly nor implicitly."""

FEW_SHOT = """Example 1
Aspects:
battery life: positive
price: negative
customer service: neutral
Answer:
{"reasoning": "Battery life needs clear praise. Price needs a complaint. Customer service should be mentioned without an opinion, for example as a plain fact.", "aspects": {"battery life": "positive", "price": "negative", "customer service": "neutral"}, "text": "The battery easily lasts two days, which I love, but honestly the price is way too steep for what you get. I contacted customer service once to register the warranty."}

Example 2
Aspects:
room: mixed
parking: unknown
Answer:
{"reasoning": "The room must get praise and criticism at the aspect level: spacious but noisy. Parking is unknown, so the text must not refer to parking, cars or garages in any way.", "aspects": {"room": "mixed", "parking": "unknown"}, "text": "Our room was huge and had a lovely view, yet the thin walls meant we heard every conversation in the corridor."}"""

ANSWER_FORMAT = (
    'Answer with a single JSON object with the keys "reasoning" (think step by step '
    'about how each sentiment will be expressed), "aspects" (repeat every aspect with its '
    'required sentiment, unchanged) and "text" (the generated text).'
)


def _pairs_block(pairs: Mapping[AspectLabel, Polarity]) -> str:
    return "Aspects:\n" + "\n".join(f"{a.name}: {p.value}" for a, p in pairs.items())


def build_generation_prompt(spec: GenerationSpec) -> ChatRequest:
    blocks = [
        LABEL_GUIDE,
        FEW_SHOT,
        f"Domain: {spec.category}",
        _pairs_block(spec.pairs),
        "Keywords to draw on (guidance only, not labels): " + (", ".join(spec.keywords) or "none"),
        f"Persona and style:\n{spec.persona}",
    ]
    if spec.constraints:
        blocks.append(f"Additional constraints: {spec.constraints}")
    blocks.append(ANSWER_FORMAT)
    return ChatRequest.chat(
        GENERATION_SYSTEM,
        "\n\n".join(blocks),
        GenParams(temperature=0.0, top_p=1.0, max_tokens=1024, json_mode=True),
        tag="upsd",
    )


def parse_generation(raw: str, spec: GenerationSpec) -> Sample:
    try:
        obj = extract_json_object(raw)
    except NoJsonFound as exc:
        raise GenerationUnparseable(str(exc)) from None
    text, echoed, reasoning = obj.get("text"), obj.get("aspects"), obj.get("reasoning")
    if not isinstance(text, str) or not text.strip():
        raise GenerationUnparseable("missing generated text")
    if not isinstance(reasoning, str) or not reasoning.strip():
        raise GenerationUnparseable("missing reasoning")
    if not isinstance(echoed, Mapping):
        raise GenerationUnparseable("missing echoed aspect list")
    try:
        echo = aspect_map(echoed)
    except UnknownPolarity as exc:
        raise SpecMismatch(str(exc)) from None
    except ValueError as exc:
        raise GenerationUnparseable(str(exc)) from None
    if echo != spec.pairs:
        raise SpecMismatch(
            "echoed labels differ from spec: "
            + json.dumps({a.name: p.value for a, p in echo.items()}, ensure_ascii=False)
        )
    return Sample(
        text=text.strip(),
        aspects=spec.pairs,
        language="en",
        source=SOURCE_TAG,
        reasoning=ReasoningChain(reasoning.strip(), ChainStatus.GENERATED, True),
    )


def generate_sample(spec: GenerationSpec, gateway: Gateway) -> Sample:
    return parse_generation(gateway.complete(build_generation_prompt(spec)), spec)


@dataclass
class ForgeLog:
    attempted: int = 0
    duplicates: int = 0
    failures: dict[str, int] = field(default_factory=dict)


def forge_dataset(
    corpus: SeedCorpus,
    count: int,
    policy,
    gateway: Gateway,
    rng_seed: int,
    constraints: str | None = None,
    log: ForgeLog | None = None,
) -> Dataset:
    """Generate ``count`` valid, distinct samples within ``2 * count`` attempts.

    Each round requests exactly the missing number of samples; results are
    collected in spec order so concurrency never changes the output.
    """
    if count <= 0:
        raise ValueError("count must be positive")
    log = log or ForgeLog()
    budget = 2 * count
    specs = iter_specs(corpus, rng_seed, policy, constraints)
    collected: list[Sample] = []
    seen: set[str] = set()
    while len(collected) < count and log.attempted < budget:
        n = min(count - len(collected), budget - log.attempted)
        round_specs = [next(specs) for _ in range(n)]
        log.attempted += n
        results = gateway.complete_many([build_generation_prompt(s) for s in round_specs])
        for spec, raw in zip(round_specs, results):
            try:
                if isinstance(raw, GatewayError):
                    raise raw
                sample = parse_generation(raw, spec)
            except (GatewayError, GenerationUnparseable, SpecMismatch) as exc:
                kind = type(exc).__name__
                log.failures[kind] = log.failures.get(kind, 0) + 1
                continue
            if sample.key in seen:
                # Merging would blend two specs' labels; drop the echo instead.
                log.duplicates += 1
                logger.info("dedup: dropped duplicate generated text %r", sample.text[:60])
                continue
            seen.add(sample.key)
            collected.append(sample)
    if len(collected) < count:
        raise BudgetExhausted(len(collected), log.attempted)
    return dedup_merge(Dataset(tuple(collected), split="train"))
