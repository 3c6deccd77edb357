"""Add absent aspects labeled ``unknown`` to a random share of samples.

For each sample a uniform draw ``r`` decides whether it is modified
(``r <= p``). Modified samples receive ``n ~ U{a..b}`` candidate aspects taken
from the dataset-wide aspect universe minus the sample's own aspects; each
candidate must be confirmed absent by the LLM judge before it is added.
"""

from __future__ import annotations

import logging
import random
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .core import AbsaForgeError, AspectLabel, Dataset, Polarity, Sample
from .gateway import Gateway, GatewayError, judge_request, parse_verdict
from .seeding import derive_seed

logger = logging.getLogger(__name__)


class InsufficientCandidates(AbsaForgeError, ValueError):
    pass


@dataclass(frozen=True)
class InjectionConfig:
    p: float = 0.25
    a: int = 2
    b: int = 4
    seed: int = 0

    def __post_init__(self) -> None:
        if not 0.0 <= self.p <= 1.0:
            raise ValueError(f"p must be in [0, 1], got {self.p}")
        if not 1 <= self.a <= self.b:
            raise ValueError(f"need 1 <= a <= b, got a={self.a} b={self.b}")


def aspect_universe(dataset: Dataset | Iterable[Sample]) -> tuple[AspectLabel, ...]:
    """All distinct aspects, in first-appearance order.

    A tuple rather than a set: the candidate draw indexes into it, and set
    iteration order would vary with the interpreter's hash seed.
    """
    seen: dict[AspectLabel, None] = {}
    for s in dataset:
        for a in s.aspects:
            seen.setdefault(a, None)
    return tuple(seen)


def candidate_aspects(
    universe: Sequence[AspectLabel], sample: Sample, n: int, rng: random.Random
) -> list[AspectLabel]:
    pool = [u for u in universe if u not in sample.aspects]
    if len(pool) < n:
        raise InsufficientCandidates(f"need {n} candidates, only {len(pool)} available")
    return rng.sample(pool, n)


@dataclass
class InjectionReport:
    modified: list[int] = field(default_factory=list)
    selected: list[int] = field(default_factory=list)
    added_counts: list[int] = field(default_factory=list)
    judge_calls: int = 0
    failed_samples: int = 0

    def to_dict(self) -> dict:
        return {
            "selected": len(self.selected),
            "modified": len(self.modified),
            "added_unknown_aspects": sum(self.added_counts),
            "judge_calls": self.judge_calls,
            "failed_samples": self.failed_samples,
        }


def inject_unknowns(dataset: Dataset, config: InjectionConfig, gateway: Gateway) -> tuple[Dataset, InjectionReport]:
    """Returns the augmented dataset and a report of what changed.

    The keep/modify draws come from their own stream, so the set of selected
    indices depends only on the seed and the sample position.
    """
    universe = aspect_universe(dataset)
    decide = random.Random(derive_seed(config.seed, "decide"))
    pick = random.Random(derive_seed(config.seed, "pick"))

    plans: list[tuple[int, list[AspectLabel]]] = []
    for i, s in enumerate(dataset.samples):
        r = decide.random()
        if r > config.p:
            continue
        n = pick.randint(config.a, config.b)
        plans.append((i, candidate_aspects(universe, s, n, pick)))

    requests = [judge_request(dataset[i].text, c) for i, cands in plans for c in cands]
    verdicts = gateway.complete_many(requests)

    report = InjectionReport(selected=[i for i, _ in plans], judge_calls=len(requests))
    out = list(dataset.samples)
    pos = 0
    for i, cands in plans:
        got = verdicts[pos : pos + len(cands)]
        pos += len(cands)
        try:
            approved = [c for c, v in zip(cands, got) if _approved(v)]
        except GatewayError as exc:
            logger.warning("sample %d left unmodified: %s", i, exc)
            report.failed_samples += 1
            continue
        if not approved:
            continue
        aspects = dict(out[i].aspects)
        aspects.update((c, Polarity.UNKNOWN) for c in approved)
        out[i] = out[i].with_aspects(aspects)
        report.modified.append(i)
        report.added_counts.append(len(approved))
    return dataset.replace_samples(out), report


def _approved(verdict: str | GatewayError) -> bool:
    if isinstance(verdict, GatewayError):
        raise verdict
    return parse_verdict(verdict)
