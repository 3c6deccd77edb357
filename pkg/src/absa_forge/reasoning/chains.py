"""Two-phase reasoning chains: generate with few-shot CoT, refine the wrong ones."""

from __future__ import annotations

import json
import logging
import re
from dataclasses import replace
from typing import Iterable, Sequence

from ..core import AspectLabel, ChainStatus, GenerationUnparseable, Polarity, ReasoningChain, Sample, aspect_map
from ..gateway import ChatRequest, Gateway, GatewayError, GenParams
from ..jsonextract import NoJsonFound, extract_json_object

logger = logging.getLogger(__name__)

_REFUSAL = re.compile(r"\b(i can ?not|i can't|i'm sorry|i am sorry|i'm unable|i am unable|i won't|as an ai)\b", re.I)

REASONING_SYSTEM = (
    "You are an expert in aspect-based sentiment analysis. You reason step by "
    "step about how a text expresses sentiment towards each given aspect."
)

LABELS = (
    "Use exactly one of these sentiments per aspect: positive, negative, neutral, "
    "mixed (both positive and negative towards the same aspect), unknown (the aspect "
    "is not addressed in the text)."
)

FEW_SHOT = """Example
Text: The pasta was cold but the waiter apologised and replaced it quickly.
Aspects: ["pasta", "waiter", "parking"]
Answer: {"reasoning": "The pasta is described as cold, a clear complaint, so it is negative. The waiter apologised and fixed the problem quickly, which is praise, so positive. Parking is never mentioned, so unknown.", "aspects": {"pasta": "negative", "waiter": "positive", "parking": "unknown"}}

Example
Text: The screen is gorgeous indoors, although it is almost unreadable in sunlight.
Aspects: ["screen"]
Answer: {"reasoning": "The screen gets praise (gorgeous indoors) and criticism (unreadable in sunlight) at the same time, so its sentiment is mixed.", "aspects": {"screen": "mixed"}}"""

ANSWER = 'Answer with one JSON object: {"reasoning": "<step-by-step reasoning>", "aspects": {"<aspect>": "<sentiment>"}}'


def _aspects_json(sample: Sample) -> str:
    return json.dumps([a.name for a in sample.aspects], ensure_ascii=False)


def _gold_json(sample: Sample) -> str:
    return json.dumps({a.name: p.value for a, p in sample.aspects.items()}, ensure_ascii=False)


def reasoning_request(sample: Sample) -> ChatRequest:
    user = "\n\n".join(
        [LABELS, FEW_SHOT, f"Text: {sample.text}\nAspects: {_aspects_json(sample)}", ANSWER]
    )
    return ChatRequest.chat(REASONING_SYSTEM, user, GenParams(temperature=0.0, json_mode=True), tag="reason")


def refine_request(sample: Sample, chain: ReasoningChain) -> ChatRequest:
    user = "\n\n".join(
        [
            LABELS,
            f"Text: {sample.text}\nAspects: {_aspects_json(sample)}",
            f"A previous analysis reasoned as follows:\n{chain.text}",
            f"That analysis reached a wrong conclusion. The correct answer is:\n{_gold_json(sample)}",
            "Revise the reasoning so that it follows from the text and arrives at the correct "
            "answer. Do not mention that you were given the answer.",
            ANSWER,
        ]
    )
    return ChatRequest.chat(REASONING_SYSTEM, user, GenParams(temperature=0.0, json_mode=True), tag="refine")


def parse_reasoning(raw: str) -> tuple[str, dict[AspectLabel, Polarity]]:
    try:
        obj = extract_json_object(raw)
    except NoJsonFound as exc:
        raise GenerationUnparseable(str(exc)) from None
    text, preds = obj.get("reasoning"), obj.get("aspects")
    if not isinstance(text, str) or not text.strip():
        raise GenerationUnparseable("missing reasoning")
    if not isinstance(preds, dict):
        raise GenerationUnparseable("missing aspect predictions")
    try:
        return text.strip(), aspect_map(preds)
    except ValueError as exc:
        raise GenerationUnparseable(str(exc)) from None


def _matches(sample: Sample, preds: dict[AspectLabel, Polarity]) -> bool:
    return preds == sample.aspects


def chain_from_completion(sample: Sample, raw: str) -> tuple[ReasoningChain, dict[AspectLabel, Polarity]]:
    text, preds = parse_reasoning(raw)
    return ReasoningChain(text, ChainStatus.GENERATED, _matches(sample, preds)), preds


def generate_reasoning(sample: Sample, gateway: Gateway) -> tuple[ReasoningChain, dict[AspectLabel, Polarity]]:
    if not sample.aspects:
        raise ValueError("sample has no aspects to reason about")
    return chain_from_completion(sample, gateway.complete(reasoning_request(sample)))


def refined_from_completion(sample: Sample, chain: ReasoningChain, raw: str) -> ReasoningChain:
    if not raw or not raw.strip():
        logger.info("refinement rejected: empty completion")
        return replace(chain, status=ChainStatus.REJECTED)
    try:
        text, preds = parse_reasoning(raw)
    except GenerationUnparseable as exc:
        why = "refusal" if _REFUSAL.search(raw) else str(exc)
        logger.info("refinement rejected: %s", why)
        return replace(chain, status=ChainStatus.REJECTED)
    if not _matches(sample, preds):
        return ReasoningChain(text, ChainStatus.REJECTED, False)
    return ReasoningChain(text, ChainStatus.REFINED, False)


def refine_reasoning(sample: Sample, chain: ReasoningChain, gateway: Gateway) -> ReasoningChain:
    if chain.source_answer_correct:
        raise ValueError("only chains with a wrong answer are refined")
    try:
        raw = gateway.complete(refine_request(sample, chain))
    except GatewayError as exc:
        logger.warning("refinement call failed: %s", exc)
        return replace(chain, status=ChainStatus.REJECTED)
    return refined_from_completion(sample, chain, raw)


def is_kept(chain: ReasoningChain) -> bool:
    if chain.status is ChainStatus.REFINED:
        return True
    return chain.status is ChainStatus.GENERATED and chain.source_answer_correct


def curate(pairs: Iterable[tuple[Sample, ReasoningChain]]) -> list[tuple[Sample, ReasoningChain]]:
    return [(s, c) for s, c in pairs if is_kept(c)]


def bootstrap(samples: Sequence[Sample], gateway: Gateway) -> list[tuple[Sample, ReasoningChain]]:
    """Run both phases over ``samples``; returns every pair, rejected ones included.

    A phase-one completion that cannot be parsed yields a rejected chain.
    """
    first = gateway.complete_many([reasoning_request(s) for s in samples])
    chains: list[ReasoningChain] = []
    for s, raw in zip(samples, first):
        try:
            if isinstance(raw, GatewayError):
                raise raw
            chains.append(chain_from_completion(s, raw)[0])
        except (GatewayError, GenerationUnparseable) as exc:
            logger.info("initial reasoning failed: %s", exc)
            chains.append(ReasoningChain("", ChainStatus.REJECTED, False))

    todo = [i for i, c in enumerate(chains) if c.status is ChainStatus.GENERATED and not c.source_answer_correct]
    second = gateway.complete_many([refine_request(samples[i], chains[i]) for i in todo])
    for i, raw in zip(todo, second):
        if isinstance(raw, GatewayError):
            chains[i] = replace(chains[i], status=ChainStatus.REJECTED)
        else:
            chains[i] = refined_from_completion(samples[i], chains[i], raw)
    return list(zip(samples, chains))
