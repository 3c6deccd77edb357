"""Shared test helpers (imported by test modules, not a pytest plugin)."""

from __future__ import annotations

import random
from pathlib import Path

from absa_forge.core import Sample
from absa_forge.gateway import Cassette, FailingTransport, Gateway

FIXTURES = Path(__file__).resolve().parent.parent / "fixtures"

ASPECTS = [f"aspect {i}" for i in range(60)]
POLS = ["positive", "negative", "neutral", "mixed"]


def replay_gateway(cassette: Path | Cassette | dict, **kw) -> Gateway:
    """Replay-only gateway whose transport fails loudly if it is ever contacted."""
    if isinstance(cassette, Path):
        cassette = Cassette.load(cassette)
    elif isinstance(cassette, dict):
        cassette = Cassette(cassette)
    return Gateway(cassette, FailingTransport(), **kw)


def synthetic_samples(n: int, seed: int = 0, max_aspects: int = 3) -> list[Sample]:
    """Distinct texts with 1..max_aspects labels drawn from a 60-aspect pool."""
    rng = random.Random(seed)
    out = []
    for i in range(n):
        names = rng.sample(ASPECTS, rng.randint(1, max_aspects))
        text = f"sample {i}: " + ", ".join(names)
        out.append(Sample(text, {a: rng.choice(POLS) for a in names}, source="synthetic-fixture"))
    return out


def record_then_replay(run, responder):
    """Run ``run(gateway)`` against a scripted model, then again from the recording.

    Returns ``(recorded_result, replayed_result, cassette)``; the replay pass
    uses a transport that fails on contact.
    """
    from absa_forge.gateway import ScriptedTransport

    cassette = Cassette(mode="record")
    recorded = run(Gateway(cassette, ScriptedTransport(responder)))
    replayed = run(replay_gateway(dict(cassette.entries)))
    return recorded, replayed, cassette
