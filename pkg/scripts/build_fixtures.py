"""Regenerate every file under ``fixtures/``.

Texts come from a small seeded template grammar; cassettes are recorded by
running the real pipeline code against scripted responders, so replaying
them later needs no network. Run from the repository root:

    python3 scripts/build_fixtures.py
"""

from __future__ import annotations

import csv
import json
import random
import shutil
import sys
from pathlib import Path
from xml.sax.saxutils import escape

from absa_forge.cli import RunConfig, compose_mix
from absa_forge.core import Dataset, Polarity, Sample, write_jsonl
from absa_forge.evaluation import EvalConfig, build_eval_prompt
from absa_forge.gateway import Cassette, Gateway, ScriptedTransport, translation_request
from absa_forge.reasoning.chains import chain_from_completion, reasoning_request, refine_request
from absa_forge.testing import always, by_tag, judge_by_mention, unique_upscale, upscale_exemplars
from absa_forge.upscale import UpscaleConfig, upscale

ROOT = Path(__file__).resolve().parent.parent / "fixtures"
COMPOSE_SEED = 7
UPSCALE_SEED = 11

DOMAINS = {
    "restaurant": ["food", "service", "pasta", "dessert", "waiter", "ambience", "price", "wine list", "music", "terrace"],
    "laptop": ["battery life", "screen", "keyboard", "speakers", "trackpad", "fan noise", "customer support", "weight", "webcam", "charger"],
    "hotel": ["room", "breakfast", "staff", "pool", "location", "wifi", "bathroom", "check-in", "bed", "view"],
}

CLAUSES = {
    "positive": ["the {a} was excellent", "I really loved the {a}", "the {a} exceeded my expectations", "the {a} is superb"],
    "negative": ["the {a} was a real letdown", "the {a} was awful", "I hated the {a}", "the {a} is frankly poor"],
    "neutral": ["the {a} was as described", "the {a} is fairly standard", "we only used the {a} once", "the {a} was what it was"],
    "mixed": ["the {a} started great but went downhill", "the {a} has good and bad sides", "the {a} was lovely yet overpriced"],
}
OPENERS = ["", "Honestly, ", "Overall, ", "To be fair, ", "After two weeks, ", "On our last visit, "]


def _sentence(rng: random.Random, pairs: dict[str, str]) -> str:
    # Aspects labeled unknown are, by definition, not mentioned.
    clauses = [rng.choice(CLAUSES[p]).format(a=a) for a, p in pairs.items() if p != "unknown"]
    if not clauses:
        clauses = [rng.choice(["nothing stood out", "it was a short stay", "there is little to report"])]
    body = clauses[0] if len(clauses) == 1 else ", ".join(clauses[:-1]) + " and " + clauses[-1]
    s = rng.choice(OPENERS) + body + "."
    return s[0].upper() + s[1:]


def make_samples(n: int, seed: int, source: str, *, pols=("positive", "negative", "neutral", "mixed"), overall=False, used=None) -> list[Sample]:
    rng = random.Random(seed)
    used = used if used is not None else set()
    out = []
    while len(out) < n:
        domain = rng.choice(sorted(DOMAINS))
        k = rng.randint(1, 3)
        names = rng.sample(DOMAINS[domain], k)
        pairs = {a: rng.choice(pols) for a in names}
        text = _sentence(rng, pairs)
        if text.casefold() in used:
            continue
        used.add(text.casefold())
        ov = rng.choice(["positive", "negative", "neutral", "mixed"]) if overall else None
        out.append(Sample(text, pairs, ov, "en", source))
    return out


def _write_csv(path: Path, samples: list[Sample]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["text", "aspects", "overall"])
        for s in samples:
            w.writerow([s.text, "; ".join(f"{a.name}:{p.value}" for a, p in s.aspects.items()), s.overall or ""])


def _write_xml(path: Path, samples: list[Sample]) -> None:
    lines = ['<?xml version="1.0" encoding="UTF-8"?>', "<sentences>"]
    for i, s in enumerate(samples):
        lines.append(f'  <sentence id="{i}">')
        lines.append(f"    <text>{escape(s.text)}</text>")
        lines.append("    <aspectTerms>")
        for a, p in s.aspects.items():
            pol = "conflict" if p is Polarity.MIXED else p.value
            lines.append(f'      <aspectTerm term="{escape(a.name)}" polarity="{pol}"/>')
        lines.append("    </aspectTerms>")
        lines.append("  </sentence>")
    lines.append("</sentences>")
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def _recording_gateway(path: Path, respond) -> Gateway:
    if path.exists():
        path.unlink()
    return Gateway(Cassette(mode="record", path=path), ScriptedTransport(respond), concurrency=1)


# -- compose ------------------------------------------------------------------


def build_compose() -> None:
    d = ROOT / "compose"
    d.mkdir(parents=True, exist_ok=True)
    used: set[str] = set()
    jsonl = make_samples(15, 101, "public-reviews", overall=True, used=used)
    pairs = make_samples(15, 102, "public-pairs", overall=True, used=used)
    mams = make_samples(10, 103, "mams-like", pols=("positive", "negative", "neutral"), used=used)
    # Two texts annotated by two sources with a disagreement: the merge must turn it into mixed.
    a = jsonl[0]
    first = next(iter(a.aspects))
    flipped = Polarity.NEGATIVE if a.aspects[first] is not Polarity.NEGATIVE else Polarity.POSITIVE
    pairs[0] = Sample(a.text, {first.name: flipped}, a.overall, "en", "public-pairs")
    pairs[1] = Sample(jsonl[1].text.upper(), dict(jsonl[1].aspects), None, "en", "public-pairs")
    synth = make_samples(10, 104, "synthetic:upsd", pols=("positive", "negative", "neutral", "mixed", "unknown"), used=used)
    evals = make_samples(6, 105, "eval", pols=("positive", "negative", "neutral"), used=used)
    # Leaks: one public and one synthetic text also sit in the eval split.
    evals += [Sample(jsonl[5].text, dict(jsonl[5].aspects), None, "en", "eval"),
              Sample("  " + synth[3].text.lower() + " ", dict(synth[3].aspects), None, "en", "eval")]
    semeval = make_samples(12, 106, "semeval14", pols=("positive", "negative", "neutral"), used=used)

    write_jsonl(d / "public_reviews.jsonl", [Sample(s.text, s.aspects, s.overall, s.language, "raw") for s in jsonl])
    _write_csv(d / "public_pairs.csv", pairs)
    _write_xml(d / "public_mams.xml", mams)
    write_jsonl(d / "synth.jsonl", synth)
    write_jsonl(d / "eval.jsonl", evals)
    _write_xml(d / "semeval_train.xml", semeval)

    config = {
        "seed": COMPOSE_SEED,
        "output_dir": "out",
        "gateway": {"cassette": "cassette.json", "mode": "replay"},
        "compose": {
            "public": [
                {"id": "public-reviews", "path": "public_reviews.jsonl", "format": "jsonl-canonical"},
                {"id": "public-pairs", "path": "public_pairs.csv", "format": "csv-pairs",
                 "field_map": {"text": "text", "aspects": "aspects", "overall": "overall"}},
                {"id": "mams-like", "path": "public_mams.xml", "format": "semeval-xml-like",
                 "polarity_map": {"conflict": "mixed"}, "exclude_from_encoder_train": True},
            ],
            "synth": ["synth.jsonl"],
            "eval": ["eval.jsonl"],
            "upscale_source": {"id": "semeval14", "path": "semeval_train.xml", "format": "semeval-xml-like",
                               "polarity_map": {"conflict": "mixed"}},
        },
        "inject": {"p": 0.25, "a": 2, "b": 4},
        "upscale": {"batch_size": 10, "temperature": 0.3, "top_p": 0.95, "max_passes": 50},
    }
    (d / "config.yaml").write_text("# Bundled fixture run for compose-mix.\n" + _yaml(config), encoding="utf-8")

    cfg = RunConfig.load(d / "config.yaml")
    respond = by_tag({"judge": judge_by_mention, "upscale": unique_upscale})
    # Record both the default injection share and the p=0 variant used by the tests.
    gw = _recording_gateway(d / "cassette.json", respond)
    compose_mix(cfg, gw, COMPOSE_SEED)
    compose_mix(cfg, gw, COMPOSE_SEED, p=0.0)
    gw.save()


def _yaml(obj) -> str:
    import yaml

    return yaml.safe_dump(obj, sort_keys=False, allow_unicode=True)


# -- upscale ------------------------------------------------------------------


def build_upscale() -> None:
    d = ROOT / "upscale"
    d.mkdir(parents=True, exist_ok=True)
    train = make_samples(25, 201, "semeval14", pols=("positive", "negative", "neutral"))
    write_jsonl(d / "train.jsonl", train)
    ds = Dataset(tuple(train))
    cfg = UpscaleConfig(batch_size=10, seed=UPSCALE_SEED)

    gw = _recording_gateway(d / "cassette_unique.json", unique_upscale)
    upscale(ds, cfg, gw)
    gw.save()

    stale = json.dumps({"text": "The food was fine.", "aspects": {"food": "neutral"}})
    gw = _recording_gateway(d / "cassette_degenerate.json", always(stale))
    try:
        upscale(ds, cfg, gw)
    except Exception as exc:  # MaxPassesExceeded is the point of this cassette
        print(f"degenerate cassette: {type(exc).__name__}")
    gw.save()

    def echo_some(request):
        # Copy an exemplar verbatim for about half the requests.
        if int(request.fingerprint[0], 16) < 8:
            ex = upscale_exemplars(request)[0]
            return json.dumps(ex)
        return unique_upscale(request)

    gw = _recording_gateway(d / "cassette_echo.json", echo_some)
    upscale(ds, cfg, gw)
    gw.save()


# -- reasoning ----------------------------------------------------------------


STAR = [
    ("correct", Sample("The battery lasts all day but the screen scratches easily.",
                       {"battery": "positive", "screen": "negative"})),
    ("refinable", Sample("Great coffee, although the croissant was stale and the barista was okay.",
                         {"coffee": "positive", "croissant": "negative", "barista": "neutral"})),
    ("unrefinable", Sample("The plot twists kept me guessing, yet the ending felt rushed.",
                           {"plot": "positive", "ending": "negative"})),
    ("refusal", Sample("The room was spotless, though the shower pressure came and went.",
                       {"room": "positive", "shower": "mixed"})),
]


def _answer(reasoning: str, aspects: dict) -> str:
    return json.dumps({"reasoning": reasoning, "aspects": aspects})


def build_star() -> None:
    d = ROOT / "star"
    d.mkdir(parents=True, exist_ok=True)
    write_jsonl(d / "samples.jsonl", [Sample(s.text, s.aspects, None, "en", f"star:{k}") for k, s in STAR])
    cas = Cassette(mode="replay")
    first = {
        "correct": _answer("Lasting all day is praise for the battery; scratching easily is a complaint about the screen.",
                           {"battery": "positive", "screen": "negative"}),
        "refinable": "Here is my analysis:\n```json\n" + _answer(
            "Coffee is called great. The croissant is stale. The barista is described as okay, which I read as praise.",
            {"coffee": "positive", "croissant": "negative", "barista": "positive"}) + "\n```",
        "unrefinable": _answer("The plot gets praise, and a rushed ending still sounds exciting.",
                               {"plot": "positive", "ending": "positive"}),
        "refusal": _answer("The room is spotless and the shower is fine.", {"room": "positive", "shower": "positive"}),
    }
    second = {
        "refinable": _answer("Coffee is called great, so positive. A stale croissant is a complaint, so negative. "
                             "Okay expresses no real opinion, so the barista is neutral.",
                             {"coffee": "positive", "croissant": "negative", "barista": "neutral"}),
        "unrefinable": _answer("The plot is praised. The ending is still exciting, so positive.",
                               {"plot": "positive", "ending": "positive"}),
        "refusal": "I'm sorry, but I can't help with revising this analysis.",
    }
    for key, sample in STAR:
        req = reasoning_request(sample)
        cas.add(req, first[key])
        if key in second:
            chain, _ = chain_from_completion(sample, first[key])
            cas.add(refine_request(sample, chain), second[key])
    cas.save(d / "cassette.json")


# -- evaluation ---------------------------------------------------------------

EVAL_WRONG_FIRST = {7, 17, 27, 37, 47}
EVAL_UNPARSEABLE = 13
EVAL_BAD_LABEL = 29
EVAL_FENCED = 41


def build_eval() -> None:
    """50 samples with (i % 3) + 1 aspects each and a known error pattern.

    Samples 7, 17, 27, 37, 47 get their first aspect wrong, sample 13 gets a
    reply without JSON, sample 29 gets an invalid label on its last aspect
    and sample 41 gets a correct answer wrapped in a fence and prose.
    """
    d = ROOT / "eval"
    d.mkdir(parents=True, exist_ok=True)
    rng = random.Random(301)
    pols = ["positive", "negative", "neutral", "mixed", "unknown"]
    gold = []
    names = DOMAINS["laptop"]
    for i in range(50):
        k = i % 3 + 1
        aspects = {names[(i + j) % len(names)]: pols[(i + 2 * j) % 5] for j in range(k)}
        text = f"Review {i}: " + _sentence(rng, aspects)
        gold.append(Sample(text, aspects, None, "en", "eval-fixture"))
    write_jsonl(d / "gold.jsonl", gold)

    cas = Cassette(mode="replay")
    cfg = EvalConfig()
    for i, s in enumerate(gold):
        pred = {a.name: p.value for a, p in s.aspects.items()}
        if i in EVAL_WRONG_FIRST:
            a0 = next(iter(pred))
            pred[a0] = "positive" if pred[a0] != "positive" else "negative"
        if i == EVAL_BAD_LABEL:
            pred[list(pred)[-1]] = "great"
        raw = json.dumps(pred)
        if i == EVAL_UNPARSEABLE:
            raw = "I could not determine the sentiments for this text."
        if i == EVAL_FENCED:
            raw = f"Sure! Here is the answer:\n```json\n{raw}\n```\nLet me know if you need more."
        cas.add(build_eval_prompt(s, cfg), raw)
    cas.save(d / "cassette.json")


# -- translation --------------------------------------------------------------

FRENCH = [
    ("The battery lasts all day but the screen is dim.", {"battery": "positive", "screen": "negative"},
     "La batterie tient toute la journée mais l'écran est terne.", {"battery": "batterie", "screen": "écran"}),
    ("The waiter was friendly.", {"waiter": "positive"},
     "Le serveur était aimable.", {"waiter": "serveur"}),
    ("The room was as described.", {"room": "neutral"},
     "La chambre était conforme à la description.", {"room": "chambre"}),
]


def build_translate() -> None:
    d = ROOT / "translate"
    d.mkdir(parents=True, exist_ok=True)
    en = [Sample(t, a, None, "en", "translate-fixture") for t, a, _, _ in FRENCH]
    write_jsonl(d / "en.jsonl", en)
    cas = Cassette(mode="replay")
    for text, _, fr, names in FRENCH:
        cas.add(translation_request(text, "fr", "en"), fr)
        for src, dst in names.items():
            cas.add(translation_request(src, "fr", "en"), dst)
    cas.save(d / "cassette_fr.json")


STATS = [
    {"text": "The pasta was great and the service was slow.", "aspects": {"pasta": "positive", "service": "negative"}},
    {"text": "Service was fine.", "aspects": {"service": "neutral"}},
    {"text": "The pasta was good but cold.", "aspects": {"pasta": "mixed"}},
    {"text": "Lovely place.", "aspects": {"parking": "unknown", "ambience": "positive"}, "overall": "positive"},
    {"text": "Nothing to add.", "aspects": {}, "overall": "neutral"},
    {"text": "The Pasta was bland, the wine decent.", "aspects": {"Pasta": "negative", "wine": "positive"}},
]


def build_stats() -> None:
    d = ROOT / "stats"
    d.mkdir(parents=True, exist_ok=True)
    with open(d / "small.jsonl", "w", encoding="utf-8") as fh:
        for row in STATS:
            fh.write(json.dumps({"overall": None, "language": "en", "source": "stats-fixture", **row}) + "\n")


def main() -> int:
    if "--clean" in sys.argv and ROOT.exists():
        shutil.rmtree(ROOT)
    build_stats()
    build_compose()
    build_upscale()
    build_star()
    build_eval()
    build_translate()
    print(f"fixtures written to {ROOT}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
