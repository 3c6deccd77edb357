"""Zero-shot LLM evaluation: prompt, query, parse leniently, score accuracy."""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

from .core import (
    FIVE_CLASSES,
    THREE_CLASSES,
    AbsaForgeError,
    AspectLabel,
    Dataset,
    Polarity,
    Sample,
    UnknownPolarity,
    normalize_text,
    polarity_parse,
)
from .gateway import SUPPORTED_LANGUAGES, ChatRequest, Gateway, GatewayError, GenParams
from .jsonextract import NoJsonFound, extract_json_object

logger = logging.getLogger(__name__)

OVERALL_ASPECT = "overall sentiment"
OVERALL_KEYS = frozenset({normalize_text(OVERALL_ASPECT), normalize_text("<overall sentiment>")})
THOUGHTS_KEY = "<thoughts>"
MISSING = "none"
CLASS_MODES = {"three": THREE_CLASSES, "five": FIVE_CLASSES}


class EvalConfigError(AbsaForgeError, ValueError):
    pass


class LengthMismatch(AbsaForgeError, ValueError):
    pass


class DomainError(AbsaForgeError, ValueError):
    pass


@dataclass(frozen=True)
class EvalConfig:
    class_mode: str = "five"
    include_overall: bool = False
    gen_params: GenParams = field(default_factory=lambda: GenParams(temperature=0.0, top_p=1.0))
    prompt_template: str = "default"
    strict_json: bool = False

    def __post_init__(self) -> None:
        if self.class_mode not in CLASS_MODES:
            raise EvalConfigError(f"class_mode must be 'three' or 'five', got {self.class_mode!r}")
        if self.prompt_template not in PROMPT_TEMPLATES:
            raise EvalConfigError(f"unknown prompt template {self.prompt_template!r}")

    @property
    def classes(self) -> tuple[Polarity, ...]:
        return CLASS_MODES[self.class_mode]

    def to_dict(self) -> dict:
        return {
            "class_mode": self.class_mode,
            "include_overall": self.include_overall,
            "temperature": self.gen_params.temperature,
            "top_p": self.gen_params.top_p,
            "prompt_template": self.prompt_template,
            "strict_json": self.strict_json,
        }


# -- prompt -------------------------------------------------------------------

_DESCRIPTIONS = {
    Polarity.POSITIVE: "the text expresses a favourable opinion about the aspect",
    Polarity.NEGATIVE: "the text expresses an unfavourable opinion about the aspect",
    Polarity.NEUTRAL: "the aspect is mentioned without a clear opinion",
    Polarity.MIXED: "the text is both favourable and unfavourable about the aspect",
    Polarity.UNKNOWN: "the text does not address the aspect",
}

_SYSTEM = "You are a precise sentiment analysis assistant that answers only in JSON."


def _json_instruction(classes: Sequence[Polarity]) -> str:
    options = " | ".join(f'"{p.value}"' for p in classes)
    return (
        "Return a single JSON object that maps every aspect, spelled exactly as given, "
        f"to one sentiment: {{\"<aspect>\": {options}}}. Output nothing except the JSON object."
    )


def _default_template(text: str, aspects: list[str], classes: Sequence[Polarity], overall: bool) -> str:
    lines = ["Classify the sentiment the text expresses towards each of the listed aspects.", ""]
    lines.append("Possible sentiments:")
    lines.extend(f"- {p.value}: {_DESCRIPTIONS[p]}" for p in classes)
    if overall:
        lines += ["", f'The aspect "{OVERALL_ASPECT}" stands for the overall sentiment of the whole text.']
    lines += ["", _json_instruction(classes), "", f"Text: {text}", f"Aspects: {json.dumps(aspects, ensure_ascii=False)}"]
    lines += ["", _json_instruction(classes)]
    return "\n".join(lines)


PROMPT_TEMPLATES = {"default": _default_template}


def build_eval_prompt(sample: Sample, config: EvalConfig) -> ChatRequest:
    aspects = [a.name for a in sample.aspects]
    if not aspects and not config.include_overall:
        raise ValueError("sample has no aspects and overall sentiment is not requested")
    if config.include_overall:
        aspects.append(OVERALL_ASPECT)
    user = PROMPT_TEMPLATES[config.prompt_template](sample.text, aspects, config.classes, config.include_overall)
    return ChatRequest.chat(_SYSTEM, user, config.gen_params, tag="eval")


# -- parsing ------------------------------------------------------------------


@dataclass(frozen=True)
class PredictionSet:
    """What a model said about one sample.

    ``failed`` names aspects whose value could not be read; they score as
    wrong. ``overall_failed`` does the same for the overall slot.
    """

    aspects: dict[AspectLabel, Polarity] = field(default_factory=dict)
    overall: Polarity | None = None
    failed: frozenset[AspectLabel] = frozenset()
    overall_failed: bool = False

    @classmethod
    def from_sample(cls, sample: Sample) -> PredictionSet:
        return cls(dict(sample.aspects), sample.overall)

    def to_json(self) -> str:
        obj = {a.name: p.value for a, p in self.aspects.items()}
        if self.overall is not None:
            obj[OVERALL_ASPECT] = self.overall.value
        return json.dumps(obj, ensure_ascii=False)


def parse_response(raw: str, strict: bool = False) -> PredictionSet:
    """Read aspect predictions from a completion; raises ``NoJsonFound``.

    Values that are not a polarity mark only their own aspect as failed.
    Keys that collide under aspect equality with different values are failed
    too, since there is no principled way to pick one.
    """
    pairs = extract_json_object(raw, strict=strict, object_pairs_hook=list)
    aspects: dict[AspectLabel, Polarity] = {}
    failed: set[AspectLabel] = set()
    overall: Polarity | None = None
    overall_failed = False
    overall_seen = False
    for key, value in pairs:
        if not isinstance(key, str) or not key.strip() or key.strip() == THOUGHTS_KEY:
            continue
        try:
            pol = polarity_parse(value)
        except UnknownPolarity:
            pol = None
        if normalize_text(key) in OVERALL_KEYS:
            if pol is None or (overall_seen and pol is not overall):
                overall_failed = True
            elif not overall_failed:
                overall = pol
            overall_seen = True
            continue
        label = AspectLabel(key)
        if pol is None or (label in aspects and aspects[label] is not pol):
            failed.add(label)
            aspects.pop(label, None)
        elif label not in failed:
            aspects[label] = pol
    return PredictionSet(aspects, None if overall_failed else overall, frozenset(failed), overall_failed)


# -- scoring ------------------------------------------------------------------


@dataclass(frozen=True)
class Metrics:
    accuracy: float
    n_aspects: int
    n_correct: int
    n_parse_failures: int = 0
    n_invalid_labels: int = 0
    confusion: Mapping[str, Mapping[str, int]] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "n_aspects": self.n_aspects,
            "n_correct": self.n_correct,
            "n_parse_failures": self.n_parse_failures,
            "n_invalid_labels": self.n_invalid_labels,
            "confusion": {g: dict(row) for g, row in self.confusion.items()},
        }


def _check_gold(sample: Sample, config: EvalConfig) -> None:
    allowed = set(config.classes)
    labels = list(sample.aspects.values())
    if config.include_overall and sample.overall is not None:
        labels.append(sample.overall)
    bad = sorted({p.value for p in labels if p not in allowed})
    if bad:
        raise EvalConfigError(f"gold labels {bad} are not allowed in {config.class_mode}-class mode")


def score(gold: Dataset | Sequence[Sample], predictions: Sequence[PredictionSet | None], config: EvalConfig) -> Metrics:
    """Accuracy over gold annotations; ``None`` predictions are parse failures."""
    samples = list(gold)
    if len(samples) != len(predictions):
        raise LengthMismatch(f"{len(samples)} gold samples but {len(predictions)} predictions")
    for s in samples:
        _check_gold(s, config)

    confusion: dict[str, dict[str, int]] = {}
    total = correct = parse_failures = invalid = 0

    def tally(g: Polarity, p: Polarity | None) -> None:
        nonlocal total, correct
        row = confusion.setdefault(g.value, {})
        key = p.value if p is not None else MISSING
        row[key] = row.get(key, 0) + 1
        total += 1
        correct += p is g

    for sample, pred in zip(samples, predictions):
        if pred is None:
            parse_failures += 1
            pred = PredictionSet()
        invalid += len(pred.failed) + pred.overall_failed
        for aspect, g in sample.aspects.items():
            tally(g, None if aspect in pred.failed else pred.aspects.get(aspect))
        if config.include_overall and sample.overall is not None:
            tally(sample.overall, pred.overall)

    accuracy = correct / total if total else 0.0
    return Metrics(accuracy, total, correct, parse_failures, invalid, confusion)


def cross_entropy(probabilities: Sequence[float], gold_class: int, n_classes: int | None = None) -> float:
    """Negative log-likelihood of the gold class under ``probabilities``."""
    probs = [float(p) for p in probabilities]
    c = len(probs)
    if c not in (3, 5) or (n_classes is not None and c != n_classes):
        raise DomainError(f"expected 3 or 5 class probabilities, got {c}")
    if any(not math.isfinite(p) or p < 0 for p in probs):
        raise DomainError("probabilities must be finite and non-negative")
    if abs(math.fsum(probs) - 1.0) > 1e-9:
        raise DomainError(f"probabilities sum to {math.fsum(probs)}, not 1")
    if not 0 <= gold_class < c:
        raise DomainError(f"gold class {gold_class} out of range for {c} classes")
    p = probs[gold_class]
    return math.inf if p == 0.0 else -math.log(p)


# -- benchmark runs -----------------------------------------------------------


def predict(dataset: Dataset | Sequence[Sample], config: EvalConfig, gateway: Gateway) -> tuple[list[PredictionSet | None], int]:
    """Query the model for every sample; returns predictions and the gateway error count."""
    samples = list(dataset)
    results = gateway.complete_many([build_eval_prompt(s, config) for s in samples])
    preds: list[PredictionSet | None] = []
    errors = 0
    for raw in results:
        if isinstance(raw, GatewayError):
            logger.warning("eval request failed: %s", raw)
            errors += 1
            preds.append(None)
            continue
        try:
            preds.append(parse_response(raw, strict=config.strict_json))
        except NoJsonFound:
            preds.append(None)
    return preds, errors


@dataclass(frozen=True)
class ReportRow:
    name: str
    n_samples: int
    metrics: Metrics
    gateway_errors: int = 0

    def to_dict(self) -> dict:
        return {"dataset": self.name, "n_samples": self.n_samples, "gateway_errors": self.gateway_errors, **self.metrics.to_dict()}


def _table(header: Sequence[str], rows: Iterable[Sequence[str]]) -> str:
    rows = [list(header)] + [list(r) for r in rows]
    widths = [max(len(r[i]) for r in rows) for i in range(len(header))]
    fmt = lambda r: "  ".join(c.ljust(w) if i == 0 else c.rjust(w) for i, (c, w) in enumerate(zip(r, widths)))
    return "\n".join([fmt(rows[0]), "  ".join("-" * w for w in widths), *map(fmt, rows[1:])])


@dataclass(frozen=True)
class Report:
    rows: tuple[ReportRow, ...]
    config: EvalConfig

    def row(self, name: str) -> ReportRow:
        for r in self.rows:
            if r.name == name:
                return r
        raise KeyError(name)

    def to_dict(self) -> dict:
        return {"config": self.config.to_dict(), "datasets": [r.to_dict() for r in self.rows]}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def format(self) -> str:
        header = ["Dataset", "Accuracy", "#Aspects", "#Parse failures", "#Invalid labels"]
        return _table(
            header,
            (
                [r.name, f"{100 * r.metrics.accuracy:.2f}", str(r.metrics.n_aspects),
                 str(r.metrics.n_parse_failures), str(r.metrics.n_invalid_labels)]
                for r in self.rows
            ),
        )


def _named(datasets: Mapping[str, Dataset] | Sequence[tuple[str, Dataset]]) -> list[tuple[str, Dataset]]:
    return list(datasets.items()) if isinstance(datasets, Mapping) else list(datasets)


def run_benchmark(datasets: Mapping[str, Dataset] | Sequence[tuple[str, Dataset]], config: EvalConfig, gateway: Gateway) -> Report:
    rows = []
    for name, ds in _named(datasets):
        preds, errors = predict(ds, config, gateway)
        rows.append(ReportRow(name, len(ds), score(ds, preds, config), errors))
    return Report(tuple(rows), config)


@dataclass(frozen=True)
class MatrixReport:
    models: tuple[str, ...]
    languages: tuple[str, ...]
    cells: Mapping[tuple[str, str], Metrics]

    def accuracy(self, model: str, language: str) -> float:
        return self.cells[(model, language)].accuracy

    @property
    def shape(self) -> tuple[int, int]:
        return len(self.models), len(self.languages)

    def to_dict(self) -> dict:
        return {
            "languages": list(self.languages),
            "rows": [
                {"model": m, "accuracy": {lang: self.accuracy(m, lang) for lang in self.languages}}
                for m in self.models
            ],
        }

    def format(self) -> str:
        header = ["Model", *(lang.upper() for lang in self.languages)]
        return _table(
            header,
            ([m, *(f"{100 * self.accuracy(m, lang):.1f}" for lang in self.languages)] for m in self.models),
        )


def _language_order(langs: Iterable[str]) -> tuple[str, ...]:
    rank = {lang: i for i, lang in enumerate(SUPPORTED_LANGUAGES)}
    return tuple(sorted(langs, key=lambda x: (rank.get(x, len(rank)), x)))


def multilingual_matrix(
    models: Mapping[str, Gateway],
    datasets_by_language: Mapping[str, Dataset],
    config: EvalConfig,
) -> MatrixReport:
    """Accuracy grid: one row per model, one column per language.

    Each model brings its own gateway because request fingerprints do not
    include the model identity.
    """
    if not datasets_by_language:
        raise ValueError("at least one language is required")
    if not models:
        raise ValueError("at least one model is required")
    languages = _language_order(datasets_by_language)
    cells: dict[tuple[str, str], Metrics] = {}
    for model, gateway in models.items():
        for lang in languages:
            ds = datasets_by_language[lang]
            preds, _ = predict(ds, config, gateway)
            cells[(model, lang)] = score(ds, preds, config)
    return MatrixReport(tuple(models), languages, cells)
