"""Command-line entry point: one subcommand per pipeline stage plus ``compose-mix``.

Every stage reads and writes canonical files, then drops a run manifest next
to its main output (``out.jsonl`` -> ``out.manifest.json``). Settings come
from an optional YAML run config; command-line flags override it.
"""

from __future__ import annotations

import argparse
import datetime as dt
import hashlib
import json
import logging
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Mapping, Sequence

import yaml

from .core import AbsaForgeError, Dataset, Sample, concat, read_jsonl, write_jsonl
from .corpus import SourceDescriptor, dedup_merge, ingest, leak_check, stats_table, translate_dataset
from .evaluation import EvalConfig, run_benchmark
from .gateway import Gateway, GatewayConfig, GenParams
from .seeding import derive_rng, derive_seed
from .unknown import InjectionConfig, inject_unknowns
from .upscale import UpscaleConfig, upscale
from .upsd import DEFAULT_CORPUS, ForgeLog, forge_dataset, load_seed_corpus

logger = logging.getLogger("absa_forge.cli")

MANIFEST_VERSION = 1
STAGES = (
    "ingest", "dedup", "leak-check", "stats", "forge", "inject-unknown", "upscale",
    "reason", "render", "mask", "pack", "eval", "translate", "compose-mix",
)


class UsageError(AbsaForgeError):
    pass


class ConfigError(AbsaForgeError, ValueError):
    pass


# -- run config ---------------------------------------------------------------


@dataclass
class RunConfig:
    doc: dict = field(default_factory=dict)
    base: Path = field(default_factory=Path.cwd)

    @classmethod
    def load(cls, path: str | Path | None) -> RunConfig:
        if path is None:
            return cls()
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"config file not found: {path}")
        try:
            doc = yaml.safe_load(path.read_text(encoding="utf-8")) or {}
        except yaml.YAMLError as exc:
            raise ConfigError(f"{path}: {exc}") from exc
        if not isinstance(doc, dict):
            raise ConfigError("run config must be a mapping")
        return cls(doc, path.resolve().parent)

    @property
    def seed(self) -> int:
        return int(self.doc.get("seed", 0))

    def section(self, name: str) -> dict:
        sec = self.doc.get(name) or {}
        if not isinstance(sec, dict):
            raise ConfigError(f"config section {name!r} must be a mapping")
        return dict(sec)

    def path(self, value: str | Path) -> Path:
        p = Path(value)
        return p if p.is_absolute() else self.base / p


def _override(section: dict, **flags: Any) -> dict:
    out = dict(section)
    out.update({k: v for k, v in flags.items() if v is not None})
    return out


def _require(paths: Sequence[Path]) -> None:
    missing = [str(p) for p in paths if not Path(p).exists()]
    if missing:
        raise ConfigError(f"input paths not found: {missing}")


# -- manifest -----------------------------------------------------------------


def file_digest(path: str | Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def config_digest(obj: Any) -> str:
    blob = json.dumps(obj, sort_keys=True, ensure_ascii=False, default=str)
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


def _timestamp(gateway: Gateway | None, wall: dt.datetime) -> str:
    """Wall-clock time only for live runs; replay and offline stages stay reproducible."""
    epoch = os.environ.get("SOURCE_DATE_EPOCH")
    if epoch is not None:
        wall = dt.datetime.fromtimestamp(int(epoch), dt.timezone.utc)
    elif gateway is None or gateway.mode == "replay":
        wall = dt.datetime.fromtimestamp(0, dt.timezone.utc)
    return wall.strftime("%Y-%m-%dT%H:%M:%SZ")


def _now() -> dt.datetime:
    return dt.datetime.now(dt.timezone.utc)


def manifest_path(out: Path) -> Path:
    return out.with_name(out.name.split(".")[0] + ".manifest.json")


@dataclass
class RunManifest:
    stage: str
    seed: int
    config_digest: str
    inputs: list[Path]
    outputs: list[Path]
    started_at: str
    finished_at: str
    gateway_calls: dict[str, int] = field(default_factory=dict)
    report: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "version": MANIFEST_VERSION,
            "stage": self.stage,
            "seed": self.seed,
            "config_digest": self.config_digest,
            "inputs": [{"name": p.name, "sha256": file_digest(p)} for p in self.inputs],
            "outputs": [{"name": p.name, "sha256": file_digest(p)} for p in self.outputs],
            "started_at": self.started_at,
            "finished_at": self.finished_at,
            "gateway_calls": dict(sorted(self.gateway_calls.items())),
            "report": self.report,
        }

    def write(self, path: Path) -> None:
        path.write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8")


@dataclass
class StageContext:
    config: RunConfig
    args: argparse.Namespace
    stage: str
    gateway: Gateway | None = None
    inputs: list[Path] = field(default_factory=list)
    outputs: list[Path] = field(default_factory=list)
    effective: dict = field(default_factory=dict)
    report: dict = field(default_factory=dict)

    @property
    def seed(self) -> int:
        return derive_seed(self.global_seed, self.stage)

    @property
    def global_seed(self) -> int:
        return self.args.seed if self.args.seed is not None else self.config.seed

    def open_gateway(self) -> Gateway:
        section = self.config.section("gateway")
        if section.get("cassette"):
            section["cassette"] = str(self.config.path(section["cassette"]))
        gcfg = GatewayConfig.from_dict(
            _override(section, cassette=self.args.cassette, mode=self.args.mode,
                      endpoint=self.args.endpoint, model=self.args.model)
        )
        if gcfg.cassette and gcfg.mode == "replay":
            _require([Path(gcfg.cassette)])
        self.gateway = Gateway.from_config(gcfg)
        return self.gateway

    def out_path(self, flag: str | None, default_name: str) -> Path:
        if flag:
            path = Path(flag)
        elif self.args.out_dir or self.config.doc.get("output_dir"):
            root = Path(self.args.out_dir) if self.args.out_dir else self.config.path(self.config.doc["output_dir"])
            path = root / default_name
        else:
            raise UsageError(f"{self.stage}: --out is required (or set output_dir)")
        path.parent.mkdir(parents=True, exist_ok=True)
        return path

    def manifest(self, started: dt.datetime) -> RunManifest:
        return RunManifest(
            stage=self.stage,
            seed=self.global_seed,
            config_digest=config_digest({"stage": self.stage, "seed": self.global_seed, "config": self.effective}),
            inputs=self.inputs,
            outputs=self.outputs,
            started_at=_timestamp(self.gateway, started),
            finished_at=_timestamp(self.gateway, _now()),
            gateway_calls=dict(self.gateway.calls) if self.gateway else {},
            report=self.report,
        )


def _read_many(paths: Sequence[Path], split: str = "train") -> Dataset:
    return concat([read_jsonl(p, split=split) for p in paths], split=split)


# -- stages -------------------------------------------------------------------


def stage_ingest(ctx: StageContext) -> None:
    sec = ctx.config.section("ingest")
    if ctx.args.path:
        sources = [{"id": ctx.args.id or Path(ctx.args.path).stem, "path": ctx.args.path,
                    "format": ctx.args.format or "jsonl-canonical"}]
        descs = [SourceDescriptor.from_dict(sources[0])]
    else:
        sources = sec.get("sources") or []
        if not sources:
            raise UsageError("ingest: give --path or list sources in the config")
        descs = [SourceDescriptor.from_dict(s, ctx.config.base) for s in sources]
    split = ctx.args.split or sec.get("split", "train")
    ctx.effective = {"sources": sources, "split": split}
    ctx.inputs = [Path(d.path) for d in descs]
    _require(ctx.inputs)
    ds = concat([ingest(d, split) for d in descs], split=split)
    out = ctx.out_path(ctx.args.out, "ingested.jsonl")
    write_jsonl(out, ds)
    ctx.outputs = [out]
    ctx.report = {"samples": len(ds), "sources": dict(ds.manifest)}


def stage_dedup(ctx: StageContext) -> None:
    ctx.inputs = [Path(p) for p in ctx.args.inputs]
    _require(ctx.inputs)
    ds = _read_many(ctx.inputs)
    merged = dedup_merge(ds)
    out = ctx.out_path(ctx.args.out, "dedup.jsonl")
    write_jsonl(out, merged)
    ctx.outputs = [out]
    ctx.report = {"samples_in": len(ds), "samples_out": len(merged)}


def stage_leak_check(ctx: StageContext) -> None:
    train_paths = [Path(p) for p in ctx.args.inputs]
    eval_paths = [Path(p) for p in ctx.args.eval]
    ctx.inputs = train_paths + eval_paths
    _require(ctx.inputs)
    ds = _read_many(train_paths)
    reports = []
    for p in eval_paths:
        ds, rep = leak_check(ds, read_jsonl(p, split="test"))
        reports.append({"eval": p.name, **rep.to_dict()})
    out = ctx.out_path(ctx.args.out, "leak_checked.jsonl")
    write_jsonl(out, ds)
    ctx.outputs = [out]
    ctx.report = {"removed": sum(r["removed_count"] for r in reports), "checks": reports}


def stage_stats(ctx: StageContext) -> None:
    named: dict[str, Dataset] = {}
    for item in ctx.args.inputs:
        name, _, path = item.rpartition("=") if "=" in item else (Path(item).stem, "", item)
        ctx.inputs.append(Path(path))
        named[name] = read_jsonl(path)
    _require(ctx.inputs)
    table = stats_table(named)
    print(json.dumps(table.to_dict(), indent=2) if ctx.args.json else table.format())
    ctx.report = table.to_dict()


def _policy(raw: Any) -> Any:
    if isinstance(raw, str):
        return [float(x) for x in raw.split(",")]
    return raw


def stage_forge(ctx: StageContext) -> None:
    sec = _override(ctx.config.section("forge"), count=ctx.args.count, policy=ctx.args.policy,
                    corpus=ctx.args.corpus, constraints=ctx.args.constraints)
    if "count" not in sec:
        raise UsageError("forge: --count is required")
    corpus_path = ctx.config.path(sec["corpus"]) if sec.get("corpus") else DEFAULT_CORPUS
    ctx.effective = sec
    ctx.inputs = [Path(corpus_path)]
    _require(ctx.inputs)
    gw = ctx.open_gateway()
    log = ForgeLog()
    ds = forge_dataset(load_seed_corpus(corpus_path), int(sec["count"]), _policy(sec.get("policy")), gw,
                       ctx.seed, sec.get("constraints"), log)
    out = ctx.out_path(ctx.args.out, "synth.jsonl")
    write_jsonl(out, ds)
    ctx.outputs = [out]
    ctx.report = {"samples": len(ds), "attempted": log.attempted, "duplicates": log.duplicates,
                  "failures": dict(sorted(log.failures.items()))}


def _injection_config(sec: Mapping, seed: int) -> InjectionConfig:
    return InjectionConfig(p=float(sec.get("p", 0.25)), a=int(sec.get("a", 2)), b=int(sec.get("b", 4)), seed=seed)


def stage_inject(ctx: StageContext) -> None:
    sec = _override(ctx.config.section("inject"), p=ctx.args.p, a=ctx.args.a, b=ctx.args.b)
    ctx.effective = sec
    ctx.inputs = [Path(ctx.args.input)]
    _require(ctx.inputs)
    gw = ctx.open_gateway()
    ds, rep = inject_unknowns(read_jsonl(ctx.args.input), _injection_config(sec, ctx.seed), gw)
    out = ctx.out_path(ctx.args.out, "injected.jsonl")
    write_jsonl(out, ds)
    ctx.outputs = [out]
    ctx.report = rep.to_dict()


def _upscale_config(sec: Mapping, seed: int) -> UpscaleConfig:
    known = {"batch_size", "temperature", "top_p", "max_passes", "five_class"}
    return UpscaleConfig(seed=seed, **{k: v for k, v in sec.items() if k in known})


def stage_upscale(ctx: StageContext) -> None:
    sec = _override(ctx.config.section("upscale"), batch_size=ctx.args.batch_size, temperature=ctx.args.temperature,
                    top_p=ctx.args.top_p, max_passes=ctx.args.max_passes,
                    five_class=True if ctx.args.five_class else None)
    ctx.effective = sec
    ctx.inputs = [Path(ctx.args.input)]
    _require(ctx.inputs)
    gw = ctx.open_gateway()
    ds, rep = upscale(read_jsonl(ctx.args.input), _upscale_config(sec, ctx.seed), gw)
    out = ctx.out_path(ctx.args.out, "upscaled.jsonl")
    write_jsonl(out, ds)
    ctx.outputs = [out]
    ctx.report = rep.to_dict()


def stage_reason(ctx: StageContext) -> None:
    from .reasoning.chains import bootstrap, is_kept

    ctx.inputs = [Path(ctx.args.input)]
    _require(ctx.inputs)
    ds = read_jsonl(ctx.args.input)
    gw = ctx.open_gateway()
    pairs = bootstrap([s for s in ds if s.aspects], gw)
    statuses: dict[str, int] = {}
    kept = []
    for s, chain in pairs:
        statuses[chain.status.value] = statuses.get(chain.status.value, 0) + 1
        if is_kept(chain) or ctx.args.keep_rejected:
            kept.append(Sample(s.text, s.aspects, s.overall, s.language, s.source, chain))
    out = ctx.out_path(ctx.args.out, "reasoned.jsonl")
    write_jsonl(out, ds.replace_samples(kept))
    ctx.outputs = [out]
    ctx.effective = {"keep_rejected": bool(ctx.args.keep_rejected)}
    ctx.report = {"samples": len(pairs), "kept": sum(is_kept(c) for _, c in pairs), "status": statuses}


def _tokenizer(vocab_path: str | None, grow: bool):
    from .reasoning.tokenizer import ReferenceTokenizer, Vocab

    vocab = Vocab.load(vocab_path) if vocab_path and Path(vocab_path).exists() else None
    return ReferenceTokenizer(vocab, grow=grow)


def _write_records(path: Path, records: Sequence[Mapping]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for r in records:
            fh.write(json.dumps(r, ensure_ascii=False) + "\n")


def _read_records(path: str | Path) -> list[dict]:
    with open(path, encoding="utf-8") as fh:
        return [json.loads(line) for line in fh if line.strip()]


def stage_render(ctx: StageContext) -> None:
    from .core import ChainStatus
    from .reasoning.sequences import render_decoder_target, render_encoder_cls_input, render_encoder_template

    kind = ctx.args.kind
    ctx.inputs = [Path(ctx.args.input)]
    _require(ctx.inputs)
    if not ctx.args.vocab:
        raise UsageError("render: --vocab is required")
    tok = _tokenizer(ctx.args.vocab, grow=True)
    records, skipped = [], 0
    for s in read_jsonl(ctx.args.input):
        chain = s.reasoning
        usable = chain is not None and chain.text.strip() and chain.status is not ChainStatus.REJECTED
        if kind == "encoder":
            if not usable:
                skipped += 1
                continue
            records.append(render_encoder_template(s, chain, tok).to_record())
        elif kind == "cls":
            records.extend(
                {**render_encoder_cls_input(s.text, a.name, tok).to_record(), "label": p.value}
                for a, p in s.aspects.items()
            )
        else:
            if ctx.args.thinking and not usable:
                skipped += 1
                continue
            target = render_decoder_target(s, chain, ctx.args.thinking, tok, ctx.args.class_mode)
            records.append({**target.to_record(), "n_prompt_tokens": len(target.prompt_tokens),
                            "n_completion_tokens": len(target.completion_tokens)})
    out = ctx.out_path(ctx.args.out, f"render_{kind}.jsonl")
    _write_records(out, records)
    tok.vocab.save(ctx.args.vocab)
    ctx.outputs = [out, Path(ctx.args.vocab)]
    ctx.effective = {"kind": kind, "thinking": bool(ctx.args.thinking), "class_mode": ctx.args.class_mode}
    ctx.report = {"records": len(records), "skipped": skipped}


def stage_mask(ctx: StageContext) -> None:
    from .reasoning.masking import targeted_mask
    from .reasoning.sequences import TokenSequence

    sec = _override(ctx.config.section("mask"), ratio=ctx.args.ratio)
    ratio = float(sec.get("ratio", 0.30))
    ctx.inputs = [Path(ctx.args.input), Path(ctx.args.vocab)]
    _require(ctx.inputs)
    vocab = _tokenizer(ctx.args.vocab, grow=False).vocab
    # One RNG per record, so any record can be re-masked on its own.
    records = [targeted_mask(TokenSequence.from_record(r, vocab), ratio, derive_rng(ctx.seed, i)).to_record()
               for i, r in enumerate(_read_records(ctx.args.input))]
    out = ctx.out_path(ctx.args.out, "masked.jsonl")
    _write_records(out, records)
    ctx.outputs = [out]
    ctx.effective = {"ratio": ratio}
    ctx.report = {"sequences": len(records), "selected": sum(sum(r["selection_mask"]) for r in records)}


def stage_pack(ctx: StageContext) -> None:
    from .reasoning.masking import MaskedSequence
    from .reasoning.packing import pack, write_packs
    from .reasoning.sequences import TokenSequence

    sec = _override(ctx.config.section("pack"), l_max=ctx.args.l_max)
    if "l_max" not in sec:
        raise UsageError("pack: --l-max is required")
    ctx.inputs = [Path(ctx.args.input), Path(ctx.args.vocab)]
    _require(ctx.inputs)
    vocab = _tokenizer(ctx.args.vocab, grow=False).vocab
    recs = _read_records(ctx.args.input)
    seqs = [MaskedSequence.from_record(r, vocab) if "input_tokens" in r else TokenSequence.from_record(r, vocab)
            for r in recs]
    packs = pack(seqs, int(sec["l_max"]), vocab.sep_id)
    out = ctx.out_path(ctx.args.out, "packed.jsonl")
    write_packs(out, packs)
    ctx.outputs = [out]
    ctx.effective = {"l_max": int(sec["l_max"])}
    total = sum(len(p) for p in packs)
    ctx.report = {"sequences": len(seqs), "packs": len(packs),
                  "fill": total / (len(packs) * int(sec["l_max"])) if packs else 0.0}


def stage_eval(ctx: StageContext) -> None:
    sec = _override(ctx.config.section("eval"), class_mode=ctx.args.class_mode,
                    include_overall=True if ctx.args.include_overall else None,
                    strict_json=True if ctx.args.strict_json else None)
    paths = {n: ctx.config.path(p) for n, p in (sec.get("datasets") or {}).items()}
    for item in ctx.args.dataset or []:
        name, sep, path = item.partition("=")
        if not sep:
            raise UsageError(f"--dataset expects name=path, got {item!r}")
        paths[name] = Path(path)
    if not paths:
        raise UsageError("eval: at least one --dataset name=path is required")
    ctx.inputs = list(paths.values())
    _require(ctx.inputs)
    config = EvalConfig(
        class_mode=sec.get("class_mode", "five"),
        include_overall=bool(sec.get("include_overall", False)),
        gen_params=GenParams(temperature=float(sec.get("temperature", 0.0)), top_p=float(sec.get("top_p", 1.0))),
        strict_json=bool(sec.get("strict_json", False)),
    )
    ctx.effective = {**config.to_dict(), "datasets": sorted(paths)}
    gw = ctx.open_gateway()
    report = run_benchmark({n: read_jsonl(p, split="test") for n, p in paths.items()}, config, gw)
    print(report.format())
    out = ctx.out_path(ctx.args.out, "eval_report.json")
    out.write_text(report.to_json() + "\n", encoding="utf-8")
    ctx.outputs = [out]
    ctx.report = {r.name: r.metrics.accuracy for r in report.rows}


def stage_translate(ctx: StageContext) -> None:
    ctx.inputs = [Path(ctx.args.input)]
    _require(ctx.inputs)
    gw = ctx.open_gateway()
    ds, dropped = translate_dataset(read_jsonl(ctx.args.input), ctx.args.language, gw)
    out = ctx.out_path(ctx.args.out, f"translated_{ctx.args.language}.jsonl")
    write_jsonl(out, ds)
    ctx.outputs = [out]
    ctx.effective = {"language": ctx.args.language}
    ctx.report = {"samples": len(ds), "dropped": dropped}


# -- compose ------------------------------------------------------------------


@dataclass
class ComposeResult:
    mix: Dataset
    encoder_train: Dataset
    report: dict
    inputs: list[Path] = field(default_factory=list)


def compose_mix(config: RunConfig, gateway: Gateway, global_seed: int, p: float | None = None) -> ComposeResult:
    """Merged public + synthetic corpus, unknown-augmented, with the upscaled split appended.

    Injection runs before the upscaled split is appended, so generated samples
    never receive unknown labels.
    """
    sec = config.section("compose")
    public = [SourceDescriptor.from_dict(d, config.base) for d in sec.get("public") or []]
    synth_paths = [config.path(x) for x in _as_list(sec.get("synth"))]
    eval_paths = [config.path(x) for x in _as_list(sec.get("eval"))]
    up_src = SourceDescriptor.from_dict(sec["upscale_source"], config.base) if sec.get("upscale_source") else None
    if not public and not synth_paths:
        raise ConfigError("compose: no public or synthetic components configured")
    inputs = [Path(d.path) for d in public] + synth_paths + eval_paths + ([Path(up_src.path)] if up_src else [])
    _require(inputs)

    parts = [ingest(d) for d in public] + [read_jsonl(x) for x in synth_paths]
    combined = concat(parts, split="train")
    merged = dedup_merge(combined)
    report: dict[str, Any] = {"components": dict(combined.manifest), "after_dedup": len(merged)}

    evals = [read_jsonl(x, split="test") for x in eval_paths]
    leaks = []
    for x, ev in zip(eval_paths, evals):
        merged, rep = leak_check(merged, ev)
        leaks.append({"eval": x.name, "removed": rep.removed_count})
    report["leak_check"] = leaks

    inj_sec = _override(config.section("inject"), p=p)
    injected, inj = inject_unknowns(merged, _injection_config(inj_sec, derive_seed(global_seed, "inject-unknown")), gateway)
    report["inject"] = inj.to_dict()

    samples = list(injected.samples)
    if up_src is not None:
        up_cfg = _upscale_config(config.section("upscale"), derive_seed(global_seed, "upscale"))
        generated, up = upscale(ingest(up_src), up_cfg, gateway)
        for ev in evals:
            generated, _ = leak_check(generated, ev)
        # The upscaled split may not repeat a text already in the mix.
        have = {s.key for s in samples}
        appended = [s for s in generated if s.key not in have]
        samples.extend(appended)
        report["upscale"] = {**up.to_dict(), "appended": len(appended)}

    mix = Dataset(tuple(samples), split="train")
    excluded = {d.id for d in public if d.exclude_from_encoder_train}
    if up_src is not None and up_src.exclude_from_encoder_train:
        excluded.add(up_src.id)
    encoder = mix.replace_samples(s for s in mix if not excluded.intersection(s.provenance))
    report["encoder_train"] = {"excluded_sources": sorted(excluded), "samples": len(encoder)}
    report["sources"] = dict(mix.manifest)
    return ComposeResult(mix, encoder, report, inputs)


def _as_list(x: Any) -> list:
    if x is None:
        return []
    return list(x) if isinstance(x, (list, tuple)) else [x]


def stage_compose(ctx: StageContext) -> None:
    if not ctx.config.doc:
        raise UsageError("compose-mix needs --config")
    gw = ctx.open_gateway()
    result = compose_mix(ctx.config, gw, ctx.global_seed, ctx.args.p)
    sec = ctx.config.section("compose")
    ctx.effective = {"compose": sec, "inject": _override(ctx.config.section("inject"), p=ctx.args.p),
                     "upscale": ctx.config.section("upscale")}
    ctx.inputs = result.inputs
    out = ctx.out_path(ctx.args.out, "mix.jsonl")
    enc = out.with_name(out.name.split(".")[0] + ".encoder.jsonl")
    write_jsonl(out, result.mix)
    write_jsonl(enc, result.encoder_train)
    ctx.outputs = [out, enc]
    ctx.report = result.report


# -- argument parsing ---------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> None:  # type: ignore[override]
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="absa-forge", description=__doc__.splitlines()[0])
    parser.add_argument("--config", help="YAML run config")
    parser.add_argument("--seed", type=int, help="global seed (overrides config)")
    parser.add_argument("--out-dir", help="directory for default output names")
    parser.add_argument("--cassette", help="cassette file for the LLM gateway")
    parser.add_argument("--mode", choices=["record", "replay", "passthrough"])
    parser.add_argument("--endpoint", help="OpenAI-compatible chat completions URL")
    parser.add_argument("--model")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="stage", parser_class=_Parser)

    p = sub.add_parser("ingest", help="read a public source into canonical JSONL")
    p.add_argument("--path", "--source", dest="path")
    p.add_argument("--id")
    p.add_argument("--format", choices=["jsonl-canonical", "csv-pairs", "semeval-xml-like"])
    p.add_argument("--split", choices=["train", "validation", "test"])
    p.add_argument("--out")

    p = sub.add_parser("dedup", help="merge samples with equal normalized text")
    p.add_argument("--in", dest="inputs", action="append", required=True)
    p.add_argument("--out")

    p = sub.add_parser("leak-check", help="drop training texts that occur in eval splits")
    p.add_argument("--in", dest="inputs", action="append", required=True)
    p.add_argument("--eval", "--leak-against", dest="eval", action="append", required=True)
    p.add_argument("--out")

    p = sub.add_parser("stats", help="print the per-dataset statistics table")
    p.add_argument("--in", dest="inputs", action="append", required=True, help="path or name=path")
    p.add_argument("--json", action="store_true")

    p = sub.add_parser("forge", help="generate synthetic samples from sampled label specs")
    p.add_argument("--count", type=int)
    p.add_argument("--policy", help="five comma-separated weights: pos,neg,neu,mixed,unknown")
    p.add_argument("--corpus")
    p.add_argument("--constraints")
    p.add_argument("--out")

    p = sub.add_parser("inject-unknown", help="add judge-verified absent aspects as unknown")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--p", type=float)
    p.add_argument("--a", "--min-aspects", dest="a", type=int)
    p.add_argument("--b", "--max-aspects", dest="b", type=int)
    p.add_argument("--out")

    p = sub.add_parser("upscale", help="grow a dataset with style-matched synthetic samples")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--temperature", type=float)
    p.add_argument("--top-p", type=float)
    p.add_argument("--max-passes", type=int)
    p.add_argument("--five-class", action="store_true")
    p.add_argument("--out")

    p = sub.add_parser("reason", help="generate, refine and curate reasoning chains")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--keep-rejected", action="store_true")
    p.add_argument("--out")

    p = sub.add_parser("render", help="render samples into encoder or decoder training records")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--kind", choices=["encoder", "cls", "decoder"], default="encoder")
    p.add_argument("--thinking", action="store_true")
    p.add_argument("--class-mode", choices=["three", "five"], default="five")
    p.add_argument("--vocab", help="vocabulary JSON, created or extended in place")
    p.add_argument("--out")

    p = sub.add_parser("mask", help="apply targeted masking to rendered encoder records")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--vocab", required=True)
    p.add_argument("--ratio", type=float)
    p.add_argument("--out")

    p = sub.add_parser("pack", help="pack rendered or masked records up to --l-max tokens")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--vocab", required=True)
    p.add_argument("--l-max", type=int)
    p.add_argument("--out")

    p = sub.add_parser("eval", help="score a model on one or more datasets")
    p.add_argument("--dataset", action="append", help="name=path, repeatable")
    p.add_argument("--class-mode", choices=["three", "five"])
    p.add_argument("--include-overall", action="store_true")
    p.add_argument("--strict-json", action="store_true")
    p.add_argument("--out", help="report JSON path")

    p = sub.add_parser("translate", help="machine-translate a dataset")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--language", required=True)
    p.add_argument("--out")

    p = sub.add_parser("compose-mix", help="assemble the mixed training corpus from a run config")
    p.add_argument("--p", type=float, help="override the unknown-injection share")
    p.add_argument("--out")
    return parser


HANDLERS: dict[str, Callable[[StageContext], None]] = {
    "ingest": stage_ingest,
    "dedup": stage_dedup,
    "leak-check": stage_leak_check,
    "stats": stage_stats,
    "forge": stage_forge,
    "inject-unknown": stage_inject,
    "upscale": stage_upscale,
    "reason": stage_reason,
    "render": stage_render,
    "mask": stage_mask,
    "pack": stage_pack,
    "eval": stage_eval,
    "translate": stage_translate,
    "compose-mix": stage_compose,
}


def _error_record(stage: str | None, exc: BaseException, code: int) -> None:
    record = {"status": "error", "stage": stage, "error": type(exc).__name__, "message": str(exc), "exit_code": code}
    print(json.dumps(record), file=sys.stderr)


def run(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.stage is None:
            raise UsageError(f"a subcommand is required: {', '.join(STAGES)}")
    except UsageError as exc:
        _error_record(None, exc, 2)
        return 2
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    ctx = None
    try:
        ctx = StageContext(RunConfig.load(args.config), args, args.stage)
        started = _now()
        HANDLERS[args.stage](ctx)
        if ctx.gateway is not None:
            ctx.gateway.close()
        if ctx.outputs:
            ctx.manifest(started).write(manifest_path(ctx.outputs[0]))
        return 0
    except UsageError as exc:
        _error_record(args.stage, exc, 2)
        return 2
    except (AbsaForgeError, ValueError, KeyError, OSError) as exc:
        logger.debug("stage failed", exc_info=True)
        _error_record(args.stage, exc, 1)
        return 1


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
