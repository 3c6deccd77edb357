"""Reasoning chains and the training artifacts built from them."""

from .chains import bootstrap, curate, generate_reasoning, refine_reasoning
from .masking import IGNORE_INDEX, MaskedSequence, RatioTooSmall, targeted_mask
from .packing import PackedSequence, SequenceTooLong, pack, plan_packs
from .sequences import (
    THOUGHTS_KEY,
    DecoderTarget,
    TokenSequence,
    render_decoder_target,
    render_encoder_cls_input,
    render_encoder_template,
)
from .tokenizer import ReferenceTokenizer, Vocab

__all__ = [
    "IGNORE_INDEX",
    "THOUGHTS_KEY",
    "DecoderTarget",
    "MaskedSequence",
    "PackedSequence",
    "RatioTooSmall",
    "ReferenceTokenizer",
    "SequenceTooLong",
    "TokenSequence",
    "Vocab",
    "bootstrap",
    "curate",
    "generate_reasoning",
    "pack",
    "plan_packs",
    "refine_reasoning",
    "render_decoder_target",
    "render_encoder_cls_input",
    "render_encoder_template",
    "targeted_mask",
]
