"""Scripted stand-ins for a model, used to craft cassettes offline.

Each responder maps a :class:`ChatRequest` to a completion string and can be
plugged into :class:`~absa_forge.gateway.ScriptedTransport` in record mode.
"""

from __future__ import annotations

import json
import re
from typing import Callable, Mapping

from .core import normalize_text
from .gateway import ChatRequest

Responder = Callable[[ChatRequest], str]

_JUDGE = re.compile(r"Text:\n(?P<text>.*)\n\nAspect: (?P<aspect>.*?)\n", re.DOTALL)
_EXEMPLAR = re.compile(r"^\d+\. (\{.*\})$", re.MULTILINE)


def judge_fields(request: ChatRequest) -> tuple[str, str]:
    m = _JUDGE.search(request.user_text)
    if not m:
        raise ValueError("not a judge request")
    return m.group("text"), m.group("aspect")


def judge_by_mention(request: ChatRequest) -> str:
    """Approve a candidate exactly when its name does not occur in the text."""
    text, aspect = judge_fields(request)
    return "No" if normalize_text(aspect) in normalize_text(text) else "Yes"


def always(answer: str) -> Responder:
    return lambda request: answer


def upscale_exemplars(request: ChatRequest) -> list[dict]:
    return [json.loads(m) for m in _EXEMPLAR.findall(request.user_text)]


def unique_upscale(request: ChatRequest) -> str:
    """A fresh neutral-leaning sample derived from the first exemplar.

    The request fingerprint is folded into the text, so distinct requests
    always yield distinct samples.
    """
    first = upscale_exemplars(request)[0]
    names = list(first["aspects"])
    tag = request.fingerprint[:8]
    aspects = {names[0]: "neutral"}
    text = f"Order {tag}: the {names[0]} was about what you would expect"
    if len(names) > 1:
        aspects[names[1]] = "positive"
        text += f", and the {names[1]} was a pleasant surprise"
    return json.dumps({"text": text + ".", "aspects": aspects})


def by_tag(responders: Mapping[str, Responder]) -> Responder:
    def respond(request: ChatRequest) -> str:
        if request.tag not in responders:
            raise ValueError(f"no scripted responder for tag {request.tag!r}")
        return responders[request.tag](request)

    return respond
