"""Pull a JSON object out of an LLM completion.

Completions arrive fenced, prefixed with chatter, or followed by an
explanation. The extractor strips fences, then scans for the first balanced
``{...}`` that decodes to an object.
"""

from __future__ import annotations

import json
import re

from .core import AbsaForgeError

_FENCE = re.compile(r"```[ \t]*(?:json|JSON)?[ \t]*\n?(.*?)```", re.DOTALL)


class NoJsonFound(AbsaForgeError, ValueError):
    pass


def _balanced_end(text: str, start: int) -> int | None:
    depth = 0
    in_string = False
    escaped = False
    for i in range(start, len(text)):
        ch = text[i]
        if in_string:
            if escaped:
                escaped = False
            elif ch == "\\":
                escaped = True
            elif ch == '"':
                in_string = False
            continue
        if ch == '"':
            in_string = True
        elif ch == "{":
            depth += 1
        elif ch == "}":
            depth -= 1
            if depth == 0:
                return i + 1
    return None


def _candidates(raw: str) -> list[str]:
    blocks = [m.group(1) for m in _FENCE.finditer(raw)]
    return [*blocks, raw]


def extract_json_object(raw: str, *, strict: bool = False, object_pairs_hook=None) -> dict:
    """Return the outermost JSON object found in ``raw``.

    With ``strict`` the whole (trimmed) completion must be one JSON object,
    which is what constrained-decoding backends produce.
    """
    if not isinstance(raw, str):
        raise NoJsonFound("completion is not a string")
    if strict:
        try:
            obj = json.loads(raw.strip(), object_pairs_hook=object_pairs_hook)
        except json.JSONDecodeError as exc:
            raise NoJsonFound(f"strict mode: {exc}") from None
        if not raw.strip().startswith("{"):
            raise NoJsonFound("strict mode: top-level value is not an object")
        return obj

    for chunk in _candidates(raw):
        pos = chunk.find("{")
        while pos != -1:
            end = _balanced_end(chunk, pos)
            if end is None:
                break
            # chunk[pos] is "{", so any successful decode is an object (or
            # whatever object_pairs_hook turned it into)
            try:
                return json.loads(chunk[pos:end], object_pairs_hook=object_pairs_hook)
            except json.JSONDecodeError:
                pass
            pos = chunk.find("{", pos + 1)
    raise NoJsonFound("no JSON object in completion")
