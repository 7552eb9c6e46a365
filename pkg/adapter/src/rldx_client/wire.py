"""Minimal emitter for the rldx trace wire format, version 1.

One UTF-8 JSON object per line: ``{"v": 1, "type": "<Tag>", ...payload}``.
Reals carry 17 significant digits and always a decimal point or exponent;
non-finite reals are the sentinel strings "NaN", "Inf", "-Inf".  Key order
is fixed so records are byte-stable.
"""

from __future__ import annotations

import json
import math

WIRE_VERSION = 1


def format_real(x: float) -> str:
    x = float(x)
    if math.isnan(x):
        return '"NaN"'
    if math.isinf(x):
        return '"Inf"' if x > 0 else '"-Inf"'
    s = format(x, ".17g")
    if not any(c in s for c in ".eE"):
        s += ".0"
    return s


def _emit(obj, parts: list) -> None:
    if isinstance(obj, dict):
        parts.append("{")
        first = True
        for key, value in obj.items():
            if not first:
                parts.append(",")
            first = False
            parts.append(json.dumps(key))
            parts.append(":")
            _emit(value, parts)
        parts.append("}")
    elif isinstance(obj, (list, tuple)):
        parts.append("[")
        for i, value in enumerate(obj):
            if i:
                parts.append(",")
            _emit(value, parts)
        parts.append("]")
    elif isinstance(obj, bool):
        parts.append("true" if obj else "false")
    elif isinstance(obj, int):
        parts.append(str(obj))
    elif isinstance(obj, float):
        parts.append(format_real(obj))
    elif isinstance(obj, str):
        parts.append(json.dumps(obj, ensure_ascii=False))
    else:
        raise TypeError(f"cannot serialize {type(obj).__name__}")


def encode_record(tag: str, payload: dict) -> str:
    parts: list = []
    record = {"v": WIRE_VERSION, "type": tag}
    record.update(payload)
    _emit(record, parts)
    return "".join(parts) + "\n"
