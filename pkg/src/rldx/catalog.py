"""Diagnostic catalog: ID -> severity, message template, recommendations.

Messages live in ``catalog.json`` (shipped as package data) so they can be
edited without code changes.  Every built-in check constructs its Diagnosis
records through :func:`make_diagnosis` so severity and wording have a single
source of truth.
"""

from __future__ import annotations

import json
from functools import lru_cache
from importlib import resources

from rldx.events import Diagnosis, Scope


@lru_cache(maxsize=1)
def load_catalog() -> dict[str, dict]:
    text = resources.files("rldx").joinpath("catalog.json").read_text(encoding="utf-8")
    return json.loads(text)


def is_catalog_id(diagnostic_id: str) -> bool:
    return diagnostic_id in load_catalog()


def family_of(diagnostic_id: str) -> str:
    """Diagnostic family prefix, e.g. 'EXP' for 'EXP.d2', 'NN' for 'NN.W3'."""
    return diagnostic_id.split(".", 1)[0]


FAMILIES = ("AGT", "ENV", "STT", "STP", "EXP", "RWD", "ACN", "QTR", "NN")


def make_diagnosis(
    diagnostic_id: str,
    scope: Scope,
    observed: float,
    threshold: float,
    detail: str = "",
    **extra,
) -> Diagnosis:
    entry = load_catalog()[diagnostic_id]
    message = entry["message"].format(
        observed=observed, threshold=threshold, detail=detail, **extra
    )
    return Diagnosis(
        diagnostic_id=diagnostic_id,
        severity=entry["severity"],
        scope=scope,
        observed=float(observed),
        threshold=float(threshold),
        message=message,
        recommendations=tuple(entry["recommendations"]),
    )
