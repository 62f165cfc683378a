"""Shared domain types: queries, cache keys, parameter sets, prediction records.

All types are immutable values (frozen dataclasses) and validate their
invariants at construction, so anything downstream can trust them without
re-checking. Cache keys serialize canonically as ``action:target``; the
``:`` separator is outside the token alphabet, which makes the encoding
injective over valid keys.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

from .errors import CanonCacheError, EmptyInput, InvalidParams

# Token grammar for key components and intent labels. Keys in this form
# survive file formats and shell usage unescaped.
TOKEN_RE = re.compile(r"[a-z][a-z0-9_]*\Z")

PARAM_SLOTS = ("who", "when", "how_much")

KEY_SEPARATOR = ":"


def _check_token(value: str, what: str) -> str:
    if not TOKEN_RE.match(value):
        raise InvalidParams(f"{what} {value!r} does not match [a-z][a-z0-9_]*")
    return value


@dataclass(frozen=True)
class CacheKey:
    """Canonical (action, target) pair identifying a reusable plan template."""

    action: str
    target: str

    def __post_init__(self):
        _check_token(self.action, "action")
        _check_token(self.target, "target")

    def canonical(self) -> str:
        return canonical_key_string(self)


@dataclass(frozen=True)
class IntentLabel:
    """Canonical intent token; same grammar as a cache-key component."""

    label: str

    def __post_init__(self):
        _check_token(self.label, "intent label")


def canonical_key_string(key: CacheKey) -> str:
    """Serialize a key as ``action:target``.

    Injective over valid keys and stable across runs and platforms: both
    tokens exclude ``:``, so the separator position is unambiguous.
    """
    return key.action + KEY_SEPARATOR + key.target


def parse_key_string(text: str) -> CacheKey:
    """Inverse of :func:`canonical_key_string`."""
    action, sep, target = text.partition(KEY_SEPARATOR)
    if not sep:
        raise InvalidParams(f"key string {text!r} has no {KEY_SEPARATOR!r} separator")
    return CacheKey(action=action, target=target)


@dataclass(frozen=True)
class ParamSet:
    """Execution-time parameters, kept out of the cache key.

    Slot names are restricted to who/when/how_much; values are non-empty
    surface strings.
    """

    slots: dict = field(default_factory=dict)

    def __post_init__(self):
        for name, value in self.slots.items():
            if name not in PARAM_SLOTS:
                raise InvalidParams(f"unknown parameter slot {name!r}")
            if not isinstance(value, str) or not value:
                raise InvalidParams(f"slot {name!r} has empty value")

    def get(self, name: str):
        return self.slots.get(name)


@dataclass(frozen=True)
class Query:
    """A single input query with optional ground-truth intent."""

    id: str
    text: str
    language: str = "en"
    true_intent: str | None = None

    def __post_init__(self):
        if not self.id:
            raise EmptyInput("query id is empty")
        if not self.text.strip():
            raise EmptyInput(f"query {self.id!r} has empty text")


SCORE_SUM_TOL = 1e-6
SCORE_MAX_TOL = 1e-9


@dataclass(frozen=True)
class PredictionRecord:
    """Per-query classifier output: key, confidence, optional score map."""

    query_id: str
    predicted_key: CacheKey
    confidence: float
    class_scores: dict | None = None

    def __post_init__(self):
        if not 0.0 <= self.confidence <= 1.0:
            raise InvalidParams(f"confidence {self.confidence} outside [0,1]")
        if self.class_scores is None:
            return
        if self.predicted_key not in self.class_scores:
            raise InvalidParams("predicted_key missing from class_scores")
        total = 0.0
        top = None
        for key, score in self.class_scores.items():
            if not isinstance(key, CacheKey):
                raise InvalidParams("class_scores keys must be CacheKey")
            if not 0.0 <= score <= 1.0:
                raise InvalidParams(f"score {score} outside [0,1]")
            total += score
            if top is None or score > top:
                top = score
        if abs(total - 1.0) > SCORE_SUM_TOL:
            raise InvalidParams(f"class_scores sum {total} not within 1e-6 of 1")
        if abs(self.class_scores[self.predicted_key] - top) > SCORE_MAX_TOL:
            raise InvalidParams("confidence is not the maximum class score")
        if abs(self.confidence - top) > SCORE_MAX_TOL:
            raise InvalidParams("confidence does not equal max(class_scores)")


def key_matches_intent(key: CacheKey, intent: str, taxonomy: dict | None = None) -> bool:
    """Decide whether a predicted key is correct for a ground-truth intent.

    With a taxonomy (intent -> CacheKey) the comparison is exact; without
    one, the action component is compared to the intent token, matching
    the convention that class labels are action-shaped tokens.
    """
    if taxonomy is not None and intent in taxonomy:
        return key == taxonomy[intent]
    return key.action == intent


__all__ = [
    "CacheKey",
    "IntentLabel",
    "ParamSet",
    "Query",
    "PredictionRecord",
    "canonical_key_string",
    "parse_key_string",
    "key_matches_intent",
    "CanonCacheError",
    "PARAM_SLOTS",
    "TOKEN_RE",
]
