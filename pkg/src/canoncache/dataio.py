"""File formats: dataset / prediction-log / embedding JSONL, TOML configs.

Dataset JSONL      one object per line: {"id","text","language","intent"}
                   (intent optional).
Prediction JSONL   {"id","key","confidence","scores"} (scores optional,
                   mapping canonical key strings to numbers).
Embedding JSONL    first line {"dim": N}, then {"id","vector"} lines.

Writers emit keys in a fixed order and never include timestamps, so
outputs are byte-identical across reruns with the same inputs.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .errors import EmptyInput, InvalidParams
from .model import CacheKey, PredictionRecord, Query, canonical_key_string, parse_key_string


def load_toml(path: str | Path) -> dict:
    with open(path, "rb") as fh:
        return tomllib.load(fh)


def _iter_jsonl(path: str | Path):
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                yield lineno, json.loads(line)
            except json.JSONDecodeError as exc:
                raise InvalidParams(f"{path}:{lineno}: invalid JSON ({exc})") from exc


def _dump_line(obj: dict) -> str:
    return json.dumps(obj, ensure_ascii=False, separators=(",", ":")) + "\n"


# ---------------------------------------------------------------------------
# Datasets
# ---------------------------------------------------------------------------

def read_dataset(path: str | Path) -> list[Query]:
    queries = []
    for lineno, obj in _iter_jsonl(path):
        try:
            queries.append(
                Query(
                    id=str(obj["id"]),
                    text=obj["text"],
                    language=obj.get("language", "en"),
                    true_intent=obj.get("intent"),
                )
            )
        except KeyError as exc:
            raise InvalidParams(f"{path}:{lineno}: missing field {exc}") from exc
    if not queries:
        raise EmptyInput(f"{path}: dataset is empty")
    return queries


def write_dataset(path: str | Path, queries: list[Query]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for q in queries:
            obj = {"id": q.id, "text": q.text, "language": q.language}
            if q.true_intent is not None:
                obj["intent"] = q.true_intent
            fh.write(_dump_line(obj))


# ---------------------------------------------------------------------------
# Prediction logs
# ---------------------------------------------------------------------------

def read_prediction_log(path: str | Path) -> list[PredictionRecord]:
    records = []
    for lineno, obj in _iter_jsonl(path):
        try:
            scores = None
            if obj.get("scores") is not None:
                scores = {parse_key_string(k): float(v) for k, v in obj["scores"].items()}
            records.append(
                PredictionRecord(
                    query_id=str(obj["id"]),
                    predicted_key=parse_key_string(obj["key"]),
                    confidence=float(obj["confidence"]),
                    class_scores=scores,
                )
            )
        except KeyError as exc:
            raise InvalidParams(f"{path}:{lineno}: missing field {exc}") from exc
    if not records:
        raise EmptyInput(f"{path}: prediction log is empty")
    return records


def write_prediction_log(path: str | Path, records: list[PredictionRecord]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            obj = {
                "id": rec.query_id,
                "key": canonical_key_string(rec.predicted_key),
                "confidence": rec.confidence,
            }
            if rec.class_scores is not None:
                obj["scores"] = {
                    canonical_key_string(k): v
                    for k, v in sorted(rec.class_scores.items(), key=lambda kv: canonical_key_string(kv[0]))
                }
            fh.write(_dump_line(obj))


# ---------------------------------------------------------------------------
# Embedding tables
# ---------------------------------------------------------------------------

def read_embeddings(path: str | Path) -> "EmbeddingTable":
    from .classifier import EmbeddingTable  # local import avoids a cycle

    dim = None
    vectors: dict[str, np.ndarray] = {}
    for lineno, obj in _iter_jsonl(path):
        if dim is None:
            if "dim" not in obj:
                raise InvalidParams(f"{path}: first line must be {{\"dim\": N}}")
            dim = int(obj["dim"])
            continue
        vec = np.asarray(obj["vector"], dtype=np.float64)
        vectors[str(obj["id"])] = vec
    if dim is None:
        raise EmptyInput(f"{path}: embedding file is empty")
    return EmbeddingTable(dim=dim, vectors=vectors)


def write_embeddings(path: str | Path, dim: int, vectors: dict[str, np.ndarray]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(_dump_line({"dim": dim}))
        for qid, vec in vectors.items():
            fh.write(_dump_line({"id": qid, "vector": [float(x) for x in vec]}))


# ---------------------------------------------------------------------------
# Taxonomies: intent -> cache key (+ optional plan steps)
# ---------------------------------------------------------------------------

def read_taxonomy(path: str | Path) -> dict[str, dict]:
    """Load a taxonomy TOML: ``[intents.<label>]`` with ``key`` and ``plan``.

    Returns a mapping intent label -> {"key": CacheKey, "plan": [steps]}.
    """
    raw = load_toml(path)
    intents = raw.get("intents")
    if not intents:
        raise InvalidParams(f"{path}: no [intents.*] tables")
    taxonomy: dict[str, dict] = {}
    for label, entry in intents.items():
        key = parse_key_string(entry["key"])
        taxonomy[label] = {"key": key, "plan": list(entry.get("plan", []))}
    return taxonomy


def key_taxonomy(taxonomy: dict[str, dict]) -> dict[str, CacheKey]:
    """Project a full taxonomy down to the intent -> key mapping."""
    return {label: entry["key"] for label, entry in taxonomy.items()}


def write_json(path: str | Path, obj: dict) -> None:
    """Deterministic JSON artifact writer (sorted keys, trailing newline)."""
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, ensure_ascii=False)
        fh.write("\n")
