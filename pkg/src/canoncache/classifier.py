"""Nearest-prototype classifier over precomputed embeddings, plus
confidence calibration (ECE, temperature scaling).

The classifier is deterministic and training-free: each key's centroid is
the renormalized mean of its members' unit vectors, scores are a softmax
over cosine similarities divided by a temperature, and ties break to the
lexicographically smallest canonical key string. Embeddings are inputs;
this module never computes them.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import (
    DimensionMismatch,
    EmptyInput,
    InvalidParams,
    MissingEmbedding,
    SingleClass,
    ZeroVector,
)
from .model import CacheKey, PredictionRecord, canonical_key_string, parse_key_string

UNIT_NORM_TOL = 1e-9

# Golden-section search domain for temperature fitting, on log T.
TEMP_LOG_LO = math.log(0.05)
TEMP_LOG_HI = math.log(50.0)
TEMP_ITERATIONS = 200


@dataclass(frozen=True)
class EmbeddingTable:
    """Query-id -> vector carrier for externally computed embeddings."""

    dim: int
    vectors: dict

    def __post_init__(self):
        if self.dim <= 0:
            raise InvalidParams(f"dim={self.dim} must be positive")
        for qid, vec in self.vectors.items():
            arr = np.asarray(vec, dtype=np.float64)
            if arr.shape != (self.dim,):
                raise DimensionMismatch(f"vector for {qid!r} has shape {arr.shape}")
            if not np.all(np.isfinite(arr)):
                raise InvalidParams(f"vector for {qid!r} has NaN/Inf components")
            self.vectors[qid] = arr

    def get(self, qid: str) -> np.ndarray | None:
        return self.vectors.get(qid)


@dataclass(frozen=True)
class PrototypeModel:
    """Unit-norm centroid per key plus a softmax temperature."""

    dim: int
    centroids: dict
    temperature: float = 1.0

    def __post_init__(self):
        if self.temperature <= 0:
            raise InvalidParams(f"temperature {self.temperature} must be positive")
        if len(self.centroids) < 2:
            raise SingleClass("a prototype model needs at least two keys")
        for key, vec in self.centroids.items():
            arr = np.asarray(vec, dtype=np.float64)
            if arr.shape != (self.dim,):
                raise DimensionMismatch(f"centroid for {key} has shape {arr.shape}")
            norm = float(np.linalg.norm(arr))
            if abs(norm - 1.0) > UNIT_NORM_TOL:
                raise InvalidParams(f"centroid for {key} has norm {norm}")
            self.centroids[key] = arr

    def with_temperature(self, temperature: float) -> "PrototypeModel":
        return PrototypeModel(dim=self.dim, centroids=dict(self.centroids), temperature=temperature)

    def to_dict(self) -> dict:
        return {
            "dim": self.dim,
            "temperature": self.temperature,
            "centroids": {
                canonical_key_string(k): [float(x) for x in v]
                for k, v in sorted(self.centroids.items(), key=lambda kv: canonical_key_string(kv[0]))
            },
        }

    @classmethod
    def from_dict(cls, raw: dict) -> "PrototypeModel":
        return cls(
            dim=int(raw["dim"]),
            centroids={parse_key_string(k): np.asarray(v) for k, v in raw["centroids"].items()},
            temperature=float(raw.get("temperature", 1.0)),
        )

    def save(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")

    @classmethod
    def load(cls, path: str | Path) -> "PrototypeModel":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


def _unit(vec: np.ndarray, context: str) -> np.ndarray:
    norm = float(np.linalg.norm(vec))
    if norm == 0.0:
        raise ZeroVector(context)
    return vec / norm


def fit_centroids(examples, table: EmbeddingTable) -> PrototypeModel:
    """Fit one unit-norm centroid per key from labeled example ids.

    Each centroid is the L2-normalized mean of its members' L2-normalized
    vectors; temperature starts at 1.
    """
    members: dict[CacheKey, list[np.ndarray]] = {}
    for qid, key in examples:
        vec = table.get(qid)
        if vec is None:
            raise MissingEmbedding(f"no embedding for query {qid!r}")
        members.setdefault(key, []).append(_unit(vec, f"query {qid!r} has a zero vector"))
    if not members:
        raise EmptyInput("no training examples")
    if len(members) < 2:
        raise SingleClass(f"only one key in training data: {next(iter(members))}")
    centroids = {
        key: _unit(np.mean(vecs, axis=0), f"centroid for {key} collapsed to zero")
        for key, vecs in members.items()
    }
    return PrototypeModel(dim=table.dim, centroids=centroids, temperature=1.0)


def _softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max()
    exps = np.exp(shifted)
    return exps / exps.sum()


def classify(vector, model: PrototypeModel, query_id: str = "") -> PredictionRecord:
    """Softmax over cos(vector, centroid)/T; argmax with lexicographic ties.

    Scale-invariant in the input vector (cosine similarity); temperature
    reshapes confidences but never changes the predicted key.
    """
    vec = np.asarray(vector, dtype=np.float64)
    if vec.shape != (model.dim,):
        raise DimensionMismatch(f"vector shape {vec.shape}, model dim {model.dim}")
    vec = _unit(vec, "classify received a zero vector")
    ordered = sorted(model.centroids.items(), key=lambda kv: canonical_key_string(kv[0]))
    keys = [k for k, _ in ordered]
    cosines = np.array([float(vec @ centroid) for _, centroid in ordered])
    scores = _softmax(cosines / model.temperature)
    best = int(np.argmax(scores))  # first index wins ties = lexicographically smallest
    return PredictionRecord(
        query_id=query_id,
        predicted_key=keys[best],
        confidence=float(scores[best]),
        class_scores={k: float(s) for k, s in zip(keys, scores)},
    )


# ---------------------------------------------------------------------------
# Calibration
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CalibrationBin:
    mean_confidence: float
    accuracy: float
    count: int

    def to_dict(self) -> dict:
        return {
            "mean_confidence": self.mean_confidence,
            "accuracy": self.accuracy,
            "count": self.count,
        }


@dataclass(frozen=True)
class CalibrationReport:
    ece: float
    bins: tuple
    fitted_temperature: float

    def to_dict(self) -> dict:
        return {
            "ece": self.ece,
            "fitted_temperature": self.fitted_temperature,
            "bins": [b.to_dict() for b in self.bins],
        }


def ece(predictions, bins: int = 15, fitted_temperature: float = 1.0) -> CalibrationReport:
    """Expected calibration error over equal-width confidence bins.

    ECE = Σ_b (count_b / n) · |accuracy_b − mean confidence_b|; a
    confidence of exactly 1.0 lands in the top bin; empty bins
    contribute nothing.
    """
    pairs = [(float(conf), bool(correct)) for conf, correct in predictions]
    if not pairs:
        raise EmptyInput("no predictions")
    if any(not 0.0 <= conf <= 1.0 for conf, _ in pairs):
        raise InvalidParams("confidence outside [0,1]")
    conf_sum = np.zeros(bins)
    hit_sum = np.zeros(bins)
    counts = np.zeros(bins, dtype=np.int64)
    for conf, correct in pairs:
        idx = min(int(conf * bins), bins - 1)
        conf_sum[idx] += conf
        hit_sum[idx] += correct
        counts[idx] += 1
    n = len(pairs)
    total = 0.0
    records = []
    for idx in range(bins):
        if counts[idx] == 0:
            records.append(CalibrationBin(0.0, 0.0, 0))
            continue
        mean_conf = conf_sum[idx] / counts[idx]
        accuracy = hit_sum[idx] / counts[idx]
        total += (counts[idx] / n) * abs(accuracy - mean_conf)
        records.append(CalibrationBin(float(mean_conf), float(accuracy), int(counts[idx])))
    return CalibrationReport(ece=float(total), bins=tuple(records), fitted_temperature=fitted_temperature)


def _nll(score_rows, true_indices, temperature: float) -> float:
    total = 0.0
    for logits, true_idx in zip(score_rows, true_indices):
        scaled = logits / temperature
        shifted = scaled - scaled.max()
        log_z = math.log(np.exp(shifted).sum())
        total += log_z - shifted[true_idx]
    return total / len(score_rows)


_INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0


def fit_temperature(raw_scores) -> float:
    """Minimize calibration NLL over T by golden-section search on log T.

    ``raw_scores`` is a list of (score map keyed by CacheKey, true key)
    pairs; the score values act as logits. The returned T* never does
    worse than T = 1 (the untempered scores win when search cannot
    improve on them).
    """
    rows = list(raw_scores)
    if len(rows) < 2:
        raise EmptyInput(f"need at least 2 calibration rows, got {len(rows)}")
    score_rows = []
    true_indices = []
    for scores, true_key in rows:
        ordered = sorted(scores.items(), key=lambda kv: canonical_key_string(kv[0]))
        keys = [k for k, _ in ordered]
        if true_key not in scores:
            raise InvalidParams(f"true key {true_key} missing from score map")
        score_rows.append(np.array([s for _, s in ordered], dtype=np.float64))
        true_indices.append(keys.index(true_key))

    def objective(log_t: float) -> float:
        return _nll(score_rows, true_indices, math.exp(log_t))

    lo, hi = TEMP_LOG_LO, TEMP_LOG_HI
    x1 = hi - _INV_PHI * (hi - lo)
    x2 = lo + _INV_PHI * (hi - lo)
    f1, f2 = objective(x1), objective(x2)
    for _ in range(TEMP_ITERATIONS):
        if f1 <= f2:
            hi, x2, f2 = x2, x1, f1
            x1 = hi - _INV_PHI * (hi - lo)
            f1 = objective(x1)
        else:
            lo, x1, f1 = x1, x2, f2
            x2 = lo + _INV_PHI * (hi - lo)
            f2 = objective(x2)
    best_log_t = x1 if f1 <= f2 else x2
    t_star = math.exp(best_log_t)
    if objective(best_log_t) > _nll(score_rows, true_indices, 1.0):
        return 1.0
    return t_star
