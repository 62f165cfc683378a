"""Synthetic corpus, embedding, and prediction-log generation.

Everything is a pure function of the generation spec (seed included), so reruns are
byte-identical. The prediction log realizes the requested classifier
accuracy exactly in expectation: each record draws a per-query success
probability p from a Beta distribution with mean equal to the requested
accuracy, flips correctness with probability p, and reports either

* ``calibrated`` confidences: conf = p, so conf = P(correct) by
  construction (class-score maps are attached whenever the uniform
  split over wrong keys keeps the predicted key the argmax), or
* ``overconfident`` confidences: the true score vector sharpened by a
  power ``scale`` (the two-class case reduces to conf = sigmoid(scale ·
  logit p)), which temperature scaling at T = scale undoes exactly.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .classifier import EmbeddingTable
from .dataio import write_dataset, write_embeddings, write_prediction_log
from .errors import InvalidSpec
from .model import CacheKey, PredictionRecord, Query
from .risk import CalibrationSet

_VERBS = (
    "check", "send", "set", "play", "find", "order", "cancel", "book",
    "track", "update", "open", "close", "start", "stop", "sync",
)
_NOUNS = (
    "email", "calendar", "weather", "music", "lights", "stock",
    "timer", "list", "report", "route", "camera", "thermostat",
)

_PERSONS = ("alice", "bob", "carol", "dave", "erin", "frank", "grace", "heidi")
_TIMES = ("5pm", "9am", "monday", "tomorrow", "7:30", "tonight")
_NUMBERS = ("5", "12", "42", "100", "250")

_DEFAULT_TEMPLATES = (
    "{verb} the {noun} for {person}",
    "{verb} {noun} from {person}",
    "please {verb} the {noun} at {time}",
    "{verb} {noun} number {number}",
    "can you {verb} my {noun}",
)

_MIN_PROB = 1e-9


@dataclass(frozen=True)
class SyntheticSpec:
    """Parameters of one synthetic corpus; the seed fixes all randomness."""

    n_classes: int
    n_per_class: int
    classifier_accuracy: float
    confidence_model: str = "calibrated"
    overconfident_scale: float = 4.0
    seed: int = 0
    templates: tuple = _DEFAULT_TEMPLATES
    embedding_dim: int = 16
    class_spread: float = 0.25
    beta_concentration: float = 2.0

    def __post_init__(self):
        if self.n_classes < 2:
            raise InvalidSpec(f"n_classes={self.n_classes} < 2")
        if self.n_classes > len(_VERBS) * len(_NOUNS):
            raise InvalidSpec(f"n_classes={self.n_classes} exceeds the vocabulary")
        if self.n_per_class < 1:
            raise InvalidSpec(f"n_per_class={self.n_per_class} < 1")
        if not 0.0 <= self.classifier_accuracy <= 1.0:
            raise InvalidSpec(f"accuracy {self.classifier_accuracy} outside [0,1]")
        if self.confidence_model not in ("calibrated", "overconfident"):
            raise InvalidSpec(f"unknown confidence model {self.confidence_model!r}")
        if self.overconfident_scale <= 0:
            raise InvalidSpec("overconfident_scale must be positive")
        if self.embedding_dim < 2 or self.class_spread < 0 or self.beta_concentration <= 0:
            raise InvalidSpec("bad embedding or confidence parameters")
        if not self.templates:
            raise InvalidSpec("at least one template required")


def class_vocabulary(n_classes: int) -> list[tuple[str, CacheKey, str, str]]:
    """Deterministic (intent, key, verb, noun) rows for the class set."""
    rows = []
    for i in range(n_classes):
        verb = _VERBS[i % len(_VERBS)]
        noun = _NOUNS[(i // len(_VERBS)) % len(_NOUNS)]
        intent = f"{verb}_{noun}"
        rows.append((intent, CacheKey(action=intent, target=noun), verb, noun))
    return rows


def _draw_success_probs(rng: np.random.Generator, spec: SyntheticSpec, size: int) -> np.ndarray:
    a = spec.classifier_accuracy
    if a >= 1.0 - 1e-12:
        return np.ones(size)
    if a <= 1e-12:
        return np.zeros(size)
    c = spec.beta_concentration
    return rng.beta(c * a, c * (1.0 - a), size=size)


def generate(spec: SyntheticSpec):
    """Build the corpus in memory.

    Returns (queries, embedding table, prediction records, taxonomy)
    where taxonomy maps intent -> {"key": CacheKey, "plan": [steps]}.
    """
    rng = np.random.default_rng(spec.seed)
    classes = class_vocabulary(spec.n_classes)
    taxonomy = {
        intent: {"key": key, "plan": [f"open_{noun}", f"{verb}_{noun}({{who}})"]}
        for intent, key, verb, noun in classes
    }

    centers = rng.standard_normal((spec.n_classes, spec.embedding_dim))
    centers /= np.linalg.norm(centers, axis=1, keepdims=True)

    queries: list[Query] = []
    vectors: dict[str, np.ndarray] = {}
    class_of: list[int] = []
    for class_idx, (intent, _key, verb, noun) in enumerate(classes):
        for j in range(spec.n_per_class):
            qid = f"q{len(queries):06d}"
            template = spec.templates[j % len(spec.templates)]
            text = template.format(
                verb=verb,
                noun=noun,
                person=_PERSONS[int(rng.integers(len(_PERSONS)))],
                time=_TIMES[int(rng.integers(len(_TIMES)))],
                number=_NUMBERS[int(rng.integers(len(_NUMBERS)))],
            )
            queries.append(Query(id=qid, text=text, language="en", true_intent=intent))
            noise = spec.class_spread * rng.standard_normal(spec.embedding_dim)
            vec = centers[class_idx] + noise
            vectors[qid] = vec / np.linalg.norm(vec)
            class_of.append(class_idx)

    records = _generate_predictions(rng, spec, queries, class_of, classes)
    table = EmbeddingTable(dim=spec.embedding_dim, vectors=vectors)
    return queries, table, records, taxonomy


def _generate_predictions(rng, spec, queries, class_of, classes) -> list[PredictionRecord]:
    n = len(queries)
    k = spec.n_classes
    probs = _draw_success_probs(rng, spec, n)
    correct = rng.random(n) < probs
    records = []
    for i, query in enumerate(queries):
        true_idx = class_of[i]
        if correct[i]:
            pred_idx = true_idx
        else:
            pred_idx = int(rng.integers(k - 1))
            if pred_idx >= true_idx:
                pred_idx += 1
        pred_key = classes[pred_idx][1]
        p = float(probs[i])
        if spec.confidence_model == "calibrated":
            confidence = p
            scores = None
            if p * k > 1.0 + 1e-9:
                scores = _uniform_remainder_scores(classes, pred_idx, p)
        else:
            p = min(max(p, 1.0 / k + 1e-6), 1.0 - _MIN_PROB)
            scores, confidence = _sharpened_scores(classes, pred_idx, p, k, spec.overconfident_scale)
        records.append(
            PredictionRecord(
                query_id=query.id,
                predicted_key=pred_key,
                confidence=confidence,
                class_scores=scores,
            )
        )
    return records


def _uniform_remainder_scores(classes, pred_idx: int, p: float) -> dict:
    rest = (1.0 - p) / (len(classes) - 1)
    return {key: (p if idx == pred_idx else rest) for idx, (_, key, _, _) in enumerate(classes)}


def _sharpened_scores(classes, pred_idx: int, p: float, k: int, scale: float):
    """Power-sharpen the true score vector; the predicted entry stays argmax."""
    base = np.full(k, (1.0 - p) / (k - 1))
    base[pred_idx] = p
    logits = scale * np.log(base)
    logits -= logits.max()
    sharp = np.exp(logits)
    sharp /= sharp.sum()
    scores = {key: float(sharp[idx]) for idx, (_, key, _, _) in enumerate(classes)}
    return scores, float(sharp[pred_idx])


def write_corpus(
    spec: SyntheticSpec,
    dataset_path: str | Path,
    embeddings_path: str | Path,
    predictions_path: str | Path,
    taxonomy_path: str | Path | None = None,
) -> dict:
    """Generate and persist the three corpus files (plus optional taxonomy)."""
    queries, table, records, taxonomy = generate(spec)
    write_dataset(dataset_path, queries)
    write_embeddings(embeddings_path, table.dim, table.vectors)
    write_prediction_log(predictions_path, records)
    if taxonomy_path is not None:
        _write_taxonomy(taxonomy_path, taxonomy)
    empirical = sum(
        r.predicted_key.action == q.true_intent for q, r in zip(queries, records)
    ) / len(queries)
    return {
        "n_queries": len(queries),
        "n_classes": spec.n_classes,
        "empirical_accuracy": empirical,
    }


def _write_taxonomy(path: str | Path, taxonomy: dict) -> None:
    lines = []
    for intent in sorted(taxonomy):
        entry = taxonomy[intent]
        lines.append(f"[intents.{intent}]")
        lines.append(f'key = "{entry["key"].canonical()}"')
        steps = ", ".join(f'"{s}"' for s in entry["plan"])
        lines.append(f"plan = [{steps}]")
        lines.append("")
    Path(path).write_text("\n".join(lines), encoding="utf-8")


# ---------------------------------------------------------------------------
# Generators for the Monte-Carlo guarantee validator
# ---------------------------------------------------------------------------

def calibrated_generator(accuracy: float = 0.85, concentration: float = 2.0):
    """Draws (conf, correct) pairs with conf = P(correct) exactly."""

    def gen(rng: np.random.Generator, n: int) -> CalibrationSet:
        if accuracy >= 1.0 - 1e-12:
            p = np.ones(n)
        elif accuracy <= 1e-12:
            p = np.zeros(n)
        else:
            p = rng.beta(concentration * accuracy, concentration * (1.0 - accuracy), size=n)
        return CalibrationSet(confidences=p, correct=rng.random(n) < p)

    return gen
