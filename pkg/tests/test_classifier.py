from __future__ import annotations

import math

import numpy as np
import pytest

from canoncache.classifier import (
    EmbeddingTable,
    PrototypeModel,
    classify,
    ece,
    fit_centroids,
    fit_temperature,
)
from canoncache.errors import (
    DimensionMismatch,
    EmptyInput,
    InvalidParams,
    MissingEmbedding,
    SingleClass,
    ZeroVector,
)
from canoncache.model import CacheKey
from canoncache.synth import SyntheticSpec, generate

KEY_A = CacheKey("alpha", "x")
KEY_B = CacheKey("beta", "x")


def two_class_model(temperature: float = 1.0) -> PrototypeModel:
    return PrototypeModel(
        dim=2,
        centroids={KEY_A: np.array([1.0, 0.0]), KEY_B: np.array([0.0, 1.0])},
        temperature=temperature,
    )


# ---------------------------------------------------------------------------
# fit_centroids
# ---------------------------------------------------------------------------

def test_fit_identical_vectors_recovers_basis():
    table = EmbeddingTable(
        dim=2,
        vectors={
            "a1": np.array([1.0, 0.0]),
            "a2": np.array([1.0, 0.0]),
            "b1": np.array([0.0, 1.0]),
            "b2": np.array([0.0, 1.0]),
        },
    )
    model = fit_centroids([("a1", KEY_A), ("a2", KEY_A), ("b1", KEY_B), ("b2", KEY_B)], table)
    assert np.allclose(model.centroids[KEY_A], [1.0, 0.0])
    assert np.allclose(model.centroids[KEY_B], [0.0, 1.0])
    assert model.temperature == 1.0


def test_fit_symmetric_mean():
    table = EmbeddingTable(
        dim=2,
        vectors={
            "a1": np.array([1.0, 0.0]),
            "a2": np.array([0.0, 1.0]),
            "b1": np.array([-1.0, 0.0]),
        },
    )
    model = fit_centroids([("a1", KEY_A), ("a2", KEY_A), ("b1", KEY_B)], table)
    assert np.allclose(model.centroids[KEY_A], [1 / math.sqrt(2), 1 / math.sqrt(2)])


def test_fit_errors():
    table = EmbeddingTable(dim=2, vectors={"a1": np.array([1.0, 0.0])})
    with pytest.raises(MissingEmbedding):
        fit_centroids([("nope", KEY_A), ("a1", KEY_B)], table)
    with pytest.raises(SingleClass):
        fit_centroids([("a1", KEY_A)], table)


def test_fit_recovers_separable_synthetic_classes():
    spec = SyntheticSpec(
        n_classes=8, n_per_class=8, classifier_accuracy=1.0, seed=5, class_spread=0.05
    )
    queries, table, _records, taxonomy = generate(spec)
    examples = [(q.id, taxonomy[q.true_intent]["key"]) for q in queries]
    model = fit_centroids(examples, table)
    hits = sum(
        classify(table.get(q.id), model, q.id).predicted_key == taxonomy[q.true_intent]["key"]
        for q in queries
    )
    assert hits == len(queries)


# ---------------------------------------------------------------------------
# classify
# ---------------------------------------------------------------------------

def test_classify_at_centroid():
    record = classify(np.array([1.0, 0.0]), two_class_model())
    assert record.predicted_key == KEY_A
    assert record.confidence > 0.5
    assert abs(sum(record.class_scores.values()) - 1.0) < 1e-9


def test_classify_equidistant_ties_to_lexicographic():
    record = classify(np.array([1.0, 1.0]), two_class_model())
    assert record.predicted_key == KEY_A  # "alpha:x" < "beta:x"
    assert abs(record.confidence - 0.5) < 1e-12


def test_classify_large_temperature_goes_uniform():
    record = classify(np.array([1.0, 0.2]), two_class_model(temperature=1e6))
    assert abs(record.confidence - 0.5) < 1e-6


def test_classify_scale_invariance():
    rng = np.random.default_rng(3)
    model = two_class_model(temperature=0.4)
    for _ in range(50):
        vec = rng.standard_normal(2)
        if np.linalg.norm(vec) < 1e-9:
            continue
        base = classify(vec, model)
        for scale in (0.01, 3.7, 250.0):
            assert classify(scale * vec, model).predicted_key == base.predicted_key
            assert np.isclose(classify(scale * vec, model).confidence, base.confidence)


def test_temperature_never_changes_argmax():
    rng = np.random.default_rng(4)
    for _ in range(50):
        vec = rng.standard_normal(2)
        if np.linalg.norm(vec) < 1e-9:
            continue
        keys = set()
        for temperature in (0.05, 0.3, 1.0, 7.0, 49.0):
            keys.add(classify(vec, two_class_model(temperature)).predicted_key)
        assert len(keys) == 1


def test_classify_errors():
    with pytest.raises(DimensionMismatch):
        classify(np.array([1.0, 0.0, 0.0]), two_class_model())
    with pytest.raises(ZeroVector):
        classify(np.array([0.0, 0.0]), two_class_model())


def test_model_round_trip(tmp_path):
    model = two_class_model(temperature=0.37)
    path = tmp_path / "m.json"
    model.save(path)
    loaded = PrototypeModel.load(path)
    assert loaded.temperature == model.temperature
    for key in model.centroids:
        assert np.allclose(loaded.centroids[key], model.centroids[key])


# ---------------------------------------------------------------------------
# ECE
# ---------------------------------------------------------------------------

def test_ece_perfect_and_maximal():
    assert ece([(1.0, True)] * 10).ece == 0.0
    assert ece([(1.0, False)] * 10).ece == 1.0


def test_ece_single_bin_arithmetic():
    preds = [(0.8, True)] * 6 + [(0.8, False)] * 4
    report = ece(preds)
    assert abs(report.ece - 0.2) < 1e-12
    occupied = [b for b in report.bins if b.count]
    assert len(occupied) == 1
    assert occupied[0].count == 10 and abs(occupied[0].accuracy - 0.6) < 1e-12


def test_ece_bins_and_range():
    rng = np.random.default_rng(9)
    preds = [(float(rng.random()), bool(rng.random() < 0.5)) for _ in range(500)]
    report = ece(preds)
    assert 0.0 <= report.ece <= 1.0
    assert sum(b.count for b in report.bins) == 500
    assert len(report.bins) == 15
    with pytest.raises(EmptyInput):
        ece([])
    with pytest.raises(InvalidParams):
        ece([(1.5, True)])


# ---------------------------------------------------------------------------
# fit_temperature
# ---------------------------------------------------------------------------

def _nll_of(rows, temperature):
    total = 0.0
    for scores, true_key in rows:
        arr = np.array([v for _, v in sorted(scores.items(), key=lambda kv: str(kv[0]))])
        keys = [k for k, _ in sorted(scores.items(), key=lambda kv: str(kv[0]))]
        scaled = arr / temperature
        scaled -= scaled.max()
        total += math.log(np.exp(scaled).sum()) - scaled[keys.index(true_key)]
    return total / len(rows)


def test_fit_temperature_separable_hits_lower_bound():
    rows = [({KEY_A: 1.0, KEY_B: -1.0}, KEY_A), ({KEY_A: -1.0, KEY_B: 1.0}, KEY_B)] * 10
    t_star = fit_temperature(rows)
    assert t_star <= 0.051  # search lower bound is 0.05


def test_fit_temperature_softens_wrong_confident_scores():
    # argmax wrong half the time with large margins: softening reduces NLL
    rows = ([({KEY_A: 5.0, KEY_B: -5.0}, KEY_B)] * 5) + ([({KEY_A: 5.0, KEY_B: -5.0}, KEY_A)] * 5)
    t_star = fit_temperature(rows)
    assert t_star > 1.0


def test_fit_temperature_never_worse_than_identity():
    rng = np.random.default_rng(12)
    for _ in range(20):
        rows = []
        for _ in range(30):
            scores = {KEY_A: float(rng.standard_normal()), KEY_B: float(rng.standard_normal())}
            true_key = KEY_A if rng.random() < 0.5 else KEY_B
            rows.append((scores, true_key))
        t_star = fit_temperature(rows)
        assert _nll_of(rows, t_star) <= _nll_of(rows, 1.0) + 1e-12


def test_fit_temperature_reduces_ece_on_overconfident_log():
    spec = SyntheticSpec(
        n_classes=8,
        n_per_class=250,
        classifier_accuracy=0.75,
        confidence_model="overconfident",
        overconfident_scale=4.0,
        seed=21,
    )
    queries, _table, records, taxonomy = generate(spec)
    truth_key = {q.id: taxonomy[q.true_intent]["key"] for q in queries}
    pre = ece([(r.confidence, r.predicted_key == truth_key[r.query_id]) for r in records])
    rows = [
        ({k: math.log(max(v, 1e-300)) for k, v in r.class_scores.items()}, truth_key[r.query_id])
        for r in records
    ]
    t_star = fit_temperature(rows)
    post_pairs = []
    for r in records:
        ordered = sorted(r.class_scores.items(), key=lambda kv: str(kv[0]))
        logits = np.log(np.maximum([v for _, v in ordered], 1e-300)) / t_star
        logits -= logits.max()
        probs = np.exp(logits)
        probs /= probs.sum()
        best = int(np.argmax(probs))
        post_pairs.append((float(probs[best]), ordered[best][0] == truth_key[r.query_id]))
    post = ece(post_pairs)
    assert post.ece <= pre.ece / 2.0  # softening a sharpened log must help at least 2x
