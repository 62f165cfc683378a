#!/usr/bin/env python3
"""Regenerate the mini-corpus embedding and model fixtures.

Embeddings are synthetic unit vectors clustered per intent (the corpus
ships no real sentence encoder); a few deliberately confusing queries get
vectors mixed between two intent centers so the classifier shows
realistic low-confidence behavior. The committed fixtures are the output
of this script at the default seed; rerun it only when the corpus or the
generation recipe changes.
"""

from __future__ import annotations

import sys
from pathlib import Path

import numpy as np

ROOT = Path(__file__).resolve().parents[1]
sys.path.insert(0, str(ROOT / "src"))

from canoncache.classifier import fit_centroids  # noqa: E402
from canoncache.dataio import (  # noqa: E402
    read_dataset,
    read_embeddings,
    read_taxonomy,
    write_embeddings,
)

CORPUS = ROOT / "src" / "canoncache" / "data" / "minicorpus"
DIM = 16
SEED = 1102
SPREAD = 0.18
FIT_SHOTS = 3

# Queries whose embedding mixes two intents (cross-intent confusions).
CONFUSIONS = {
    "m013": ("send_email", "retrieve_weather", 0.55),  # send the weather report
    "m047": ("play_music", "set_reminder", 0.70),      # the song 'yesterday'
}


def main() -> None:
    rng = np.random.default_rng(SEED)
    queries = read_dataset(CORPUS / "queries.jsonl")
    taxonomy = read_taxonomy(CORPUS / "taxonomy.toml")
    intents = sorted(taxonomy)

    centers = {}
    for intent in intents:
        vec = rng.standard_normal(DIM)
        centers[intent] = vec / np.linalg.norm(vec)

    vectors = {}
    for q in queries:
        if q.id in CONFUSIONS:
            primary, secondary, weight = CONFUSIONS[q.id]
            base = weight * centers[primary] + (1.0 - weight) * centers[secondary]
        else:
            base = centers[q.true_intent]
        vec = base + SPREAD * rng.standard_normal(DIM)
        vectors[q.id] = vec / np.linalg.norm(vec)

    write_embeddings(CORPUS / "embeddings.jsonl", DIM, vectors)

    table = read_embeddings(CORPUS / "embeddings.jsonl")
    per_intent: dict[str, int] = {}
    examples = []
    for q in queries:
        if per_intent.get(q.true_intent, 0) >= FIT_SHOTS:
            continue
        per_intent[q.true_intent] = per_intent.get(q.true_intent, 0) + 1
        examples.append((q.id, taxonomy[q.true_intent]["key"]))
    model = fit_centroids(examples, table)
    # Temperature chosen so confidences spread usefully around the default
    # tier-2 threshold instead of saturating near 1/K.
    model = model.with_temperature(0.15)
    model.save(CORPUS / "model.json")
    print(f"wrote embeddings for {len(vectors)} queries and a {len(model.centroids)}-key model")


if __name__ == "__main__":
    main()
