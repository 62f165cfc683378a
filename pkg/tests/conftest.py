from __future__ import annotations

import sys
from pathlib import Path

import pytest

TESTS_DIR = Path(__file__).resolve().parent
sys.path.insert(0, str(TESTS_DIR))

MINICORPUS = TESTS_DIR.parent / "src" / "canoncache" / "data" / "minicorpus"


@pytest.fixture(scope="session")
def minicorpus_dir() -> Path:
    return MINICORPUS


@pytest.fixture(scope="session")
def minicorpus_queries():
    from canoncache.dataio import read_dataset

    return read_dataset(MINICORPUS / "queries.jsonl")


@pytest.fixture(scope="session")
def minicorpus_lexicons():
    from canoncache.fingerprint import Lexicons

    return Lexicons.load(MINICORPUS / "lexicons")


@pytest.fixture(scope="session")
def minicorpus_taxonomy():
    from canoncache.dataio import read_taxonomy

    return read_taxonomy(MINICORPUS / "taxonomy.toml")


@pytest.fixture(scope="session")
def minicorpus_embeddings():
    from canoncache.dataio import read_embeddings

    return read_embeddings(MINICORPUS / "embeddings.jsonl")


@pytest.fixture(scope="session")
def minicorpus_model():
    from canoncache.classifier import PrototypeModel

    return PrototypeModel.load(MINICORPUS / "model.json")
