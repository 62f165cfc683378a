"""canoncache: intent canonicalization and tiered plan caching for agent
queries.

Subpackages by concern:

* :mod:`canoncache.model`       shared domain types and key serialization
* :mod:`canoncache.fingerprint` tier-0 template fingerprinting
* :mod:`canoncache.classifier`  nearest-prototype classifier + calibration
* :mod:`canoncache.cascade`     five-tier router with abstention
* :mod:`canoncache.metrics`     cache-key quality (V-measure family)
* :mod:`canoncache.risk`        risk-coverage and threshold certificates
* :mod:`canoncache.cost`        API cost model
* :mod:`canoncache.synth`       synthetic corpus generation
* :mod:`canoncache.pipeline`    end-to-end runs with a hashed manifest
"""

from .model import CacheKey, IntentLabel, ParamSet, PredictionRecord, Query, canonical_key_string, parse_key_string

__version__ = "0.1.0"

__all__ = [
    "CacheKey",
    "IntentLabel",
    "ParamSet",
    "PredictionRecord",
    "Query",
    "canonical_key_string",
    "parse_key_string",
    "__version__",
]
