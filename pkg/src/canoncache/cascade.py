"""Five-tier query router with per-tier confidence abstention.

Tier 0 matches the query's template fingerprint against previously
resolved templates; tiers 1 and 2 are confidence-thresholded classifiers
whose keys must have a cached plan to count as hits (a confident key
without an executable plan falls through); tier 3 is a cheap external
resolver whose results are cached and appended to the retraining pool;
tier 4 is the deep resolver of last resort.

The fingerprint-hash index is warmed only by tier-3 resolutions, so
tier-0 hits inherit resolver-grade keys rather than classifier guesses.
Cache inserts are serialized through a single lock; lookups read the
live maps, which is safe under the single-writer discipline.
"""

from __future__ import annotations

import json
import re
import threading
import time
from dataclasses import dataclass
from pathlib import Path

from .classifier import EmbeddingTable, PrototypeModel, classify
from .errors import InvalidParams, ResolverUnavailable
from .fingerprint import Lexicons, fingerprint
from .model import (
    CacheKey,
    ParamSet,
    PredictionRecord,
    Query,
    canonical_key_string,
    key_matches_intent,
)

_SLOT_MARKER = re.compile(r"\{(\w+)\}")
VALID_SLOTS = ("who", "when", "how_much")

LOCAL_TIERS = (0, 1, 2)


@dataclass(frozen=True)
class TierConfig:
    """One cascade stage: its id, threshold, and enablement.

    Thresholds above 1.0 are allowed and mean "always abstain", since
    confidences never exceed 1; thresholds are ignored for tiers 0/3/4.
    """

    tier_id: int
    threshold: float = 0.0
    enabled: bool = True

    def __post_init__(self):
        if not 0 <= self.tier_id <= 4:
            raise InvalidParams(f"tier id {self.tier_id} outside 0..4")
        if self.threshold < 0.0:
            raise InvalidParams(f"threshold {self.threshold} negative")


@dataclass(frozen=True)
class PlanTemplate:
    """Ordered plan steps with {who}/{when}/{how_much} slot markers."""

    key: CacheKey
    steps: tuple

    def __post_init__(self):
        object.__setattr__(self, "steps", tuple(self.steps))
        for step in self.steps:
            for marker in _SLOT_MARKER.findall(step):
                if marker not in VALID_SLOTS:
                    raise InvalidParams(f"unknown slot marker {{{marker}}} in {step!r}")


@dataclass
class CacheEntry:
    key: CacheKey
    plan: PlanTemplate
    hit_count: int = 0
    created_seq: int = 0


@dataclass(frozen=True)
class Resolution:
    """Outcome of routing one query through the cascade."""

    query_id: str
    resolved_tier: int
    key: CacheKey | None
    plan: tuple | None
    was_cache_hit: bool
    missing_params: tuple = ()

    def __post_init__(self):
        if self.resolved_tier in LOCAL_TIERS and self.key is None:
            raise InvalidParams(f"tier {self.resolved_tier} resolution must carry a key")
        if self.was_cache_hit and self.plan is None:
            raise InvalidParams("cache hit without a plan")

    def to_dict(self) -> dict:
        return {
            "id": self.query_id,
            "tier": self.resolved_tier,
            "key": canonical_key_string(self.key) if self.key else None,
            "plan": list(self.plan) if self.plan is not None else None,
            "cache_hit": self.was_cache_hit,
            "missing_params": list(self.missing_params),
        }


def _inject_steps(steps: tuple, params: ParamSet) -> tuple[tuple, tuple]:
    missing: list[str] = []

    def fill(match: re.Match) -> str:
        name = match.group(1)
        value = params.get(name)
        if value is None:
            if name not in missing:
                missing.append(name)
            return f"<missing:{name}>"
        return value

    return tuple(_SLOT_MARKER.sub(fill, step) for step in steps), tuple(missing)


def inject_params(plan: PlanTemplate, params: ParamSet) -> tuple[tuple, tuple]:
    """Fill slot markers from params; unmatched markers become
    ``<missing:NAME>`` and are flagged rather than fatal.

    Returns (concrete steps, missing slot names in first-seen order).
    """
    return _inject_steps(plan.steps, params)


# ---------------------------------------------------------------------------
# Plan cache
# ---------------------------------------------------------------------------

class PlanCache:
    """Key-indexed plan store plus a template-hash -> key index.

    Unbounded by design: the key space is bounded by the taxonomy, so
    eviction is a non-goal. Writes go through one lock (single-writer
    commit point); reads are lock-free.
    """

    def __init__(self):
        self.entries: dict[str, CacheEntry] = {}
        self.hash_index: dict[int, str] = {}
        self._seq = 0
        self._lock = threading.Lock()

    def insert(self, key: CacheKey, plan: PlanTemplate) -> CacheEntry:
        keystr = canonical_key_string(key)
        with self._lock:
            entry = self.entries.get(keystr)
            if entry is None:
                self._seq += 1
                entry = CacheEntry(key=key, plan=plan, created_seq=self._seq)
                self.entries[keystr] = entry
            return entry

    def associate(self, template_hash: int, key: CacheKey) -> None:
        with self._lock:
            self.hash_index[template_hash] = canonical_key_string(key)

    def lookup_hash(self, template_hash: int) -> CacheEntry | None:
        keystr = self.hash_index.get(template_hash)
        return self.entries.get(keystr) if keystr is not None else None

    def lookup_key(self, key: CacheKey) -> CacheEntry | None:
        return self.entries.get(canonical_key_string(key))

    def record_hit(self, entry: CacheEntry) -> None:
        with self._lock:
            entry.hit_count += 1

    def __len__(self) -> int:
        return len(self.entries)


# ---------------------------------------------------------------------------
# Resolver and classifier hooks
# ---------------------------------------------------------------------------

def oracle_resolver(taxonomy: dict):
    """Ground-truth hook: resolves to the labeled intent's key and plan."""

    def resolve(query: Query):
        if query.true_intent is None:
            return None
        entry = taxonomy.get(query.true_intent)
        if entry is None:
            return None
        key = entry["key"]
        return key, PlanTemplate(key=key, steps=tuple(entry["plan"]))

    return resolve


def stub_resolver(steps=("deep_agent_execute",), latency_s: float = 0.0):
    """Fixed-latency stub: always succeeds, returns no key (nothing cacheable)."""

    def resolve(query: Query):
        if latency_s > 0:
            time.sleep(latency_s)
        return None, tuple(steps)

    return resolve


def log_backed_classifier(records: dict):
    """Classifier hook replaying an external prediction log by query id."""

    def classify_query(query: Query) -> PredictionRecord | None:
        return records.get(query.id)

    return classify_query


def prototype_classifier(model: PrototypeModel, table: EmbeddingTable):
    """Classifier hook over a prototype model; abstains without embedding."""

    def classify_query(query: Query) -> PredictionRecord | None:
        vec = table.get(query.id)
        if vec is None:
            return None
        return classify(vec, model, query_id=query.id)

    return classify_query


# ---------------------------------------------------------------------------
# Engine
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TrafficStats:
    """Per-tier accounting over one simulated stream.

    The raw labeled/correct counters are kept so partitions of a stream
    merge associatively.
    """

    tier_counts: dict
    total: int
    coverage: float
    safety: float | None
    unsafe_rate: float | None
    labeled_covered: int = 0
    correct_covered: int = 0

    def to_dict(self) -> dict:
        return {
            "tier_counts": {str(t): self.tier_counts.get(t, 0) for t in range(5)},
            "total": self.total,
            "coverage": self.coverage,
            "safety": self.safety,
            "unsafe_rate": self.unsafe_rate,
            "labeled_covered": self.labeled_covered,
        }

    @staticmethod
    def merge(parts: list["TrafficStats"]) -> "TrafficStats":
        counts: dict[int, int] = {t: 0 for t in range(5)}
        labeled = 0
        correct = 0
        for part in parts:
            for t, c in part.tier_counts.items():
                counts[t] += c
            labeled += part.labeled_covered
            correct += part.correct_covered
        return _finalize_stats(counts, labeled, correct)


def _finalize_stats(counts: dict, labeled_covered: int, correct_covered: int) -> TrafficStats:
    total = sum(counts.values())
    covered = sum(counts.get(t, 0) for t in LOCAL_TIERS)
    safety = correct_covered / labeled_covered if labeled_covered else None
    return TrafficStats(
        tier_counts=dict(counts),
        total=total,
        coverage=covered / total if total else 0.0,
        safety=safety,
        unsafe_rate=(1.0 - safety) if safety is not None else None,
        labeled_covered=labeled_covered,
        correct_covered=correct_covered,
    )


class CascadeEngine:
    """Routes queries through tiers 0-4 with abstention and learning."""

    def __init__(
        self,
        lexicons: Lexicons,
        tiers: list[TierConfig] | None = None,
        classifiers: dict | None = None,
        resolvers: dict | None = None,
        key_taxonomy: dict | None = None,
        pool_path: str | Path | None = None,
        learn: bool = True,
    ):
        configs = tiers or [TierConfig(tier_id=t) for t in range(5)]
        ids = [c.tier_id for c in configs]
        if len(set(ids)) != len(ids):
            raise InvalidParams("duplicate tier ids")
        self.tiers = {c.tier_id: c for c in configs}
        for t in range(5):
            self.tiers.setdefault(t, TierConfig(tier_id=t))
        self.lexicons = lexicons
        self.classifiers = classifiers or {}
        self.resolvers = resolvers or {}
        self.key_taxonomy = key_taxonomy
        self.pool_path = Path(pool_path) if pool_path else None
        self.learn = learn
        self.cache = PlanCache()

    def preload_plans(self, taxonomy: dict) -> None:
        """Seed the plan store (not the hash index) from a taxonomy."""
        for entry in taxonomy.values():
            key = entry["key"]
            self.cache.insert(key, PlanTemplate(key=key, steps=tuple(entry["plan"])))

    def _append_pool(self, query: Query, key: CacheKey) -> None:
        if self.pool_path is None:
            return
        line = json.dumps(
            {"text": query.text, "key": canonical_key_string(key)},
            ensure_ascii=False,
            separators=(",", ":"),
        )
        with open(self.pool_path, "a", encoding="utf-8") as fh:
            fh.write(line + "\n")

    def route(self, query: Query) -> Resolution:
        """Send one query down the cascade; every query resolves exactly once."""
        fp, params = fingerprint(query, self.lexicons)

        if self.tiers[0].enabled:
            entry = self.cache.lookup_hash(fp.hash)
            if entry is not None:
                steps, missing = inject_params(entry.plan, params)
                self.cache.record_hit(entry)
                return Resolution(query.id, 0, entry.key, steps, True, missing)

        for tier_id in (1, 2):
            config = self.tiers[tier_id]
            hook = self.classifiers.get(tier_id)
            if not config.enabled or hook is None:
                continue
            record = hook(query)
            if record is None or record.confidence < config.threshold:
                continue
            entry = self.cache.lookup_key(record.predicted_key)
            if entry is None:
                continue  # a key without an executable plan is not a hit
            steps, missing = inject_params(entry.plan, params)
            self.cache.record_hit(entry)
            return Resolution(query.id, tier_id, record.predicted_key, steps, True, missing)

        if self.tiers[3].enabled and self.resolvers.get(3) is not None:
            result = self.resolvers[3](query)
            if result is not None and result[0] is not None and result[1] is not None:
                key, plan = result
                template = (
                    plan
                    if isinstance(plan, PlanTemplate)
                    else PlanTemplate(key=key, steps=tuple(plan))
                )
                if self.learn:
                    self.cache.insert(key, template)
                    self.cache.associate(fp.hash, key)
                    self._append_pool(query, key)
                steps, missing = inject_params(template, params)
                return Resolution(query.id, 3, key, steps, False, missing)

        if self.tiers[4].enabled and self.resolvers.get(4) is not None:
            result = self.resolvers[4](query)
            if result is not None:
                key, plan = result
                steps = None
                missing: tuple = ()
                if plan is not None:
                    raw = plan.steps if isinstance(plan, PlanTemplate) else tuple(plan)
                    steps, missing = _inject_steps(raw, params)
                return Resolution(query.id, 4, key, steps, False, missing)

        raise ResolverUnavailable(
            f"query {query.id!r}: all tiers abstained and no resolver accepted it"
        )


def simulate(queries: list[Query], engine: CascadeEngine) -> tuple[TrafficStats, list[Resolution]]:
    """Stream queries through the engine in order; account for traffic.

    Safety is the share of tier-0..2 resolutions whose key matches the
    ground-truth intent, over labeled queries only; None when the stream
    is unlabeled or nothing resolved locally.
    """
    counts = {t: 0 for t in range(5)}
    labeled_covered = 0
    correct_covered = 0
    resolutions = []
    for query in queries:
        res = engine.route(query)
        resolutions.append(res)
        counts[res.resolved_tier] += 1
        if res.resolved_tier in LOCAL_TIERS and query.true_intent is not None:
            labeled_covered += 1
            if res.key is not None and key_matches_intent(
                res.key, query.true_intent, engine.key_taxonomy
            ):
                correct_covered += 1
    return _finalize_stats(counts, labeled_covered, correct_covered), resolutions


# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------

def build_engine(config: dict, base_dir: str | Path, pool_path: str | Path | None = None) -> CascadeEngine:
    """Assemble an engine from a parsed simulate config.

    Relative paths resolve against ``base_dir``. Tier-1/2 classifiers
    come from prototype-model files plus an embedding table, or from a
    replayed prediction log (``predictions``) when no model is given.
    ``pool_path`` overrides the config's retraining-pool location.
    """
    from .dataio import read_embeddings, read_prediction_log, read_taxonomy

    base = Path(base_dir)
    engine_cfg = config.get("engine", {})
    tier_cfg = config.get("tiers", {})
    resolver_cfg = config.get("resolvers", {})

    def path_of(name: str) -> Path | None:
        value = engine_cfg.get(name)
        return (base / value) if value else None

    lexicon_dir = path_of("lexicons")
    lexicons = Lexicons.load(lexicon_dir) if lexicon_dir else Lexicons()

    taxonomy = None
    taxonomy_path = path_of("taxonomy")
    if taxonomy_path:
        taxonomy = read_taxonomy(taxonomy_path)

    table = None
    embeddings_path = path_of("embeddings")
    if embeddings_path:
        table = read_embeddings(embeddings_path)

    classifiers = {}
    for tier_id, model_key in ((1, "model_tier1"), (2, "model")):
        model_path = path_of(model_key)
        if model_path and model_path.exists():
            if table is None:
                raise InvalidParams(f"{model_key} given but no embeddings file configured")
            classifiers[tier_id] = prototype_classifier(PrototypeModel.load(model_path), table)
    predictions_path = path_of("predictions")
    if 2 not in classifiers and predictions_path:
        records = {r.query_id: r for r in read_prediction_log(predictions_path)}
        classifiers[2] = log_backed_classifier(records)

    tiers = [
        TierConfig(0, enabled=tier_cfg.get("t0_enabled", True)),
        TierConfig(
            1,
            threshold=tier_cfg.get("t1_threshold", 0.85),
            enabled=tier_cfg.get("t1_enabled", 1 in classifiers),
        ),
        TierConfig(
            2,
            threshold=tier_cfg.get("t2_threshold", 0.25),
            enabled=tier_cfg.get("t2_enabled", True),
        ),
        TierConfig(3, enabled=tier_cfg.get("t3_enabled", True)),
        TierConfig(4, enabled=tier_cfg.get("t4_enabled", True)),
    ]

    resolvers = {}
    for tier_id, name in ((3, "tier3"), (4, "tier4")):
        kind = resolver_cfg.get(name, "oracle" if taxonomy else "none")
        if kind == "oracle":
            if taxonomy is None:
                raise InvalidParams(f"{name} resolver is 'oracle' but no taxonomy configured")
            resolvers[tier_id] = oracle_resolver(taxonomy)
        elif kind == "stub":
            resolvers[tier_id] = stub_resolver(
                steps=tuple(resolver_cfg.get("stub_steps", ("deep_agent_execute",))),
                latency_s=float(resolver_cfg.get("stub_latency_s", 0.0)),
            )
        elif kind != "none":
            raise InvalidParams(f"unknown resolver kind {kind!r} for {name}")

    pool = pool_path or path_of("pool")
    engine = CascadeEngine(
        lexicons=lexicons,
        tiers=tiers,
        classifiers=classifiers,
        resolvers=resolvers,
        key_taxonomy={label: e["key"] for label, e in taxonomy.items()} if taxonomy else None,
        pool_path=pool,
        learn=engine_cfg.get("learn", True),
    )
    if taxonomy and engine_cfg.get("preload_plans", False):
        engine.preload_plans(taxonomy)
    return engine
