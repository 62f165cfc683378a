"""Acceptance suite: every release criterion, one test per criterion.

Run with ``pytest tests/test_acceptance.py -v -s`` to see one PASS line
per criterion. Tolerances are pinned here and nowhere else.
"""

from __future__ import annotations

import math
import time

import numpy as np
import pytest

from canoncache.cascade import (
    CascadeEngine,
    TierConfig,
    log_backed_classifier,
    oracle_resolver,
    simulate,
)
from canoncache.classifier import ece, fit_temperature
from canoncache.cost import PricingConfig, evaluate_strategies, scaling_table, sensitivity
from canoncache.fingerprint import FNV64_OFFSET, Lexicons, fingerprint, fnv1a_64
from canoncache.metrics import (
    adjusted_mi,
    build_contingency,
    completeness,
    fowlkes_mallows,
    homogeneity,
    mutual_information,
    report,
    v_measure,
)
from canoncache.model import key_matches_intent
from canoncache.risk import (
    BoundSpec,
    CalibrationSet,
    correction,
    coverage,
    default_grid,
    empirical_risk,
    risk_coverage_sweep,
    select_threshold,
    validate_guarantee,
)
from canoncache.synth import SyntheticSpec, calibrated_generator, generate

from oracles import (
    ami_direct,
    completeness_direct,
    emi_exact,
    fmi_pairwise,
    homogeneity_direct,
    labels_from_table,
    mi_direct,
    random_table,
    v_direct,
)

MASSIVE_MARGINALS = (283, 214, 168, 133, 94, 85, 73, 52)  # n=1102, H = 2.80 bits

ALPHA = 0.10
DELTA = 0.10


def done(number: int, name: str) -> None:
    print(f"CRITERION {number} ({name}): PASS")


# ---------------------------------------------------------------------------
# 1. Cost reproduction
# ---------------------------------------------------------------------------

def test_criterion_01_cost_reproduction():
    start = time.perf_counter()
    cfg = PricingConfig.default()
    results = evaluate_strategies(cfg)
    assert abs(results["no_cache"].monthly_cost_usd - 31.72) <= 0.01
    assert abs(results["apc"].monthly_cost_usd - 29.82) <= 0.01
    assert abs(results["gptcache"].monthly_cost_usd - 19.70) <= 0.01
    assert abs(results["w5h2"].monthly_cost_usd - 0.80) <= 0.01

    seventy = sensitivity([0.70], cfg)[0]
    assert abs(seventy.monthly_cost_usd - 3.88) <= 0.05

    rows = {r["requests_per_day"]: r for r in scaling_table([50, 200, 1000, 10000, 100000], cfg)}
    expected = {
        50: {"no_cache": 31.72, "gptcache": 19.70, "w5h2": 0.80},
        200: {"no_cache": 126.90, "gptcache": 78.80, "w5h2": 3.19},
        1000: {"no_cache": 634.50, "gptcache": 394.02, "w5h2": 15.95},
        10000: {"no_cache": 6345.0, "gptcache": 3940.0, "w5h2": 159.0},
        100000: {"no_cache": 63450.0, "gptcache": 39402.0, "w5h2": 1595.0},
    }
    for req, cols in expected.items():
        for name, dollars in cols.items():
            assert abs(rows[req][name] - dollars) <= 1.0, (req, name)

    elapsed = time.perf_counter() - start
    assert elapsed < 1.0
    done(1, "cost reproduction")


# ---------------------------------------------------------------------------
# 2. Metric conventions
# ---------------------------------------------------------------------------

def test_criterion_02_metric_conventions():
    start = time.perf_counter()
    truth = []
    for idx, count in enumerate(MASSIVE_MARGINALS):
        truth.extend([f"intent_{idx}"] * count)

    majority = build_contingency(truth, ["single"] * len(truth))
    h, c = homogeneity(majority), completeness(majority)
    assert h == 0.0 and c == 1.0 and v_measure(h, c) == 0.0

    per_item = build_contingency(truth, list(range(len(truth))))
    assert homogeneity(per_item) == 1.0
    assert abs(adjusted_mi(per_item)) <= 1e-9
    assert abs(completeness(per_item) - 0.277) <= 0.005
    assert abs(v_measure(1.0, completeness(per_item)) - 0.433) <= 0.005

    elapsed = time.perf_counter() - start
    assert elapsed < 1.0
    done(2, "metric conventions")


# ---------------------------------------------------------------------------
# 3. Metric oracle equivalence
# ---------------------------------------------------------------------------

def test_criterion_03_metric_oracle_equivalence():
    rng = np.random.default_rng(31415)
    for _ in range(1000):
        rows = random_table(rng, max_rows=6, max_cols=6, max_cell=6)
        truth, keys = labels_from_table(rows)
        table = build_contingency(truth, keys)
        h, c = homogeneity(table), completeness(table)
        h_direct, c_direct = homogeneity_direct(rows), completeness_direct(rows)
        assert abs(h - h_direct) < 1e-9
        assert abs(c - c_direct) < 1e-9
        assert abs(v_measure(h, c) - v_direct(h_direct, c_direct)) < 1e-9
        assert abs(mutual_information(table) - mi_direct(rows)) < 1e-9
        assert abs(adjusted_mi(table) - ami_direct(rows)) < 1e-9
        assert abs(fowlkes_mallows(table) - fmi_pairwise(truth, keys)) < 1e-9
    done(3, "metric oracle equivalence over 1000 random tables")


# ---------------------------------------------------------------------------
# 4. Rate-distortion
# ---------------------------------------------------------------------------

def test_criterion_04_rate_distortion():
    for n_keys, bits, tol in ((8, 3.00, 1e-12), (77, 6.27, 0.005), (150, 7.23, 0.005)):
        truth = [f"c{i:03d}" for i in range(n_keys) for _ in range(2)]
        r = report(truth, truth)
        assert abs(r.rate_bits - bits) <= tol
    rng = np.random.default_rng(44)
    for _ in range(200):
        rows = random_table(rng)
        truth, keys = labels_from_table(rows)
        r = report(truth, keys)
        assert r.distortion == 1.0 - r.h
    done(4, "rate-distortion")


# ---------------------------------------------------------------------------
# 5. RCPS corrections
# ---------------------------------------------------------------------------

def test_criterion_05_rcps_corrections():
    assert abs(correction("hoeffding_union", 134, 100, 0.10) - 0.161) <= 0.001
    assert abs(correction("ltt_hoeffding", 134, 1, 0.10) - 0.0927) <= 0.0005
    assert abs(correction("ltt_eb", 100, 1, 0.10, vhat=0.0) - 0.1020) <= 0.0005
    done(5, "RCPS correction constants")


# ---------------------------------------------------------------------------
# 6. RCPS guarantee (Monte Carlo)
# ---------------------------------------------------------------------------

def test_criterion_06_rcps_guarantee_monte_carlo():
    start = time.perf_counter()
    trials = 1000
    generator = calibrated_generator(accuracy=0.85, concentration=2.0)
    three_sigma = 3 * math.sqrt(DELTA * (1 - DELTA) / trials)

    for variant in ("hoeffding_union", "eb_union", "ltt_hoeffding", "ltt_eb"):
        spec = BoundSpec(variant, alpha=ALPHA, delta=DELTA)
        rate = validate_guarantee(
            generator, spec, trials=trials, n_calibration=500, n_test=2000, seed=606
        )
        assert rate <= DELTA + three_sigma, (variant, rate)

    # LTT tau* <= Hoeffding tau* on every trial with identical data
    for trial in range(trials):
        rng = np.random.default_rng((777, trial))
        cal = generator(rng, 500)
        taus = {}
        for variant in ("hoeffding_union", "ltt_hoeffding"):
            cert = select_threshold(cal, BoundSpec(variant, alpha=ALPHA, delta=DELTA))
            taus[variant] = cert.tau_star if cert.feasible else math.inf
        assert taus["ltt_hoeffding"] <= taus["hoeffding_union"], trial

    elapsed = time.perf_counter() - start
    assert elapsed < 120.0
    done(6, f"RCPS guarantee Monte Carlo ({elapsed:.1f}s)")


# ---------------------------------------------------------------------------
# 7. Risk-coverage shape
# ---------------------------------------------------------------------------

def test_criterion_07_risk_coverage_shape():
    rng = np.random.default_rng(71)
    grid = default_grid()
    # monotone on every log, including adversarial random ones
    for _ in range(25):
        conf = rng.random(300)
        cal = CalibrationSet(confidences=conf, correct=rng.random(300) < 0.5)
        risks = [empirical_risk(cal, t) for t in grid]
        covs = [coverage(cal, t) for t in grid]
        assert all(a >= b - 1e-15 for a, b in zip(risks, risks[1:]))
        assert all(a >= b - 1e-15 for a, b in zip(covs, covs[1:]))

    cal = calibrated_generator(accuracy=0.85, concentration=2.0)(
        np.random.default_rng(72), 10_000
    )
    for record in risk_coverage_sweep(cal, grid):
        assert record["safety"] is not None
        assert record["safety"] >= record["tau"] - 0.02
    done(7, "risk-coverage shape")


# ---------------------------------------------------------------------------
# 8. Fingerprint behavior
# ---------------------------------------------------------------------------

def test_criterion_08_fingerprint_behavior(
    minicorpus_queries, minicorpus_lexicons, minicorpus_taxonomy
):
    by_id = {q.id: q for q in minicorpus_queries}
    fp = {q.id: fingerprint(q, minicorpus_lexicons)[0] for q in minicorpus_queries}

    # parameter variants share a hash
    for a, b in (("m001", "m002"), ("m001", "m003"), ("m026", "m027"), ("m034", "m035"),
                 ("m050", "m051"), ("m059", "m060"), ("m042", "m043"), ("m018", "m019"),
                 ("m039", "m040"), ("m016", "m017")):
        assert fp[a].hash == fp[b].hash, (a, b)

    # action variants differ
    for a, b in (("m001", "m010"), ("m026", "m013"), ("m048", "m049"), ("m006", "m009")):
        assert fp[a].hash != fp[b].hash, (a, b)

    # FNV-1a published test vectors
    assert fnv1a_64(b"") == FNV64_OFFSET == 14695981039346656037
    assert fnv1a_64(b"a") == 0xAF63DC4C8601EC8C
    assert fnv1a_64(b"foobar") == 0x85944171F73967E8

    # equal hashes always share ground truth on the corpus
    intents_by_hash: dict = {}
    for qid, f in fp.items():
        intents_by_hash.setdefault(f.hash, set()).add(by_id[qid].true_intent)
    assert all(len(v) == 1 for v in intents_by_hash.values())

    # tier-0 hit precision = 100% in a live cascade over the corpus
    engine = CascadeEngine(
        lexicons=minicorpus_lexicons,
        tiers=[TierConfig(0), TierConfig(1, enabled=False), TierConfig(2, enabled=False),
               TierConfig(3), TierConfig(4)],
        resolvers={3: oracle_resolver(minicorpus_taxonomy)},
        key_taxonomy={k: v["key"] for k, v in minicorpus_taxonomy.items()},
    )
    _stats, resolutions = simulate(minicorpus_queries, engine)
    tier0 = [r for r in resolutions if r.resolved_tier == 0]
    assert tier0, "corpus must exercise tier-0 hits"
    key_taxonomy = {k: v["key"] for k, v in minicorpus_taxonomy.items()}
    assert all(
        key_matches_intent(r.key, by_id[r.query_id].true_intent, key_taxonomy) for r in tier0
    )
    done(8, f"fingerprint behavior (tier-0 hits: {len(tier0)}, precision 100%)")


# ---------------------------------------------------------------------------
# 9. Cascade accounting
# ---------------------------------------------------------------------------

def test_criterion_09_cascade_accounting(tmp_path):
    spec = SyntheticSpec(n_classes=8, n_per_class=500, classifier_accuracy=0.90, seed=90)
    queries, _table, records, taxonomy = generate(spec)
    pool = tmp_path / "pool.jsonl"
    engine = CascadeEngine(
        lexicons=Lexicons(),
        tiers=[TierConfig(0, enabled=False), TierConfig(1, enabled=False),
               TierConfig(2, threshold=0.0), TierConfig(3), TierConfig(4)],
        classifiers={2: log_backed_classifier({r.query_id: r for r in records})},
        resolvers={3: oracle_resolver(taxonomy)},
        key_taxonomy={k: v["key"] for k, v in taxonomy.items()},
        pool_path=pool,
    )
    engine.preload_plans(taxonomy)
    stats, resolutions = simulate(queries, engine)
    assert sum(stats.tier_counts.values()) == len(queries)
    assert abs(stats.safety - 0.90) <= 0.02

    # tier-3 loop: force fall-throughs with a fresh, unwarmed engine
    engine2 = CascadeEngine(
        lexicons=Lexicons(),
        tiers=[TierConfig(0, enabled=False), TierConfig(1, enabled=False),
               TierConfig(2, threshold=1.01), TierConfig(3), TierConfig(4)],
        classifiers={2: log_backed_classifier({r.query_id: r for r in records})},
        resolvers={3: oracle_resolver(taxonomy)},
        key_taxonomy={k: v["key"] for k, v in taxonomy.items()},
        pool_path=tmp_path / "pool2.jsonl",
    )
    _stats2, resolutions2 = simulate(queries[:200], engine2)
    tier3 = [r for r in resolutions2 if r.resolved_tier == 3]
    assert tier3
    for res in tier3:
        assert engine2.cache.lookup_key(res.key) is not None
    pool_lines = (tmp_path / "pool2.jsonl").read_text().splitlines()
    assert len(pool_lines) == len(tier3)
    done(9, f"cascade accounting (safety {stats.safety:.3f})")


# ---------------------------------------------------------------------------
# 10. Calibration
# ---------------------------------------------------------------------------

def _log_prob_rows(records, truth_key):
    rows = []
    for record in records:
        logits = {
            key: math.log(max(value, 1e-300)) for key, value in record.class_scores.items()
        }
        rows.append((logits, truth_key[record.query_id]))
    return rows


def _rescored_ece(records, truth_key, temperature):
    pairs = []
    for record in records:
        ordered = sorted(record.class_scores.items(), key=lambda kv: str(kv[0]))
        logits = np.log(np.maximum([v for _, v in ordered], 1e-300)) / temperature
        logits -= logits.max()
        probs = np.exp(logits)
        probs /= probs.sum()
        best = int(np.argmax(probs))
        pairs.append((float(probs[best]), ordered[best][0] == truth_key[record.query_id]))
    return ece(pairs).ece


def test_criterion_10_calibration(tmp_path):
    # temperature fitting never increases calibration NLL (random logs)
    rng = np.random.default_rng(101)
    from canoncache.model import CacheKey

    keys = [CacheKey(f"k{i}", "x") for i in range(4)]
    for _ in range(25):
        rows = []
        for _ in range(40):
            scores = {k: float(rng.standard_normal()) for k in keys}
            rows.append((scores, keys[int(rng.integers(4))]))
        t_star = fit_temperature(rows)

        def nll(temperature):
            total = 0.0
            for scores, true_key in rows:
                ordered = sorted(scores.items(), key=lambda kv: str(kv[0]))
                arr = np.array([v for _, v in ordered]) / temperature
                arr -= arr.max()
                names = [k for k, _ in ordered]
                total += math.log(np.exp(arr).sum()) - arr[names.index(true_key)]
            return total / len(rows)

        assert nll(t_star) <= nll(1.0) + 1e-12

    # overconfident synthetic log: post-scaling ECE <= pre-scaling ECE / 5
    spec = SyntheticSpec(
        n_classes=8, n_per_class=500, classifier_accuracy=0.75,
        confidence_model="overconfident", overconfident_scale=4.0, seed=1010,
    )
    queries, _table, records, taxonomy = generate(spec)
    truth_key = {q.id: taxonomy[q.true_intent]["key"] for q in queries}
    pre = ece(
        [(r.confidence, r.predicted_key == truth_key[r.query_id]) for r in records]
    ).ece
    t_star = fit_temperature(_log_prob_rows(records, truth_key))
    post = _rescored_ece(records, truth_key, t_star)
    assert post <= pre / 5.0, (pre, post)
    done(10, f"calibration (ECE {pre:.3f} -> {post:.3f}, T* = {t_star:.2f})")
