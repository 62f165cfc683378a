"""End-to-end pipeline: fingerprint -> classify -> simulate -> metrics ->
sweep -> calibrate -> cost, with a content-hashed run manifest.

Every stage is a pure function of (inputs, config, seed), artifacts are
written with deterministic encoders, and the manifest lists one artifact
per stage with its sha256, so a rerun with the same inputs is
byte-identical. Stage failures surface as PipelineStageError carrying
the stage name.
"""

from __future__ import annotations

import csv
import hashlib
import json
from pathlib import Path

from .cascade import build_engine, simulate
from .classifier import PrototypeModel, classify
from .cost import PricingConfig, evaluate_strategies
from .dataio import (
    load_toml,
    read_dataset,
    read_embeddings,
    read_taxonomy,
    write_json,
    write_prediction_log,
)
from .errors import InvalidParams, MissingEmbedding, PipelineStageError
from .fingerprint import Lexicons, fingerprint
from .metrics import report
from .model import canonical_key_string, key_matches_intent
from .risk import BoundSpec, CalibrationSet, default_grid, risk_coverage_sweep, select_threshold

STAGES = ("fingerprint", "classify", "simulate", "metrics", "sweep", "calibrate", "cost")

SWEEP_COLUMNS = ("tau", "coverage", "safety", "risk")


def sha256_of(path: Path) -> str:
    digest = hashlib.sha256()
    digest.update(path.read_bytes())
    return digest.hexdigest()


def write_fingerprints(path: Path, queries, lexicons: Lexicons) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for query in queries:
            fp, params = fingerprint(query, lexicons)
            obj = {
                "id": query.id,
                "hash": fp.hash,
                "template": fp.template_text,
                "params": dict(sorted(params.slots.items())),
            }
            fh.write(json.dumps(obj, ensure_ascii=False, separators=(",", ":")) + "\n")


def write_sweep_csv(path: Path, records) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(SWEEP_COLUMNS)
        for rec in records:
            writer.writerow(
                [
                    repr(rec["tau"]),
                    repr(rec["coverage"]),
                    "" if rec["safety"] is None else repr(rec["safety"]),
                    repr(rec["risk"]),
                ]
            )


def correctness_pairs(queries, records, key_taxonomy) -> CalibrationSet:
    """Join predictions to labeled queries as (confidence, correct) pairs."""
    by_id = {r.query_id: r for r in records}
    confidences = []
    correct = []
    for query in queries:
        rec = by_id.get(query.id)
        if rec is None or query.true_intent is None:
            continue
        confidences.append(rec.confidence)
        correct.append(key_matches_intent(rec.predicted_key, query.true_intent, key_taxonomy))
    return CalibrationSet.from_records(zip(confidences, correct))


def run_pipeline(config_path: str | Path, out_dir: str | Path, seed: int = 0) -> dict:
    """Run all seven stages; returns the manifest dict (also written)."""
    config_path = Path(config_path)
    config = load_toml(config_path)
    base = config_path.parent
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    engine_cfg = config.get("engine", {})
    pipeline_cfg = config.get("pipeline", {})
    metrics_cfg = config.get("metrics", {})
    calib_cfg = config.get("calibration", {})
    cost_cfg = config.get("cost", {})

    dataset_rel = pipeline_cfg.get("dataset")
    if not dataset_rel:
        raise InvalidParams("pipeline config needs [pipeline].dataset")
    queries = read_dataset(base / dataset_rel)

    key_taxonomy = None
    if engine_cfg.get("taxonomy"):
        key_taxonomy = {
            label: entry["key"]
            for label, entry in read_taxonomy(base / engine_cfg["taxonomy"]).items()
        }

    artifacts: list[dict] = []

    def record(stage: str, path: Path) -> None:
        artifacts.append({"stage": stage, "path": path.name, "sha256": sha256_of(path)})

    def run_stage(stage: str, fn) -> None:
        try:
            path = fn()
        except Exception as exc:
            raise PipelineStageError(stage, exc) from exc
        record(stage, path)

    # -- fingerprint --------------------------------------------------------
    def stage_fingerprint() -> Path:
        lexicon_dir = engine_cfg.get("lexicons")
        lexicons = Lexicons.load(base / lexicon_dir) if lexicon_dir else Lexicons()
        path = out / "fingerprints.jsonl"
        write_fingerprints(path, queries, lexicons)
        return path

    run_stage("fingerprint", stage_fingerprint)

    # -- classify -----------------------------------------------------------
    prediction_records = []

    def stage_classify() -> Path:
        model_rel = engine_cfg.get("model")
        if not model_rel:
            raise InvalidParams("no model path configured under [engine].model")
        model = PrototypeModel.load(base / model_rel)
        table = read_embeddings(base / engine_cfg["embeddings"])
        for query in queries:
            vec = table.get(query.id)
            if vec is None:
                raise MissingEmbedding(f"no embedding for query {query.id!r}")
            prediction_records.append(classify(vec, model, query_id=query.id))
        path = out / "predictions.jsonl"
        write_prediction_log(path, prediction_records)
        return path

    run_stage("classify", stage_classify)

    # -- simulate -----------------------------------------------------------
    def stage_simulate() -> Path:
        engine = build_engine(config, base)
        stats, _resolutions = simulate(queries, engine)
        path = out / "simstats.json"
        write_json(path, stats.to_dict())
        return path

    run_stage("simulate", stage_simulate)

    # -- metrics ------------------------------------------------------------
    def stage_metrics() -> Path:
        by_id = {r.query_id: r for r in prediction_records}
        truth = []
        keys = []
        for query in queries:
            if query.true_intent is None or query.id not in by_id:
                continue
            truth.append(query.true_intent)
            keys.append(canonical_key_string(by_id[query.id].predicted_key))
        quality = report(truth, keys, beta=float(metrics_cfg.get("beta", 1.0)))
        path = out / "metrics.json"
        write_json(path, quality.to_dict())
        return path

    run_stage("metrics", stage_metrics)

    # -- sweep --------------------------------------------------------------
    grid = default_grid(
        int(calib_cfg.get("grid_size", 100)), float(calib_cfg.get("grid_max", 0.99))
    )

    def stage_sweep() -> Path:
        cal = correctness_pairs(queries, prediction_records, key_taxonomy)
        path = out / "sweep.csv"
        write_sweep_csv(path, risk_coverage_sweep(cal, grid))
        return path

    run_stage("sweep", stage_sweep)

    # -- calibrate ----------------------------------------------------------
    def stage_calibrate() -> Path:
        cal = correctness_pairs(queries, prediction_records, key_taxonomy)
        spec = BoundSpec(
            variant=calib_cfg.get("variant", "ltt_hoeffding"),
            alpha=float(calib_cfg.get("alpha", 0.1)),
            delta=float(calib_cfg.get("delta", 0.1)),
            grid=grid,
        )
        cert = select_threshold(cal, spec)
        path = out / "certificate.json"
        write_json(path, cert.to_dict())
        return path

    run_stage("calibrate", stage_calibrate)

    # -- cost ---------------------------------------------------------------
    def stage_cost() -> Path:
        pricing_rel = cost_cfg.get("pricing")
        cfg = (
            PricingConfig.from_dict(load_toml(base / pricing_rel))
            if pricing_rel
            else PricingConfig.default()
        )
        req = int(cost_cfg.get("requests_per_day", cfg.requests_per_day))
        results = evaluate_strategies(cfg, req)
        path = out / "cost.json"
        write_json(
            path,
            {
                "requests_per_day": req,
                "days": cfg.days_per_month,
                "strategies": {name: res.to_dict() for name, res in results.items()},
            },
        )
        return path

    run_stage("cost", stage_cost)

    manifest = {"seed": seed, "config": config_path.name, "artifacts": artifacts}
    write_json(out / "run_manifest.json", manifest)
    return manifest
