"""Command-line interface.

Subcommands: fingerprint, classify, simulate, metrics, sweep, calibrate,
cost, gen-synthetic, pipeline. Exit codes: 0 on success, 2 on validation
errors, 3 when a requested certificate is infeasible.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .errors import CanonCacheError, InvalidParams

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_INFEASIBLE = 3


def _common_parent() -> argparse.ArgumentParser:
    parent = argparse.ArgumentParser(add_help=False)
    parent.add_argument("--seed", type=int, default=0, help="deterministic seed")
    parent.add_argument("--config", help="TOML config file")
    parent.add_argument("--out", help="output path")
    return parent


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="canoncache", description=__doc__)
    common = _common_parent()
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fingerprint", parents=[common], help="template-hash a dataset")
    p.add_argument("--input", required=True, help="dataset JSONL")
    p.add_argument("--lexicons", required=True, help="lexicon directory")
    p.set_defaults(func=cmd_fingerprint)

    p = sub.add_parser("classify", parents=[common], help="run the prototype classifier")
    p.add_argument("--input", required=True, help="dataset JSONL")
    p.add_argument("--embeddings", required=True, help="embedding JSONL")
    p.add_argument("--model", help="prototype model JSON to load")
    p.add_argument("--fit-shots", type=int, help="fit centroids on N examples per intent")
    p.add_argument("--model-out", help="where to save the fitted model")
    p.add_argument("--taxonomy", help="intent -> key taxonomy TOML (required with --fit-shots)")
    p.add_argument("--no-scores", action="store_true", help="omit per-class score maps")
    p.set_defaults(func=cmd_classify)

    p = sub.add_parser("simulate", parents=[common], help="route a dataset through the cascade")
    p.add_argument("--input", required=True, help="dataset JSONL")
    p.add_argument("--resolutions", help="optional per-query resolution JSONL")
    p.add_argument("--pool", help="override the retraining-pool path")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("metrics", parents=[common], help="cache-key quality report")
    p.add_argument("--truth", required=True, help="labeled dataset JSONL")
    p.add_argument("--pred", required=True, help="prediction-log JSONL")
    p.add_argument("--beta", type=float, default=1.0)
    p.set_defaults(func=cmd_metrics)

    p = sub.add_parser("sweep", parents=[common], help="risk-coverage curve CSV")
    p.add_argument("--truth", required=True)
    p.add_argument("--pred", required=True)
    p.add_argument("--taxonomy", help="intent -> key taxonomy TOML")
    p.add_argument("--grid-size", type=int, default=100)
    p.add_argument("--grid-max", type=float, default=0.99)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("calibrate", parents=[common], help="risk-controlled threshold certificate")
    p.add_argument("--truth", required=True)
    p.add_argument("--pred", required=True)
    p.add_argument("--taxonomy", help="intent -> key taxonomy TOML")
    p.add_argument("--alpha", type=float, default=0.10)
    p.add_argument("--delta", type=float, default=0.10)
    p.add_argument(
        "--variant",
        default="ltt_hoeffding",
        choices=["hoeffding_union", "eb_union", "ltt_hoeffding", "ltt_eb"],
    )
    p.add_argument("--grid-size", type=int, default=100)
    p.add_argument("--grid-max", type=float, default=0.99)
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("cost", parents=[common], help="API cost model")
    p.add_argument("--req-per-day", type=int)
    p.add_argument("--days", type=int)
    p.add_argument("--sensitivity", help="local-share grid lo:hi:step; emits CSV")
    p.set_defaults(func=cmd_cost)

    p = sub.add_parser("gen-synthetic", parents=[common], help="generate a synthetic corpus")
    p.add_argument("--classes", type=int, required=True)
    p.add_argument("--per-class", type=int, required=True)
    p.add_argument("--accuracy", type=float, required=True)
    p.add_argument("--confidence-model", default="calibrated", choices=["calibrated", "overconfident"])
    p.add_argument("--scale", type=float, default=4.0, help="overconfident sharpening power")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--taxonomy-out", help="also write the intent taxonomy TOML")
    p.set_defaults(func=cmd_gen_synthetic)

    p = sub.add_parser("pipeline", parents=[common], help="run all stages end to end")
    p.set_defaults(func=cmd_pipeline)

    return parser


def _require(value, flag: str):
    if not value:
        raise InvalidParams(f"missing required option {flag}")
    return value


# ---------------------------------------------------------------------------
# Command implementations
# ---------------------------------------------------------------------------

def cmd_fingerprint(args) -> int:
    from .dataio import read_dataset
    from .fingerprint import Lexicons
    from .pipeline import write_fingerprints

    queries = read_dataset(args.input)
    lexicons = Lexicons.load(args.lexicons)
    write_fingerprints(Path(_require(args.out, "--out")), queries, lexicons)
    return EXIT_OK


def cmd_classify(args) -> int:
    from .classifier import PrototypeModel, classify, fit_centroids
    from .dataio import read_dataset, read_embeddings, read_taxonomy, write_prediction_log
    from .model import PredictionRecord

    queries = read_dataset(args.input)
    table = read_embeddings(args.embeddings)
    if args.model and args.fit_shots:
        raise InvalidParams("--model and --fit-shots are mutually exclusive")
    if args.fit_shots:
        taxonomy = read_taxonomy(_require(args.taxonomy, "--taxonomy"))
        per_intent: dict[str, int] = {}
        examples = []
        for query in queries:
            intent = query.true_intent
            if intent is None or intent not in taxonomy:
                continue
            if per_intent.get(intent, 0) >= args.fit_shots:
                continue
            per_intent[intent] = per_intent.get(intent, 0) + 1
            examples.append((query.id, taxonomy[intent]["key"]))
        model = fit_centroids(examples, table)
        if args.model_out:
            model.save(args.model_out)
    else:
        model = PrototypeModel.load(_require(args.model, "--model"))
    records = []
    for query in queries:
        vec = table.get(query.id)
        if vec is None:
            continue
        record = classify(vec, model, query_id=query.id)
        if args.no_scores:
            record = PredictionRecord(
                query_id=record.query_id,
                predicted_key=record.predicted_key,
                confidence=record.confidence,
            )
        records.append(record)
    write_prediction_log(_require(args.out, "--out"), records)
    return EXIT_OK


def cmd_simulate(args) -> int:
    import json

    from .cascade import build_engine, simulate
    from .dataio import load_toml, read_dataset, write_json

    config_path = Path(_require(args.config, "--config"))
    config = load_toml(config_path)
    engine = build_engine(config, config_path.parent, pool_path=args.pool)
    queries = read_dataset(args.input)
    stats, resolutions = simulate(queries, engine)
    write_json(Path(_require(args.out, "--out")), stats.to_dict())
    if args.resolutions:
        with open(args.resolutions, "w", encoding="utf-8") as fh:
            for res in resolutions:
                fh.write(json.dumps(res.to_dict(), ensure_ascii=False, separators=(",", ":")) + "\n")
    return EXIT_OK


def _joined_truth_keys(truth_path: str, pred_path: str):
    from .dataio import read_dataset, read_prediction_log

    queries = read_dataset(truth_path)
    records = read_prediction_log(pred_path)
    by_id = {r.query_id: r for r in records}
    joined = [
        (q, by_id[q.id]) for q in queries if q.true_intent is not None and q.id in by_id
    ]
    if not joined:
        raise InvalidParams("no labeled queries matched the prediction log")
    return joined


def cmd_metrics(args) -> int:
    from .dataio import write_json
    from .metrics import report
    from .model import canonical_key_string

    joined = _joined_truth_keys(args.truth, args.pred)
    truth = [q.true_intent for q, _ in joined]
    keys = [canonical_key_string(r.predicted_key) for _, r in joined]
    quality = report(truth, keys, beta=args.beta)
    write_json(Path(_require(args.out, "--out")), quality.to_dict())
    return EXIT_OK


def _calibration_from_files(args):
    from .dataio import key_taxonomy, read_taxonomy
    from .model import key_matches_intent
    from .risk import CalibrationSet

    taxonomy = key_taxonomy(read_taxonomy(args.taxonomy)) if args.taxonomy else None
    joined = _joined_truth_keys(args.truth, args.pred)
    return CalibrationSet.from_records(
        (r.confidence, key_matches_intent(r.predicted_key, q.true_intent, taxonomy))
        for q, r in joined
    )


def cmd_sweep(args) -> int:
    from .pipeline import write_sweep_csv
    from .risk import default_grid, risk_coverage_sweep

    cal = _calibration_from_files(args)
    records = risk_coverage_sweep(cal, default_grid(args.grid_size, args.grid_max))
    write_sweep_csv(Path(_require(args.out, "--out")), records)
    return EXIT_OK


def cmd_calibrate(args) -> int:
    from .dataio import write_json
    from .risk import BoundSpec, default_grid, select_threshold

    cal = _calibration_from_files(args)
    spec = BoundSpec(
        variant=args.variant,
        alpha=args.alpha,
        delta=args.delta,
        grid=default_grid(args.grid_size, args.grid_max),
    )
    cert = select_threshold(cal, spec)
    write_json(Path(_require(args.out, "--out")), cert.to_dict())
    if not cert.feasible:
        print(
            f"infeasible: no threshold satisfies alpha={args.alpha} under {args.variant}",
            file=sys.stderr,
        )
        return EXIT_INFEASIBLE
    return EXIT_OK


def _parse_grid_spec(spec: str):
    try:
        lo, hi, step = (float(x) for x in spec.split(":"))
    except ValueError as exc:
        raise InvalidParams(f"bad --sensitivity spec {spec!r}, expected lo:hi:step") from exc
    if step <= 0 or hi < lo:
        raise InvalidParams(f"bad --sensitivity spec {spec!r}")
    values = []
    value = lo
    while value <= hi + 1e-12:
        values.append(round(value, 10))
        value += step
    return values


def cmd_cost(args) -> int:
    import csv

    from .cost import PricingConfig, evaluate_strategies, sensitivity
    from .dataio import load_toml, write_json

    cfg = PricingConfig.from_dict(load_toml(args.config)) if args.config else PricingConfig.default()
    out = Path(_require(args.out, "--out"))
    if args.sensitivity:
        shares = _parse_grid_spec(args.sensitivity)
        results = sensitivity(shares, cfg, args.req_per_day, args.days)
        with open(out, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["local_share", "monthly_cost_usd", "savings_pct"])
            for share, res in zip(shares, results):
                writer.writerow([repr(share), repr(res.monthly_cost_usd), repr(res.savings_pct)])
        return EXIT_OK
    results = evaluate_strategies(cfg, args.req_per_day, args.days)
    req = args.req_per_day if args.req_per_day is not None else cfg.requests_per_day
    write_json(
        out,
        {
            "requests_per_day": req,
            "days": args.days if args.days is not None else cfg.days_per_month,
            "strategies": {name: res.to_dict() for name, res in results.items()},
        },
    )
    return EXIT_OK


def cmd_gen_synthetic(args) -> int:
    from .synth import SyntheticSpec, write_corpus

    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    spec = SyntheticSpec(
        n_classes=args.classes,
        n_per_class=args.per_class,
        classifier_accuracy=args.accuracy,
        confidence_model=args.confidence_model,
        overconfident_scale=args.scale,
        seed=args.seed,
    )
    summary = write_corpus(
        spec,
        out_dir / "dataset.jsonl",
        out_dir / "embeddings.jsonl",
        out_dir / "predictions.jsonl",
        taxonomy_path=args.taxonomy_out,
    )
    print(
        f"wrote {summary['n_queries']} queries across {summary['n_classes']} classes "
        f"(empirical accuracy {summary['empirical_accuracy']:.3f})"
    )
    return EXIT_OK


def cmd_pipeline(args) -> int:
    from .pipeline import run_pipeline

    manifest = run_pipeline(
        _require(args.config, "--config"), _require(args.out, "--out"), seed=args.seed
    )
    print(f"pipeline complete: {len(manifest['artifacts'])} artifacts")
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CanonCacheError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
