"""Command-line interface.

Subcommands: ``index`` builds a persisted BM25 index from a JSONL corpus;
``verify`` runs one claim through the pipeline; ``evaluate`` scores a claims
file and writes results + report; ``ablate`` re-runs the evaluation with each
stage disabled in turn; ``sweep`` evaluates across values of one parameter;
``judge`` scores refined evidence quality against gold evidence.

Exit codes: 0 when every requested artifact was fully written, 2 for config
or usage errors (reported before any work starts), 1 for runtime failures.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .config import PRESETS, build_backend, resolve_settings
from .corpus import _atomic_write, ingest_corpus
from .errors import ClaimCheckError, ConfigError
from .evaluation import (
    DATASET_SCHEMAS,
    evaluate,
    judge_quality,
    load_dataset,
    run_ablations,
    sweep,
    write_report_json,
    write_results_jsonl,
    write_sweep_csv,
)
from .index import IndexParams, build_index, load_index, save_index
from .pipeline import (
    FULL_CLAIM,
    ClaimRecord,
    RefinedEvidence,
    format_evidence_block,
    run_pipeline,
)

_DISABLE_FLAGS = {
    "entity": "disable_entity_identifier",
    "refine": "disable_refinement",
    "calibrate": "disable_calibrator",
}


def _add_config_args(parser: argparse.ArgumentParser, with_schema: bool) -> None:
    parser.add_argument("--config", help="JSON config file")
    if with_schema:
        parser.add_argument(
            "--schema", required=True, choices=DATASET_SCHEMAS,
            help="claims file schema; also applies that dataset's preset",
        )
    else:
        parser.add_argument(
            "--preset", choices=sorted(PRESETS),
            help="apply a dataset preset (k, theta, n)",
        )
    parser.add_argument("--k", type=int, dest="top_k", help="retrieval depth per query")
    parser.add_argument("--theta", type=float, help="calibration confidence threshold")
    parser.add_argument("--n", type=int, dest="max_entities", help="max entities per claim")
    parser.add_argument(
        "--disable", action="append", choices=sorted(_DISABLE_FLAGS), default=[],
        help="disable a pipeline stage (repeatable)",
    )


def _settings_from_args(args: argparse.Namespace):
    overrides = {
        "top_k": getattr(args, "top_k", None),
        "theta": getattr(args, "theta", None),
        "max_entities": getattr(args, "max_entities", None),
    }
    for name in getattr(args, "disable", []):
        overrides[_DISABLE_FLAGS[name]] = True
    preset = getattr(args, "schema", None) or getattr(args, "preset", None)
    return resolve_settings(
        config_path=args.config, preset=preset, pipeline_overrides=overrides
    )


def cmd_index(args: argparse.Namespace) -> int:
    corpus = ingest_corpus(args.corpus)
    report = corpus.report
    print(f"ingested {report.num_ingested} documents from {args.corpus}")
    if report.rejected:
        print(f"rejected {len(report.rejected)} line(s):")
        for item in report.rejected[:10]:
            print(f"  line {item.line_no}: {item.reason}")
        if len(report.rejected) > 10:
            print(f"  ... and {len(report.rejected) - 10} more")
    stopwords: tuple[str, ...] = ()
    if args.stopwords:
        stopwords = tuple(
            w.strip() for w in Path(args.stopwords).read_text(encoding="utf-8").splitlines()
            if w.strip()
        )
    params = IndexParams(k1=args.k1, b=args.b, stopwords=stopwords)
    index = build_index(corpus, params)
    save_index(index, args.out)
    stats = index.stats
    print(
        f"indexed {stats.num_docs} documents, {stats.total_tokens} tokens "
        f"(avg {stats.avg_doc_len:.2f}/doc), vocabulary {len(index.postings)} terms"
    )
    print(f"index written to {args.out}")
    return 0


def cmd_verify(args: argparse.Namespace) -> int:
    settings = _settings_from_args(args)
    backend = build_backend(settings)
    index = load_index(args.index)
    claim = ClaimRecord(claim_id="cli-claim", text=args.claim)
    result = run_pipeline(claim, index, settings.pipeline, backend)
    if args.explain:
        _print_explanation(result, index)
    if result.error is not None:
        print(
            f"error in stage {result.error['stage']}: {result.error['reason']}",
            file=sys.stderr,
        )
        return 1
    final = result.final
    verdict = result.verdict
    calibrated = "yes" if final.calibrated else "no"
    print(f"{final.label.value} (confidence {verdict.confidence:.2f}, calibrated: {calibrated})")
    for warning in result.warnings:
        print(f"warning: {warning}", file=sys.stderr)
    return 0


def _print_explanation(result, index) -> None:
    print(f"claim: {result.claim.text}")
    if result.entities:
        print("entities:")
        for entity in result.entities:
            print(f"  - {entity.surface!r} [{entity.start}:{entity.end}] ({entity.source})")
    else:
        print("entities: none")
    if result.bundle is not None:
        for key, hits in result.bundle.per_entity:
            query = "<full claim>" if key == FULL_CLAIM else repr(key.surface)
            print(f"retrieved for {query}:")
            for hit in hits:
                title = index.corpus.get(hit.doc_id).title or "(untitled)"
                print(f"  {hit.rank}. [{hit.doc_id}] {title} (score {hit.score:.4f})")
    if result.refined is not None:
        print(f"refined evidence (from {list(result.refined.source_doc_ids)}):")
        print(f"  {result.refined.text}")
    if result.verdict is not None:
        print(f"initial verdict: {result.verdict.label.value} "
              f"(confidence {result.verdict.confidence:.2f})")
        print(f"  reasoning: {result.verdict.reasoning}")
    if result.final is not None and result.final.calibrated:
        print(f"calibrated verdict: {result.final.label.value}")
        print(f"  rationale: {result.final.rationale}")


def _load_eval_inputs(args: argparse.Namespace):
    settings = _settings_from_args(args)
    backend = build_backend(settings)
    index = load_index(args.index)
    load = load_dataset(args.dataset, args.schema)
    if load.rejected:
        print(f"rejected {len(load.rejected)} dataset line(s):", file=sys.stderr)
        for item in load.rejected[:10]:
            print(f"  line {item.line_no}: {item.reason}", file=sys.stderr)
        if len(load.rejected) > 10:
            print(f"  ... and {len(load.rejected) - 10} more", file=sys.stderr)
    if not load.records:
        raise ConfigError(f"no usable claims in {args.dataset}")
    return settings, backend, index, load.records


def _print_report(report) -> None:
    counts = report.counts
    print(f"macro-F1: {report.macro_f1:.4f}")
    print(
        f"claims: {counts.total} total, {counts.correct} correct, "
        f"{counts.incorrect} incorrect, {counts.errored} errored; "
        f"{counts.calibrated} calibrated ({counts.calibration_flips} flipped)"
    )
    for name, metrics in report.per_class.items():
        print(
            f"  {name}: P {metrics.precision:.4f}  R {metrics.recall:.4f}  "
            f"F1 {metrics.f1:.4f}"
        )
    if report.per_hop:
        for hop, sub in sorted(report.per_hop.items()):
            print(f"  {hop}-hop: macro-F1 {sub.macro_f1:.4f} ({sub.counts.total} claims)")


def cmd_evaluate(args: argparse.Namespace) -> int:
    settings, backend, index, records = _load_eval_inputs(args)
    run = evaluate(
        records, index, settings.pipeline, backend,
        workers=args.workers, strict=args.strict,
        config_snapshot=settings.snapshot_extras() | {"schema": args.schema},
    )
    write_results_jsonl(run.results, args.out)
    write_report_json(run.report, args.report)
    _print_report(run.report)
    print(f"results written to {args.out}")
    print(f"report written to {args.report}")
    return 0


def cmd_ablate(args: argparse.Namespace) -> int:
    settings, backend, index, records = _load_eval_inputs(args)
    rows = run_ablations(
        records, index, settings.pipeline, backend,
        workers=args.workers, strict=args.strict,
        config_snapshot=settings.snapshot_extras() | {"schema": args.schema},
    )
    payload = {name: run.report.to_dict() for name, run in rows}
    _atomic_write(
        Path(args.report),
        json.dumps(payload, sort_keys=True, ensure_ascii=False, indent=2) + "\n",
    )
    if args.out_dir:
        out_dir = Path(args.out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        for name, run in rows:
            write_results_jsonl(run.results, out_dir / f"results_{name}.jsonl")
    width = max(len(name) for name, _ in rows)
    for name, run in rows:
        counts = run.report.counts
        print(
            f"{name:<{width}}  macro-F1 {run.report.macro_f1:.4f}  "
            f"calibrated {counts.calibrated}  errored {counts.errored}"
        )
    print(f"ablation report written to {args.report}")
    return 0


def cmd_sweep(args: argparse.Namespace) -> int:
    raw_values = [v.strip() for v in args.values.split(",") if v.strip()]
    if not raw_values:
        raise ConfigError("--values is empty")
    try:
        values = [float(v) if args.param == "theta" else int(v) for v in raw_values]
    except ValueError as exc:
        raise ConfigError(f"bad sweep value: {exc}") from exc
    settings, backend, index, records = _load_eval_inputs(args)
    points = sweep(
        records, index, settings.pipeline, backend,
        param=args.param, values=values,
        workers=args.workers, strict=args.strict,
        config_snapshot=settings.snapshot_extras() | {"schema": args.schema},
    )
    write_sweep_csv(points, args.out)
    for point in points:
        print(
            f"{point.param}={point.value}: macro-F1 {point.run.report.macro_f1:.4f}, "
            f"calibrated {point.run.report.counts.calibrated}"
        )
    print(f"sweep written to {args.out}")
    return 0


def cmd_judge(args: argparse.Namespace) -> int:
    settings = _settings_from_args(args)
    backend = build_backend(settings)
    index = load_index(args.index)
    gold: dict[str, str] = {}
    with open(args.gold, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            rec = json.loads(line)
            gold[str(rec["claim_id"])] = rec["evidence"]
    rows = []
    skipped = 0
    budget = settings.pipeline.doc_char_budget
    with open(args.results, encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            rec = json.loads(line)
            claim_id = rec["claim_id"]
            if claim_id not in gold or rec.get("refined") is None:
                skipped += 1
                continue
            docs = [
                index.corpus.get(hit["doc_id"])
                for hit in (rec.get("retrieval") or {}).get("merged", [])
            ]
            original = format_evidence_block(docs, budget, numbered=False)
            try:
                comparison = judge_quality(
                    rec["claim"], original,
                    _refined_from_dict(rec["refined"]),
                    gold[claim_id], backend,
                    prompt_dir=settings.pipeline.prompt_dir,
                    retry=settings.pipeline.retry,
                    temperature=settings.pipeline.temperature_for("judge"),
                )
            except ClaimCheckError as exc:
                rows.append({"claim_id": claim_id, "error": f"{type(exc).__name__}: {exc}"})
                continue
            rows.append({"claim_id": claim_id} | comparison.to_dict())
    lines = [json.dumps(row, sort_keys=True, ensure_ascii=False) for row in rows]
    _atomic_write(Path(args.out), "\n".join(lines) + ("\n" if lines else ""))
    judged = [row for row in rows if "error" not in row]
    for side in ("original", "refined"):
        averages = [row[side]["average"] for row in judged if row[side]["average"] is not None]
        mean = sum(averages) / len(averages) if averages else float("nan")
        print(f"{side}: mean quality {mean:.2f} over {len(averages)} claim(s)")
    if skipped:
        print(f"skipped {skipped} result(s) without gold evidence or refined text")
    print(f"quality scores written to {args.out}")
    return 0


def _refined_from_dict(raw: dict) -> RefinedEvidence:
    return RefinedEvidence(
        text=raw["text"],
        source_doc_ids=tuple(raw.get("source_doc_ids", ())),
        empty_flag=bool(raw.get("empty", False)),
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="claimcheck",
        description="Claim verification: BM25 retrieval, LLM refinement, "
                    "verification, and confidence-gated calibration.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("index", help="build a persisted BM25 index from a JSONL corpus")
    p.add_argument("--corpus", required=True, help="corpus JSONL (id, title, text per line)")
    p.add_argument("--out", required=True, help="directory to write the index into")
    p.add_argument("--k1", type=float, default=1.2)
    p.add_argument("--b", type=float, default=0.75)
    p.add_argument("--stopwords", help="optional stopword file, one token per line")
    p.set_defaults(func=cmd_index)

    p = sub.add_parser("verify", help="verify a single claim")
    p.add_argument("--claim", required=True)
    p.add_argument("--index", required=True)
    _add_config_args(p, with_schema=False)
    p.add_argument("--explain", action="store_true",
                   help="print entities, retrieved docs, refined evidence, and reasoning")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("evaluate", help="run and score a claims file")
    p.add_argument("--dataset", required=True)
    p.add_argument("--index", required=True)
    p.add_argument("--out", required=True, help="results JSONL path")
    p.add_argument("--report", required=True, help="report JSON path")
    p.add_argument("--workers", type=int, default=None)
    p.add_argument("--strict", action="store_true",
                   help="exclude errored claims from the metric instead of counting them wrong")
    _add_config_args(p, with_schema=True)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("ablate", help="evaluate the full pipeline and each stage ablation")
    p.add_argument("--dataset", required=True)
    p.add_argument("--index", required=True)
    p.add_argument("--report", required=True, help="ablation report JSON path")
    p.add_argument("--out-dir", help="optional directory for per-row results JSONL")
    p.add_argument("--workers", type=int, default=None)
    p.add_argument("--strict", action="store_true")
    _add_config_args(p, with_schema=True)
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("sweep", help="evaluate across values of one parameter")
    p.add_argument("--param", required=True, choices=["n", "k", "theta"])
    p.add_argument("--values", required=True, help="comma-separated values")
    p.add_argument("--dataset", required=True)
    p.add_argument("--index", required=True)
    p.add_argument("--out", required=True, help="CSV output path")
    p.add_argument("--workers", type=int, default=None)
    p.add_argument("--strict", action="store_true")
    _add_config_args(p, with_schema=True)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("judge", help="judge refined evidence quality against gold evidence")
    p.add_argument("--results", required=True, help="results JSONL from evaluate")
    p.add_argument("--gold", required=True, help="JSONL with claim_id and evidence fields")
    p.add_argument("--index", required=True)
    p.add_argument("--out", required=True, help="quality scores JSONL path")
    _add_config_args(p, with_schema=False)
    p.set_defaults(func=cmd_judge)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except FileNotFoundError as exc:
        print(f"error: file not found: {exc}", file=sys.stderr)
        return 2
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ClaimCheckError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
