"""Evaluation: dataset loading, Macro-F1, batch runs, ablations, sweeps, and
LLM-judged refinement quality.

Macro-F1 here is the unweighted mean of the two per-class F1 scores, with the
0/0 convention that an undefined precision, recall, or F1 is 0. Claims whose
pipeline run errored count as wrong predictions by default; in strict mode
they are excluded from the metric and surfaced as a count instead.
"""

from __future__ import annotations

import json
import os
import time
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

from .corpus import RejectedLine, _atomic_write
from .errors import ConfigError, MissingGoldError, ParseFailureError
from .index import InvertedIndex
from .llm import Backend, CompletionRequest, RetryPolicy, complete, parse_score
from .pipeline import (
    RETRY_SUFFIX,
    ClaimRecord,
    ClaimResult,
    Label,
    PipelineConfig,
    RefinedEvidence,
    run_pipeline,
)
from .templates import SYSTEM_PROMPT, load_template, render

DATASET_SCHEMAS = ("hover", "feverous_s")

_HOVER_LABELS = {"SUPPORTED": Label.SUPPORTS, "NOT_SUPPORTED": Label.REFUTES}
_FEVEROUS_LABELS = {"SUPPORTS": Label.SUPPORTS, "REFUTES": Label.REFUTES}


@dataclass
class DatasetLoad:
    records: list[ClaimRecord]
    rejected: list[RejectedLine] = field(default_factory=list)


def _parse_hover(rec: dict) -> ClaimRecord:
    label = rec["label"]
    if label not in _HOVER_LABELS:
        raise ValueError(f"unknown label {label!r}")
    hops = rec["num_hops"]
    if isinstance(hops, bool) or not isinstance(hops, int):
        raise ValueError(f"num_hops must be an integer, got {hops!r}")
    return ClaimRecord(
        claim_id=str(rec["uid"]), text=rec["claim"],
        gold_label=_HOVER_LABELS[label], hops=hops,
    )


def _parse_feverous(rec: dict) -> ClaimRecord:
    label = rec["label"]
    if label not in _FEVEROUS_LABELS:
        raise ValueError(f"unknown label {label!r}")
    return ClaimRecord(
        claim_id=str(rec["id"]), text=rec["claim"],
        gold_label=_FEVEROUS_LABELS[label],
    )


def load_dataset(path: str | Path, schema: str) -> DatasetLoad:
    """Load a claims JSONL file under a named schema.

    Lines that are malformed, carry an unknown label (there is no
    not-enough-info class here), or repeat a claim id are rejected with a
    line-numbered reason; loading always continues.
    """
    if schema not in DATASET_SCHEMAS:
        raise ConfigError(f"unknown dataset schema {schema!r}; expected one of {DATASET_SCHEMAS}")
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(path)
    parser = _parse_hover if schema == "hover" else _parse_feverous
    load = DatasetLoad(records=[])
    seen: set[str] = set()
    with path.open(encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except ValueError:
                load.rejected.append(RejectedLine(line_no, "invalid JSON"))
                continue
            if not isinstance(rec, dict):
                load.rejected.append(RejectedLine(line_no, "line is not a JSON object"))
                continue
            try:
                record = parser(rec)
                if not isinstance(rec["claim"], str) or not rec["claim"].strip():
                    raise ValueError("claim must be a non-empty string")
            except KeyError as exc:
                load.rejected.append(RejectedLine(line_no, f"missing field: {exc.args[0]}"))
                continue
            except ValueError as exc:
                load.rejected.append(RejectedLine(line_no, str(exc)))
                continue
            if record.claim_id in seen:
                load.rejected.append(
                    RejectedLine(line_no, f"duplicate claim id {record.claim_id!r}")
                )
                continue
            seen.add(record.claim_id)
            load.records.append(record)
    return load


# --- Macro-F1 -----------------------------------------------------------------


@dataclass(frozen=True)
class ClassMetrics:
    precision: float
    recall: float
    f1: float


@dataclass(frozen=True)
class ReportCounts:
    total: int
    correct: int
    incorrect: int
    errored: int
    calibrated: int = 0
    calibration_flips: int = 0

    def __post_init__(self):
        if self.total != self.correct + self.incorrect + self.errored:
            raise ValueError("total must equal correct + incorrect + errored")


@dataclass
class EvalReport:
    per_class: dict[str, ClassMetrics]
    macro_f1: float
    counts: ReportCounts
    config: dict | None = None
    per_hop: dict[int, "EvalReport"] | None = None

    def to_dict(self) -> dict:
        return {
            "schema_version": 1,
            "macro_f1": self.macro_f1,
            "per_class": {
                name: {"precision": m.precision, "recall": m.recall, "f1": m.f1}
                for name, m in self.per_class.items()
            },
            "counts": {
                "total": self.counts.total,
                "correct": self.counts.correct,
                "incorrect": self.counts.incorrect,
                "errored": self.counts.errored,
                "calibrated": self.counts.calibrated,
                "calibration_flips": self.counts.calibration_flips,
            },
            "config": self.config,
            "per_hop": None if self.per_hop is None else {
                str(hop): sub.to_dict() for hop, sub in sorted(self.per_hop.items())
            },
        }


def _as_label(value: Label | str) -> Label:
    return value if isinstance(value, Label) else Label.from_text(value)


def _confusion(predictions: dict, golds: dict) -> tuple[dict[str, ClassMetrics], float, int]:
    """Per-class metrics, macro-F1, and the number of exact matches."""
    tp: Counter = Counter()
    fp: Counter = Counter()
    fn: Counter = Counter()
    correct = 0
    for claim_id, pred in predictions.items():
        if claim_id not in golds:
            raise MissingGoldError(f"no gold label for claim {claim_id!r}")
        pred = _as_label(pred)
        gold = _as_label(golds[claim_id])
        if pred == gold:
            tp[pred.value] += 1
            correct += 1
        else:
            fp[pred.value] += 1
            fn[gold.value] += 1
    per_class: dict[str, ClassMetrics] = {}
    f1_sum = 0.0
    for label in Label:
        name = label.value
        p_den = tp[name] + fp[name]
        r_den = tp[name] + fn[name]
        f_den = 2 * tp[name] + fp[name] + fn[name]
        metrics = ClassMetrics(
            precision=tp[name] / p_den if p_den else 0.0,
            recall=tp[name] / r_den if r_den else 0.0,
            f1=2 * tp[name] / f_den if f_den else 0.0,
        )
        per_class[name] = metrics
        f1_sum += metrics.f1
    return per_class, f1_sum / len(Label), correct


def macro_f1(predictions: dict, golds: dict) -> EvalReport:
    """Score label predictions against gold labels.

    ``predictions`` and ``golds`` map claim id to a Label (or its string
    value); every prediction must have a gold or MissingGoldError is raised.
    """
    per_class, macro, correct = _confusion(predictions, golds)
    counts = ReportCounts(
        total=len(predictions), correct=correct,
        incorrect=len(predictions) - correct, errored=0,
    )
    return EvalReport(per_class=per_class, macro_f1=macro, counts=counts)


# --- batch evaluation -----------------------------------------------------------


@dataclass
class EvalRun:
    results: list[ClaimResult]
    report: EvalReport


def _opposite(label: Label) -> Label:
    return Label.REFUTES if label is Label.SUPPORTS else Label.SUPPORTS


def default_workers() -> int:
    return min(os.cpu_count() or 1, 8)


def _score_results(
    records: list[ClaimRecord],
    results: list[ClaimResult],
    strict: bool,
) -> tuple[dict[str, Label], dict[str, Label], ReportCounts]:
    golds = {r.claim_id: r.gold_label for r in records}
    predictions: dict[str, Label] = {}
    correct = incorrect = errored = calibrated = flips = 0
    for result in results:
        gold = golds[result.claim.claim_id]
        if result.ok:
            pred = result.final.label
            predictions[result.claim.claim_id] = pred
            if pred == gold:
                correct += 1
            else:
                incorrect += 1
            if result.final.calibrated:
                calibrated += 1
                if result.final.label != result.verdict.label:
                    flips += 1
        else:
            errored += 1
            if not strict:
                # An errored claim counts against the system: score it as the
                # wrong label unless strict mode excludes it.
                predictions[result.claim.claim_id] = _opposite(gold)
    counts = ReportCounts(
        total=len(records), correct=correct, incorrect=incorrect, errored=errored,
        calibrated=calibrated, calibration_flips=flips,
    )
    return predictions, golds, counts


def _report_for(
    records: list[ClaimRecord],
    results: list[ClaimResult],
    strict: bool,
) -> EvalReport:
    predictions, golds, counts = _score_results(records, results, strict)
    per_class, macro, _ = _confusion(predictions, golds)
    return EvalReport(per_class=per_class, macro_f1=macro, counts=counts)


def evaluate(
    records: list[ClaimRecord],
    index: InvertedIndex,
    config: PipelineConfig,
    backend: Backend,
    workers: int | None = None,
    strict: bool = False,
    remote_extractor=None,
    sleep=time.sleep,
    config_snapshot: dict | None = None,
) -> EvalRun:
    """Run the pipeline over every record and score the final labels.

    Claims run concurrently up to ``workers`` (default: CPU count capped at
    8); results are kept in input order regardless. When any record carries a
    hop count, per-hop sub-reports are attached to the report.
    """
    ids = [r.claim_id for r in records]
    if len(set(ids)) != len(ids):
        raise ConfigError("duplicate claim ids in evaluation input")
    for record in records:
        if record.gold_label is None:
            raise MissingGoldError(f"record {record.claim_id!r} has no gold label")
    workers = default_workers() if workers is None else workers
    if workers < 1:
        raise ConfigError(f"workers must be >= 1, got {workers}")

    def _run_one(record: ClaimRecord) -> ClaimResult:
        return run_pipeline(
            record, index, config, backend,
            remote_extractor=remote_extractor, sleep=sleep,
        )

    if workers == 1 or len(records) <= 1:
        results = [_run_one(r) for r in records]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_one, records))

    report = _report_for(records, results, strict)
    hops = sorted({r.hops for r in records if r.hops is not None})
    if hops:
        by_hop: dict[int, EvalReport] = {}
        for hop in hops:
            sub_ids = {r.claim_id for r in records if r.hops == hop}
            sub_records = [r for r in records if r.claim_id in sub_ids]
            sub_results = [res for res in results if res.claim.claim_id in sub_ids]
            by_hop[hop] = _report_for(sub_records, sub_results, strict)
        report.per_hop = by_hop
    snapshot = {"pipeline": config.to_dict(), "strict": strict}
    if config_snapshot:
        snapshot.update(config_snapshot)
    report.config = snapshot
    return EvalRun(results=results, report=report)


ABLATION_ROWS = (
    ("full", {}),
    ("no_entity_retrieval", {"disable_entity_identifier": True}),
    ("no_refinement", {"disable_refinement": True}),
    ("no_calibration", {"disable_calibrator": True}),
)


def run_ablations(
    records: list[ClaimRecord],
    index: InvertedIndex,
    config: PipelineConfig,
    backend: Backend,
    workers: int | None = None,
    strict: bool = False,
    remote_extractor=None,
    sleep=time.sleep,
    config_snapshot: dict | None = None,
) -> list[tuple[str, EvalRun]]:
    """Evaluate the full pipeline plus each single-stage ablation.

    The backend's script state is reset before each row when it supports
    reset(), so every row sees the same scripted world.
    """
    rows: list[tuple[str, EvalRun]] = []
    for name, overrides in ABLATION_ROWS:
        if hasattr(backend, "reset"):
            backend.reset()
        row_config = replace(config, **overrides) if overrides else config
        snapshot = dict(config_snapshot or {})
        snapshot["ablation"] = name
        rows.append((name, evaluate(
            records, index, row_config, backend,
            workers=workers, strict=strict, remote_extractor=remote_extractor,
            sleep=sleep, config_snapshot=snapshot,
        )))
    return rows


SWEEP_PARAMS = {"n": "max_entities", "k": "top_k", "theta": "theta"}


@dataclass
class SweepPoint:
    param: str
    value: float | int
    run: EvalRun


def sweep(
    records: list[ClaimRecord],
    index: InvertedIndex,
    config: PipelineConfig,
    backend: Backend,
    param: str,
    values: list,
    workers: int | None = None,
    strict: bool = False,
    remote_extractor=None,
    sleep=time.sleep,
    config_snapshot: dict | None = None,
) -> list[SweepPoint]:
    """Evaluate once per value of one swept parameter (n, k, or theta).

    Every value is validated by constructing its config up front, so an
    out-of-range value fails the sweep before any evaluation starts.
    """
    if param not in SWEEP_PARAMS:
        raise ConfigError(f"unknown sweep param {param!r}; expected one of {sorted(SWEEP_PARAMS)}")
    field_name = SWEEP_PARAMS[param]
    configs: list[PipelineConfig] = []
    for value in values:
        if field_name != "theta" and (isinstance(value, bool) or not isinstance(value, int)):
            raise ConfigError(f"{param} sweep values must be integers, got {value!r}")
        configs.append(replace(config, **{field_name: value}))
    points: list[SweepPoint] = []
    for value, point_config in zip(values, configs):
        if hasattr(backend, "reset"):
            backend.reset()
        snapshot = dict(config_snapshot or {})
        snapshot["sweep"] = {"param": param, "value": value}
        run = evaluate(
            records, index, point_config, backend,
            workers=workers, strict=strict, remote_extractor=remote_extractor,
            sleep=sleep, config_snapshot=snapshot,
        )
        points.append(SweepPoint(param=param, value=value, run=run))
    return points


def write_sweep_csv(points: list[SweepPoint], path: str | Path) -> None:
    """Write sweep results as a plot-ready CSV."""
    lines = ["param,value,macro_f1,calibrated_count"]
    for point in points:
        lines.append(
            f"{point.param},{point.value},{point.run.report.macro_f1},"
            f"{point.run.report.counts.calibrated}"
        )
    _atomic_write(Path(path), "\n".join(lines) + "\n")


# --- refinement quality judging --------------------------------------------------


JUDGE_DIMENSIONS = (
    ("factuality", "the candidate states only facts consistent with the reference evidence"),
    ("fluency", "the candidate reads as natural, well-formed prose"),
    ("conciseness", "the candidate avoids redundant or irrelevant content"),
    ("completeness", "the candidate covers every fact needed to judge the claim"),
)


@dataclass(frozen=True)
class QualityScores:
    """Per-dimension 1-5 judge scores; a dimension whose response stayed
    unparseable is absent (None) and excluded from the average."""

    factuality: float | None = None
    fluency: float | None = None
    conciseness: float | None = None
    completeness: float | None = None

    @property
    def average(self) -> float | None:
        present = [s for s in (self.factuality, self.fluency, self.conciseness, self.completeness)
                   if s is not None]
        return sum(present) / len(present) if present else None

    def to_dict(self) -> dict:
        return {
            "factuality": self.factuality,
            "fluency": self.fluency,
            "conciseness": self.conciseness,
            "completeness": self.completeness,
            "average": self.average,
        }


@dataclass(frozen=True)
class QualityComparison:
    """Judge scores for the unrefined evidence and its refined counterpart."""

    original: QualityScores
    refined: QualityScores

    def to_dict(self) -> dict:
        return {"original": self.original.to_dict(), "refined": self.refined.to_dict()}


def judge_text_quality(
    claim_text: str,
    candidate: str,
    reference: str,
    judge_backend: Backend,
    prompt_dir: str | None = None,
    retry: RetryPolicy | None = None,
    temperature: float = 0.0,
    max_tokens: int = 256,
    calls: Counter | None = None,
    sleep=time.sleep,
) -> QualityScores:
    """Judge one candidate evidence text against the reference, one prompt
    per dimension; an unparseable dimension is recorded absent."""
    template = load_template("judge", prompt_dir)
    scores: dict[str, float | None] = {}
    for dimension, definition in JUDGE_DIMENSIONS:
        prompt = render(
            template,
            dimension=dimension, definition=definition,
            claim=claim_text, reference=reference, candidate=candidate,
        )
        request = CompletionRequest(
            system_prompt=SYSTEM_PROMPT, user_prompt=prompt, request_tag="judge",
            temperature=temperature, max_tokens=max_tokens,
        )
        if calls is not None:
            calls["judge"] += 1
        result = complete(judge_backend, request, retry, sleep=sleep)
        try:
            scores[dimension] = float(parse_score(result.text))
        except ParseFailureError:
            retry_request = replace(request, user_prompt=prompt + RETRY_SUFFIX)
            if calls is not None:
                calls["judge"] += 1
            retry_result = complete(judge_backend, retry_request, retry, sleep=sleep)
            try:
                scores[dimension] = float(parse_score(retry_result.text))
            except ParseFailureError:
                scores[dimension] = None
    return QualityScores(**scores)


def judge_quality(
    claim_text: str,
    original_evidence: str,
    refined: RefinedEvidence,
    gold_evidence: str,
    judge_backend: Backend,
    prompt_dir: str | None = None,
    retry: RetryPolicy | None = None,
    temperature: float = 0.0,
    max_tokens: int = 256,
    calls: Counter | None = None,
    sleep=time.sleep,
) -> QualityComparison:
    """Judge the original retrieved evidence and the refined paragraph against
    the gold reference, dimension by dimension."""
    kwargs = dict(
        prompt_dir=prompt_dir, retry=retry, temperature=temperature,
        max_tokens=max_tokens, calls=calls, sleep=sleep,
    )
    return QualityComparison(
        original=judge_text_quality(
            claim_text, original_evidence, gold_evidence, judge_backend, **kwargs
        ),
        refined=judge_text_quality(
            claim_text, refined.text, gold_evidence, judge_backend, **kwargs
        ),
    )


# --- artifact writing -------------------------------------------------------------


def write_results_jsonl(results: list[ClaimResult], path: str | Path) -> None:
    """Write claim results in input order, one sorted-key JSON object per line."""
    lines = [
        json.dumps(result.to_dict(), sort_keys=True, ensure_ascii=False)
        for result in results
    ]
    _atomic_write(Path(path), "\n".join(lines) + ("\n" if lines else ""))


def write_report_json(report: EvalReport, path: str | Path) -> None:
    _atomic_write(
        Path(path),
        json.dumps(report.to_dict(), sort_keys=True, ensure_ascii=False, indent=2) + "\n",
    )
