"""Acceptance criteria.

One test per contract-level guarantee; each name states its criterion. The
terminal summary prints a PASS/FAIL line per test here (see conftest's
pytest_terminal_summary hook).
"""

import json
import random
import time
from fractions import Fraction
from pathlib import Path

import pytest

from claimcheck.cli import main as cli_main
from claimcheck.corpus import ingest_corpus
from claimcheck.entities import extract_entities
from claimcheck.evaluation import (
    ReportCounts,
    evaluate,
    load_dataset,
    macro_f1,
    run_ablations,
    sweep,
    write_report_json,
    write_results_jsonl,
    write_sweep_csv,
)
from claimcheck.index import IndexParams, build_index, load_index, save_index, search
from claimcheck.llm import MockBackend
from claimcheck.pipeline import FULL_CLAIM, Label, PipelineConfig, format_evidence_block

from conftest import build_world, make_corpus, world_claim_text, write_jsonl
from oracles import oracle_macro_f1, oracle_ranking

S, R = Label.SUPPORTS, Label.REFUTES


def _load_world(world):
    corpus = ingest_corpus(world["corpus_path"])
    index = build_index(corpus, IndexParams())
    backend = MockBackend.from_script(world["script_path"])
    records = load_dataset(world["dataset_path"], "hover").records
    return index, backend, records


# -- 1 -----------------------------------------------------------------------


def test_bm25_ranking_matches_independent_reference_formula():
    """Five random corpora (up to 200 docs), twenty queries each: search()
    must reproduce the reference formula's scores (1e-9) and ranking."""
    started = time.perf_counter()
    rng = random.Random(20260819)
    vocab = [f"term{i}" for i in range(60)]
    for _ in range(5):
        n_docs = rng.randint(30, 200)
        docs = []
        for d in range(n_docs):
            title = " ".join(rng.choices(vocab, k=rng.randint(1, 3))) if rng.random() < 0.8 else ""
            text = " ".join(rng.choices(vocab, k=rng.randint(3, 40)))
            docs.append((f"doc{d:04d}", title, text))
        index = build_index(make_corpus(docs), IndexParams())
        for _ in range(20):
            query = " ".join(rng.choices(vocab + ["unseen1", "unseen2"], k=rng.randint(1, 5)))
            expected = oracle_ranking(docs, query, k=10)
            hits = search(index, query, k=10)
            assert [h.doc_id for h in hits] == [doc_id for doc_id, _ in expected]
            for hit, (_, score) in zip(hits, expected):
                assert hit.score == pytest.approx(score, abs=1e-9)
            assert [h.rank for h in hits] == list(range(1, len(hits) + 1))
    assert time.perf_counter() - started < 5.0


# -- 2 -----------------------------------------------------------------------


def test_macro_f1_equals_exact_rational_arithmetic():
    """Fifty random prediction sets (1-500 claims): the reported macro-F1 must
    equal the exact-fraction reference; the worked 5-claim example is 7/12."""
    rng = random.Random(987654)
    for _ in range(50):
        size = rng.randint(1, 500)
        pairs = [(rng.choice((S, R)), rng.choice((S, R))) for _ in range(size)]
        golds = {f"c{i}": g for i, (g, _) in enumerate(pairs)}
        preds = {f"c{i}": p for i, (_, p) in enumerate(pairs)}
        report = macro_f1(preds, golds)
        assert report.macro_f1 == oracle_macro_f1([(g.value, p.value) for g, p in pairs])
    worked = macro_f1(
        {"c0": S, "c1": S, "c2": R, "c3": R, "c4": S},
        {"c0": S, "c1": S, "c2": S, "c3": R, "c4": R},
    )
    assert abs(worked.macro_f1 - float(Fraction(7, 12))) <= 1e-12


# -- 3 -----------------------------------------------------------------------

GATE_CONFIDENCES = [0.0, 0.1, 0.3, 0.5, 0.85, 0.85, 0.9, 0.9, 0.95, 1.0]


def _gate_world(tmp_path):
    spec = [
        {"gold": "supports" if i % 2 == 0 else "refutes", "confidence": c}
        for i, c in enumerate(GATE_CONFIDENCES)
    ]
    return build_world(tmp_path, spec)


def test_calibration_gate_opens_strictly_below_threshold(tmp_path):
    """Exact calibrated counts for a fixed confidence ladder, including the
    boundary cases where confidence == theta (which must NOT calibrate)."""
    world = _gate_world(tmp_path)
    index, backend, records = _load_world(world)
    expected_counts = {0.0: 0, 0.5: 3, 0.85: 4, 0.9: 6, 1.0: 9}
    for theta, expected in expected_counts.items():
        backend.reset()
        run = evaluate(records, index, PipelineConfig(theta=theta), backend, workers=1)
        assert run.report.counts.calibrated == expected, f"theta={theta}"
        for result, confidence in zip(run.results, GATE_CONFIDENCES):
            assert result.final.calibrated == (confidence < theta), (
                f"confidence={confidence}, theta={theta}"
            )


# -- 4 -----------------------------------------------------------------------


def test_calibration_volume_grows_monotonically_with_threshold(tmp_path):
    """Sweeping theta upward: each threshold's calibrated-claim set contains
    the previous one, and the CSV's calibrated_count column never decreases."""
    world = _gate_world(tmp_path)
    index, backend, records = _load_world(world)
    thetas = [0.0, 0.25, 0.5, 0.75, 0.85, 0.9, 0.95, 1.0]
    points = sweep(records, index, PipelineConfig(), backend,
                   param="theta", values=thetas, workers=1)
    calibrated_sets = [
        {r.claim.claim_id for r in point.run.results if r.final.calibrated}
        for point in points
    ]
    for smaller, larger in zip(calibrated_sets, calibrated_sets[1:]):
        assert smaller <= larger
    csv_path = tmp_path / "theta_sweep.csv"
    write_sweep_csv(points, csv_path)
    lines = csv_path.read_text(encoding="utf-8").splitlines()
    assert lines[0] == "param,value,macro_f1,calibrated_count"
    counts = [int(line.split(",")[3]) for line in lines[1:]]
    assert counts == sorted(counts)
    assert counts[0] == 0 and counts[-1] == 9


# -- 5 -----------------------------------------------------------------------


def test_each_ablation_switch_disables_exactly_its_stage(tmp_path):
    """no_entity_retrieval queries with the whole claim everywhere;
    no_refinement makes zero refine calls and concatenates deterministically;
    no_calibration makes zero calibrate calls and keeps the initial verdict."""
    spec = [
        {"gold": "supports", "confidence": 0.95},
        {"gold": "supports", "confidence": 0.5},
        {"gold": "refutes", "verdict": "refutes", "confidence": 0.95},
        {"gold": "refutes", "verdict": "refutes", "confidence": 0.6},
    ]
    world = build_world(tmp_path, spec)
    index, backend, records = _load_world(world)
    rows = dict(run_ablations(records, index, PipelineConfig(theta=0.9), backend, workers=1))
    assert set(rows) == {"full", "no_entity_retrieval", "no_refinement", "no_calibration"}
    for name, run in rows.items():
        assert all(r.ok for r in run.results), name

    full = rows["full"]
    assert all(not r.bundle.used_full_claim for r in full.results)
    assert all(r.stage_calls["refine"] == 1 for r in full.results)
    assert full.report.counts.calibrated == 2

    no_entity = rows["no_entity_retrieval"]
    for result in no_entity.results:
        assert result.entities == []
        assert result.bundle.used_full_claim
        assert len(result.bundle.per_entity) == 1
        assert result.bundle.per_entity[0][0] == FULL_CLAIM

    no_refine = rows["no_refinement"]
    assert sum(r.stage_calls["refine"] for r in no_refine.results) == 0
    for result in no_refine.results:
        docs = [index.corpus.get(d) for d in result.bundle.merged_doc_ids]
        assert result.refined.text == format_evidence_block(docs, 1500, numbered=False)

    no_calibration = rows["no_calibration"]
    assert sum(r.stage_calls["calibrate"] for r in no_calibration.results) == 0
    assert no_calibration.report.counts.calibrated == 0
    for result in no_calibration.results:
        assert result.final.calibrated is False
        assert result.final.label == result.verdict.label
        assert result.final.initial == result.verdict


# -- 6 -----------------------------------------------------------------------


def test_calibration_repairs_low_confidence_mistakes(tmp_path):
    """On a fixture with two wrong low-confidence verdicts, re-examination
    lifts macro-F1 from exactly 19/24 to exactly 1.0."""
    spec = (
        [{"gold": "supports", "confidence": 0.95}] * 5
        + [{"gold": "supports", "verdict": "refutes", "confidence": 0.3,
            "calibrated_label": "supports"}]
        + [{"gold": "refutes", "verdict": "refutes", "confidence": 0.95}] * 3
        + [{"gold": "refutes", "verdict": "supports", "confidence": 0.4,
            "calibrated_label": "refutes"}]
    )
    world = build_world(tmp_path, spec)
    index, backend, records = _load_world(world)

    with_calibration = evaluate(records, index, PipelineConfig(theta=0.9), backend, workers=1)
    assert with_calibration.report.macro_f1 == 1.0
    assert with_calibration.report.counts == ReportCounts(
        total=10, correct=10, incorrect=0, errored=0, calibrated=2, calibration_flips=2
    )

    backend.reset()
    without = evaluate(
        records, index, PipelineConfig(theta=0.9, disable_calibrator=True),
        backend, workers=1,
    )
    assert abs(without.report.macro_f1 - float(Fraction(19, 24))) <= 1e-12
    assert without.report.counts.calibrated == 0
    assert with_calibration.report.macro_f1 > without.report.macro_f1


# -- 7 -----------------------------------------------------------------------


def test_evaluation_artifacts_are_bit_identical_across_reruns(tmp_path):
    """Two evaluations of the same 100-claim run (concurrent workers) must
    produce byte-identical results JSONL and report JSON."""
    started = time.perf_counter()
    spec = []
    for i in range(100):
        gold = "supports" if i % 2 == 0 else "refutes"
        if i % 10 == 7:
            spec.append({
                "gold": gold,
                "verdict": "refutes" if gold == "supports" else "supports",
                "confidence": 0.4, "calibrated_label": gold,
            })
        else:
            spec.append({
                "gold": gold,
                "confidence": [0.95, 0.5, 0.85, 0.3][i % 4],
                "hops": 2 + (i % 3),
            })
    world = build_world(tmp_path, spec)
    index, backend, records = _load_world(world)
    assert len(records) == 100

    def run_once(tag: str) -> tuple[bytes, bytes]:
        backend.reset()
        run = evaluate(records, index, PipelineConfig(theta=0.9), backend, workers=4)
        results_path = tmp_path / f"results_{tag}.jsonl"
        report_path = tmp_path / f"report_{tag}.json"
        write_results_jsonl(run.results, results_path)
        write_report_json(run.report, report_path)
        return results_path.read_bytes(), report_path.read_bytes()

    results_a, report_a = run_once("a")
    results_b, report_b = run_once("b")
    assert results_a == results_b
    assert report_a == report_b
    ids = [json.loads(line)["claim_id"] for line in results_a.decode("utf-8").splitlines()]
    assert ids == [f"c{i:03d}" for i in range(100)]
    assert time.perf_counter() - started < 10.0


# -- 8 -----------------------------------------------------------------------


def test_saved_index_reproduces_search_results_after_reload(tmp_path):
    """Persisting and reloading an index must not change any search result:
    same documents, same ranks, bit-identical scores, across 25 queries."""
    rng = random.Random(424242)
    vocab = [f"w{i}" for i in range(40)]
    docs = []
    for i in range(80):
        title = " ".join(rng.choices(vocab, k=2)) if rng.random() < 0.7 else ""
        text = " ".join(rng.choices(vocab, k=rng.randint(3, 30)))
        docs.append((f"d{i:03d}", title, text))
    index = build_index(make_corpus(docs), IndexParams(k1=1.4, b=0.6, stopwords=("w0",)))
    save_index(index, tmp_path / "idx")
    loaded = load_index(tmp_path / "idx")
    assert loaded.params == index.params
    for _ in range(25):
        query = " ".join(rng.choices(vocab, k=rng.randint(1, 4)))
        original = [(h.doc_id, h.rank, h.score) for h in search(index, query, k=7)]
        reloaded = [(h.doc_id, h.rank, h.score) for h in search(loaded, query, k=7)]
        assert original == reloaded


# -- 9 -----------------------------------------------------------------------


def test_dataset_presets_are_applied_and_echoed_in_reports(tmp_path):
    """Evaluating under a schema applies that dataset's preset (k, theta, n)
    and echoes the resolved values into the report's config snapshot."""
    world = build_world(
        tmp_path,
        [{"gold": "supports"}, {"gold": "refutes", "verdict": "refutes"}],
    )
    index_dir = str(world["root"] / "index")
    assert cli_main(["index", "--corpus", str(world["corpus_path"]), "--out", index_dir]) == 0
    cfg = tmp_path / "config.json"
    cfg.write_text(
        json.dumps({"backend": {"kind": "mock", "script": str(world["script_path"])}}),
        encoding="utf-8",
    )
    feverous_dataset = write_jsonl(
        tmp_path / "feverous.jsonl",
        [
            {"id": "c000", "claim": world_claim_text(0), "label": "SUPPORTS"},
            {"id": "c001", "claim": world_claim_text(1), "label": "REFUTES"},
        ],
    )
    expected = {
        "hover": (world["dataset_path"], 10, 0.90, 3),
        "feverous_s": (feverous_dataset, 5, 0.85, 3),
    }
    for schema, (dataset, top_k, theta, max_entities) in expected.items():
        report_path = tmp_path / f"report_{schema}.json"
        code = cli_main([
            "evaluate", "--dataset", str(dataset), "--index", index_dir,
            "--out", str(tmp_path / f"results_{schema}.jsonl"),
            "--report", str(report_path),
            "--schema", schema, "--config", str(cfg), "--workers", "1",
        ])
        assert code == 0
        echoed = json.loads(report_path.read_text(encoding="utf-8"))["config"]
        assert echoed["preset"] == schema
        assert echoed["schema"] == schema
        assert echoed["pipeline"]["top_k"] == top_k
        assert echoed["pipeline"]["theta"] == theta
        assert echoed["pipeline"]["max_entities"] == max_entities


# -- 10 ----------------------------------------------------------------------


def test_entity_extraction_meets_its_span_contract():
    """Thirty hand-labeled claims: exact expected surfaces, at most three
    non-overlapping in-order spans that round-trip through the text, and
    deterministic output."""
    fixture = json.loads(
        (Path(__file__).parent / "data" / "entity_claims.json").read_text(encoding="utf-8")
    )
    assert len(fixture) == 30
    for item in fixture:
        text = item["claim"]
        entities = extract_entities(text, max_n=3)
        assert [e.surface for e in entities] == item["expected"], text
        assert len(entities) <= 3
        for entity in entities:
            assert text[entity.start:entity.end] == entity.surface
            assert len(entity.surface) >= 2
        assert [e.start for e in entities] == sorted(e.start for e in entities)
        for left, right in zip(entities, entities[1:]):
            assert left.end <= right.start
        assert extract_entities(text, max_n=3) == entities
