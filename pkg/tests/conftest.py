"""Shared fixtures and builders for the test suite."""

from __future__ import annotations

import json
from pathlib import Path

import pytest

from claimcheck.corpus import Corpus, Document, ingest_corpus
from claimcheck.index import IndexParams, build_index
from claimcheck.llm import MockBackend


def write_jsonl(path: Path, rows: list[dict]) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as handle:
        for row in rows:
            handle.write(json.dumps(row, ensure_ascii=False) + "\n")
    return path


def make_corpus(docs: list[tuple[str, str, str]]) -> Corpus:
    corpus = Corpus()
    for doc_id, title, text in docs:
        corpus.add(Document(doc_id=doc_id, title=title, text=text))
    return corpus


BAND_DOCS: list[tuple[str, str, str]] = [
    (
        "d001",
        "Eme 15",
        "Eme 15 was a Mexican pop band formed in 2011. The band grew out of a "
        "television production and recorded two studio albums.",
    ),
    (
        "d002",
        "Jack Duarte",
        "Jack Duarte is a Mexican actor and musician. Duarte was a member of "
        "the pop band Eme 15 and appeared in several television series.",
    ),
    (
        "d003",
        "Miss XV",
        "Miss XV is a Mexican telenovela that premiered on Nickelodeon Latin "
        "America in 2012. Its cast formed the band Eme 15.",
    ),
    (
        "d004",
        "Skagen",
        "Skagen is the northernmost town of Denmark, located on the east coast "
        "of the Skagen Odde peninsula.",
    ),
    (
        "d005",
        "East of Eden",
        "East of Eden is a 1955 American drama film directed by Elia Kazan, "
        "loosely based on the novel by John Steinbeck.",
    ),
    (
        "d006",
        "Tide pool",
        "Tide pools are rocky pools on seashores that are filled with seawater "
        "during high tide and remain pools at low tide.",
    ),
]


@pytest.fixture
def band_corpus() -> Corpus:
    return make_corpus(BAND_DOCS)


@pytest.fixture
def band_index(band_corpus):
    return build_index(band_corpus, IndexParams())


@pytest.fixture
def band_corpus_file(tmp_path: Path) -> Path:
    rows = [
        {"id": doc_id, "title": title, "text": text}
        for doc_id, title, text in BAND_DOCS
    ]
    return write_jsonl(tmp_path / "band_corpus.jsonl", rows)


class FakeSleep:
    """Sleep stand-in that records requested delays instead of waiting."""

    def __init__(self) -> None:
        self.delays: list[float] = []

    def __call__(self, seconds: float) -> None:
        self.delays.append(seconds)


def verdict_json(label: str, confidence: float, reasoning: str = "because") -> str:
    return json.dumps({"label": label, "confidence": confidence, "reasoning": reasoning})


def relabel_json(label: str, rationale: str = "re-checked") -> str:
    return json.dumps({"label": label, "rationale": rationale})


def backend_from(entries: list[dict]) -> MockBackend:
    return MockBackend.from_raw(entries)


# --------------------------------------------------------------------------
# Synthetic world: a corpus, a dataset, and a scripted backend that drive the
# pipeline deterministically. Claim i is about "Keystone{i} Chronicle{i}", a
# museum in "Rivertown{i}"; the matching document is d{i:03d}. The claim text
# yields exactly two heuristic entities: the two-word name run and the
# mid-sentence town name.
# --------------------------------------------------------------------------


def world_claim_text(i: int) -> str:
    return f"Keystone{i} Chronicle{i} is a museum located in Rivertown{i}."


def world_doc(i: int) -> dict:
    return {
        "id": f"d{i:03d}",
        "title": f"Keystone{i} Chronicle{i}",
        "text": (
            f"Keystone{i} Chronicle{i} is a museum in Rivertown{i}. "
            f"It opened in {1900 + i} and holds a regional archive."
        ),
    }


def build_world(
    tmp_path: Path,
    spec: list[dict],
    name: str = "world",
) -> dict:
    """Create corpus/dataset/mock-script files for a deterministic eval run.

    Each ``spec`` item describes one claim:
      gold: "supports" | "refutes" (required)
      verdict: first-pass label (default: gold)
      confidence: first-pass confidence (default 0.95)
      calibrated_label: label returned by the re-examination stage, if it is
        ever consulted (default: the verdict label)
      hops: optional hop count for the dataset row (default 2)
    """
    root = tmp_path / name
    root.mkdir(parents=True, exist_ok=True)

    docs = [world_doc(i) for i in range(len(spec))]
    corpus_path = write_jsonl(root / "corpus.jsonl", docs)

    gold_map = {"supports": "SUPPORTED", "refutes": "NOT_SUPPORTED"}
    dataset_rows = []
    script: list[dict] = []
    for i, item in enumerate(spec):
        claim = world_claim_text(i)
        marker = f"Keystone{i} Chronicle{i}"
        verdict = item.get("verdict", item["gold"])
        confidence = item.get("confidence", 0.95)
        calibrated = item.get("calibrated_label", verdict)
        dataset_rows.append(
            {
                "uid": f"c{i:03d}",
                "claim": claim,
                "label": gold_map[item["gold"]],
                "num_hops": item.get("hops", 2),
            }
        )
        script.append(
            {
                "tag": "refine",
                "match_substring": marker,
                "response_text": f"{marker} is a museum in Rivertown{i} [1].",
                "repeat": True,
            }
        )
        script.append(
            {
                "tag": "verify",
                "match_substring": marker,
                "response_text": verdict_json(verdict, confidence),
                "repeat": True,
            }
        )
        script.append(
            {
                "tag": "calibrate",
                "match_substring": marker,
                "response_text": relabel_json(calibrated),
                "repeat": True,
            }
        )

    dataset_path = write_jsonl(root / "claims.jsonl", dataset_rows)
    script_path = root / "script.json"
    script_path.write_text(json.dumps(script, indent=2), encoding="utf-8")

    return {
        "root": root,
        "corpus_path": corpus_path,
        "dataset_path": dataset_path,
        "script_path": script_path,
        "script": script,
        "docs": docs,
    }


# --------------------------------------------------------------------------
# Acceptance reporting: print one PASS/FAIL line per acceptance criterion in
# the terminal summary, derived from the outcome of each test in
# tests/test_acceptance.py.
# --------------------------------------------------------------------------


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    outcomes: dict[str, str] = {}
    for status in ("passed", "failed", "error"):
        for report in terminalreporter.stats.get(status, []):
            nodeid = getattr(report, "nodeid", "")
            if "test_acceptance.py" in nodeid and "::" in nodeid:
                test_name = nodeid.split("::")[-1]
                label = test_name.removeprefix("test_").replace("_", " ")
                verdict = "PASS" if status == "passed" else "FAIL"
                outcomes[label] = verdict
    if outcomes:
        terminalreporter.write_sep("-", "acceptance criteria")
        for label in sorted(outcomes):
            terminalreporter.write_line(f"{label}: {outcomes[label]}")
