#!/usr/bin/env python3
"""Generate a self-contained offline demo: corpus, claims, mock LLM script,
run config, and gold evidence.

The generated directory lets every CLI subcommand run end-to-end without any
network access:

    python3 scripts/make_demo_assets.py --out demo_assets
    claimcheck index --corpus demo_assets/corpus.jsonl --out demo_assets/index
    claimcheck evaluate --dataset demo_assets/claims.jsonl \
        --index demo_assets/index --schema hover \
        --config demo_assets/config.json \
        --out results.jsonl --report report.json

The mock script answers deterministically: every fourth claim gets a wrong
low-confidence first verdict that the calibration stage repairs, so ablations
and theta sweeps have visible effects.
"""

from __future__ import annotations

import argparse
import json
from pathlib import Path

# Every name and town uses tokens unique to its claim, so entity retrieval
# stays claim-local and the mock script's substring matching is unambiguous.
PLACES = [
    "Aldermoor", "Bellgrave", "Cinderfall", "Dunmore", "Eastwick", "Fernhollow",
    "Gildenport", "Harrowgate", "Ironvale", "Kestrel", "Larkspur", "Marrowfield",
]
KINDS = [
    "Observatory", "Aqueduct", "Conservatory", "Lighthouse", "Arboretum",
    "Planetarium", "Viaduct", "Amphitheatre", "Watermill", "Funicular",
    "Gasworks", "Velodrome",
]

DISTRACTOR_DOCS = [
    {
        "id": "doc-x01",
        "title": "Glass manufacturing",
        "text": "Glass is produced by heating sand with fluxes until it melts. "
                "Sheet glass output expanded sharply in the nineteenth century.",
    },
    {
        "id": "doc-x02",
        "title": "Weather balloon",
        "text": "A weather balloon carries instruments into the upper atmosphere "
                "to report pressure, temperature, and humidity readings.",
    },
    {
        "id": "doc-x03",
        "title": "Canal lock",
        "text": "A canal lock raises and lowers boats between stretches of water "
                "of different levels on river and canal waterways.",
    },
]


def claim_plan(i: int) -> dict:
    """Deterministic outcome pattern for claim ``i``."""
    name = f"{PLACES[i]} {KINDS[i]}"
    town = f"{PLACES[(i + 5) % len(PLACES)]}ton"
    kind = i % 4
    if kind == 0:  # confident and correct
        return {"name": name, "town": town, "gold": "supports",
                "verdict": "supports", "confidence": 0.95, "calibrated": "supports"}
    if kind == 1:  # confident and correct, refuting
        return {"name": name, "town": town, "gold": "refutes",
                "verdict": "refutes", "confidence": 0.88, "calibrated": "refutes"}
    if kind == 2:  # wrong at low confidence; re-examination repairs it
        return {"name": name, "town": town, "gold": "supports",
                "verdict": "refutes", "confidence": 0.35, "calibrated": "supports"}
    # low confidence but right; re-examination confirms it
    return {"name": name, "town": town, "gold": "refutes",
            "verdict": "refutes", "confidence": 0.6, "calibrated": "refutes"}


def write_demo_assets(out_dir: str | Path, num_claims: int = 12) -> dict[str, Path]:
    """Write all demo files into ``out_dir`` and return their paths."""
    if not 1 <= num_claims <= len(PLACES):
        raise SystemExit(f"--claims must be between 1 and {len(PLACES)}")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    plans = [claim_plan(i) for i in range(num_claims)]

    corpus_rows = [
        {
            "id": f"doc-{i:03d}",
            "title": plan["name"],
            "text": (
                f"{plan['name']} is a landmark in {plan['town']}. It opened to "
                f"visitors in {1880 + i} and is maintained by the regional trust."
            ),
        }
        for i, plan in enumerate(plans)
    ] + DISTRACTOR_DOCS

    gold_map = {"supports": "SUPPORTED", "refutes": "NOT_SUPPORTED"}
    claim_rows = [
        {
            "uid": f"claim-{i:03d}",
            "claim": f"{plan['name']} is located in {plan['town']}.",
            "label": gold_map[plan["gold"]],
            "num_hops": 2 + ((i // 2) % 2),
        }
        for i, plan in enumerate(plans)
    ]

    script = []
    for i, plan in enumerate(plans):
        marker = plan["name"]
        refined = f"{marker} is a landmark in {plan['town']} [1]."
        script.append({"tag": "refine", "match_substring": marker,
                       "response_text": refined, "repeat": True})
        script.append({
            "tag": "verify", "match_substring": marker,
            "response_text": json.dumps({
                "label": plan["verdict"], "confidence": plan["confidence"],
                "reasoning": f"The evidence names {plan['town']} directly.",
            }),
            "repeat": True,
        })
        script.append({
            "tag": "calibrate", "match_substring": marker,
            "response_text": json.dumps({
                "label": plan["calibrated"],
                "rationale": "Re-read the evidence against the claim wording.",
            }),
            "repeat": True,
        })
    # Refined paragraphs carry a [1] citation; raw document dumps do not.
    script.append({"tag": "judge", "match_substring": "[1]",
                   "response_text": json.dumps({"score": 5}), "repeat": True})
    script.append({"tag": "judge", "match_substring": "Dimension:",
                   "response_text": json.dumps({"score": 3}), "repeat": True})

    config = {
        "backend": {"kind": "mock", "script": "mock_script.json"},
        "retry": {"max_attempts": 3, "base_delay": 0.1, "backoff_factor": 2.0},
    }

    gold_rows = [
        {
            "claim_id": f"claim-{i:03d}",
            "evidence": f"{plan['name']} stands in {plan['town']}.",
        }
        for i, plan in enumerate(plans)
    ]

    paths = {
        "corpus": out / "corpus.jsonl",
        "claims": out / "claims.jsonl",
        "script": out / "mock_script.json",
        "config": out / "config.json",
        "gold": out / "gold_evidence.jsonl",
    }
    _write_jsonl(paths["corpus"], corpus_rows)
    _write_jsonl(paths["claims"], claim_rows)
    paths["script"].write_text(json.dumps(script, indent=2) + "\n", encoding="utf-8")
    paths["config"].write_text(json.dumps(config, indent=2) + "\n", encoding="utf-8")
    _write_jsonl(paths["gold"], gold_rows)
    return paths


def _write_jsonl(path: Path, rows: list[dict]) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        for row in rows:
            handle.write(json.dumps(row, ensure_ascii=False) + "\n")


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--out", default="demo_assets", help="output directory")
    parser.add_argument("--claims", type=int, default=12,
                        help=f"number of claims (1-{len(PLACES)})")
    args = parser.parse_args()
    paths = write_demo_assets(args.out, args.claims)
    for name, path in paths.items():
        print(f"{name}: {path}")


if __name__ == "__main__":
    main()
