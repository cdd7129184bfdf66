#!/usr/bin/env python3
"""Run the full offline experiment pipeline against generated demo assets.

Steps, all through the ``claimcheck`` CLI with the deterministic mock backend:

  1. generate demo assets (corpus, claims, mock script, config, gold evidence)
  2. build and persist the BM25 index
  3. evaluate the claims file (results JSONL + report JSON)
  4. run the stage ablations
  5. sweep the calibration threshold theta and write the plot-ready CSV
  6. judge refined-evidence quality against the gold evidence

Usage:
    python3 scripts/run_mock_experiment.py [--workdir mock_experiment] [--claims 12]
"""

from __future__ import annotations

import argparse
from pathlib import Path

from claimcheck.cli import main as cli_main

from make_demo_assets import write_demo_assets


def run_step(argv: list[str]) -> None:
    print(f"\n$ claimcheck {' '.join(argv)}")
    code = cli_main(argv)
    if code != 0:
        raise SystemExit(f"step failed with exit code {code}: {argv}")


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--workdir", default="mock_experiment",
                        help="directory for assets and artifacts")
    parser.add_argument("--claims", type=int, default=12)
    parser.add_argument("--workers", type=int, default=2)
    args = parser.parse_args()

    workdir = Path(args.workdir)
    assets = write_demo_assets(workdir / "assets", args.claims)
    index_dir = workdir / "index"
    artifacts = {
        "results": workdir / "results.jsonl",
        "report": workdir / "report.json",
        "ablations": workdir / "ablations.json",
        "ablation rows": workdir / "ablation_rows",
        "theta sweep": workdir / "theta_sweep.csv",
        "quality": workdir / "quality.jsonl",
    }
    common = ["--schema", "hover", "--config", str(assets["config"]),
              "--workers", str(args.workers)]

    run_step(["index", "--corpus", str(assets["corpus"]), "--out", str(index_dir)])
    run_step([
        "evaluate", "--dataset", str(assets["claims"]), "--index", str(index_dir),
        "--out", str(artifacts["results"]), "--report", str(artifacts["report"]),
        *common,
    ])
    run_step([
        "ablate", "--dataset", str(assets["claims"]), "--index", str(index_dir),
        "--report", str(artifacts["ablations"]),
        "--out-dir", str(artifacts["ablation rows"]),
        *common,
    ])
    run_step([
        "sweep", "--param", "theta", "--values", "0.3,0.5,0.7,0.9,1.0",
        "--dataset", str(assets["claims"]), "--index", str(index_dir),
        "--out", str(artifacts["theta sweep"]),
        *common,
    ])
    run_step([
        "judge", "--results", str(artifacts["results"]), "--gold", str(assets["gold"]),
        "--index", str(index_dir), "--out", str(artifacts["quality"]),
        "--config", str(assets["config"]),
    ])

    print("\nartifacts:")
    for name, path in artifacts.items():
        print(f"  {name}: {path}")


if __name__ == "__main__":
    main()
