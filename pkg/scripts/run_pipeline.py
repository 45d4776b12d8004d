"""Run every pipeline stage on a raw record file and print the BLEU report.

    python3 scripts/run_pipeline.py --work runs/smoke --epochs 2
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from exemplargen.experiments import run_pipeline
from exemplargen.fixtures import bundled_path

if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--raw", type=Path, default=bundled_path("fixture_train.jsonl"))
    ap.add_argument("--work", type=Path, default=Path("runs/pipeline"))
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--epochs", type=int, default=2)
    ap.add_argument("--dims", default="32,32")
    ap.add_argument("--batch-size", type=int, default=16)
    ap.add_argument("--exemplar", default="retrieved", choices=("retrieved", "random", "none"))
    ap.add_argument("--split", default="8/10,1/10,1/10")
    a = ap.parse_args()
    try:
        report = run_pipeline(a.work, a.raw, a.seed, a.epochs, a.dims, a.batch_size, a.exemplar, a.split)
    except RuntimeError as exc:
        sys.exit(str(exc))
    sys.stdout.write(report.read_text(encoding="utf-8"))
