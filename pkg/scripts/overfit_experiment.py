"""Overfit the bundled 200-sample fixture and compare exemplar modes on the held-out set.

    python3 scripts/overfit_experiment.py                 # lr 0.2, the reference schedule
    python3 scripts/overfit_experiment.py --lr 1.0 --out runs/overfit_lr1.json
"""

from __future__ import annotations

import argparse
import json
import os

os.environ.setdefault("OPENBLAS_NUM_THREADS", "1")

from dataclasses import asdict  # noqa: E402
from pathlib import Path  # noqa: E402

from exemplargen.experiments import OVERFIT_CONFIG, overfit_experiment  # noqa: E402
from exemplargen.model import ModelConfig  # noqa: E402

if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--lr", type=float, default=0.2)
    ap.add_argument("--epochs", type=int, default=OVERFIT_CONFIG["epochs"])
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", type=Path, default=Path("runs/overfit.json"))
    a = ap.parse_args()
    cfg = ModelConfig(**{**OVERFIT_CONFIG, "epochs": a.epochs, "lr": a.lr, "seed": a.seed})

    def show(rec):
        print(f"epoch {rec['epoch']:2d} lr {rec['lr']:.4f} train {rec['train_loss']:.3f} valid {rec['valid_loss']:.3f}", flush=True)

    res = overfit_experiment(cfg, progress=show)
    print(f"train==test BLEU {res.train_bleu:.2f} (best epoch {res.best_epoch}, {res.seconds:.0f}s)")
    for mode, bleu in res.heldout_bleu.items():
        print(f"held-out BLEU [{mode}] {bleu:.2f}")
    a.out.parent.mkdir(parents=True, exist_ok=True)
    a.out.write_text(json.dumps(asdict(res), indent=2) + "\n", encoding="utf-8")
