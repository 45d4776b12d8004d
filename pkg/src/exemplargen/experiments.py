"""Scaled-down experiments on the bundled fixture corpus."""

from __future__ import annotations

import time
from dataclasses import asdict, dataclass, field

from pathlib import Path

from .corpus import Sample, ingest
from .evaluation import corpus_bleu
from .fixtures import bundled_path
from .model import ModelConfig
from .retrieval import index_samples, pair_exemplars
from .training import EXEMPLAR_MODES, build_inputs, generate_batch, new_model, train

OVERFIT_CONFIG = dict(hidden_dim=64, batch_size=16, epochs=50)


@dataclass
class OverfitResult:
    config: dict
    train_bleu: float
    heldout_bleu: dict[str, float]
    best_epoch: int
    history: list[dict] = field(default_factory=list)
    seconds: float = 0.0


def load_fixture() -> tuple[list[Sample], list[Sample]]:
    """Bundled training corpus and its held-out set, with disjoint sample ids."""
    train_samples, _ = ingest(bundled_path("fixture_train.jsonl"))
    heldout, _ = ingest(bundled_path("fixture_heldout.jsonl"))
    for s in heldout:
        s.id += len(train_samples)
    return train_samples, heldout


def overfit_experiment(config: ModelConfig | None = None, heldout_modes=EXEMPLAR_MODES, progress=None) -> OverfitResult:
    """Train on the fixture, score it as its own test set, then score the held-out set per exemplar mode.

    Training queries are paired with self-exclusion, and the train-set score
    reuses those pairs so a sample never sees its own comment as exemplar.
    """
    config = config or ModelConfig(**OVERFIT_CONFIG)
    started = time.perf_counter()
    train_samples, heldout = load_fixture()
    corpus = {s.id: s for s in train_samples}
    index = index_samples(train_samples)
    train_pairs = pair_exemplars(train_samples, index, corpus, exclude_self=True)
    examples = build_inputs(train_samples, train_pairs, corpus, config)
    model = new_model(examples, config)
    result = train(model, examples, examples, progress=progress)

    train_bleu = corpus_bleu(generate_batch(model, examples), [ex.comment for ex in examples]).bleu
    heldout_pairs = pair_exemplars(heldout, index, corpus, exclude_self=False)
    refs = [s.comment_tokens for s in heldout]
    scores = {}
    for mode in heldout_modes:
        inputs = build_inputs(heldout, heldout_pairs, corpus, config, mode, seed=config.seed, with_targets=False)
        scores[mode] = corpus_bleu(generate_batch(model, inputs), refs).bleu
    return OverfitResult(
        asdict(config), train_bleu, scores, result.best_epoch, result.history, time.perf_counter() - started
    )


def run_pipeline(
    work,
    raw=None,
    seed: int = 0,
    epochs: int = 2,
    dims: str = "32,32",
    batch: int = 16,
    exemplar: str = "retrieved",
    split: str = "8/10,1/10,1/10",
) -> Path:
    """Run every CLI stage in ``work`` and return the path of the BLEU report.

    Raises RuntimeError naming the stage that exits nonzero.
    """
    from .cli import main as cli

    work = Path(work)
    work.mkdir(parents=True, exist_ok=True)
    raw = bundled_path("fixture_train.jsonl") if raw is None else raw
    d = str(work)
    train, index = f"{d}/train.jsonl", f"{d}/index.json"
    steps = [
        ["preprocess", "--raw", str(raw), "--out-dir", d, "--split", split],
        ["index", "--train", train, "--index", index],
        ["pair", "--index", index, "--train", train, "--queries", train, "--out", f"{d}/train.pairs.jsonl", "--exclude-self"],
    ]
    for name in ("valid", "test"):
        steps.append(["pair", "--index", index, "--train", train, "--queries", f"{d}/{name}.jsonl", "--out", f"{d}/{name}.pairs.jsonl"])
    steps += [
        ["train", "--train", train, "--train-pairs", f"{d}/train.pairs.jsonl",
         "--valid", f"{d}/valid.jsonl", "--valid-pairs", f"{d}/valid.pairs.jsonl",
         "--checkpoint", f"{d}/model.bin", "--epochs", str(epochs), "--dims", dims,
         "--batch-size", str(batch), "--exemplar", exemplar],
        ["generate", "--checkpoint", f"{d}/model.bin", "--samples", f"{d}/test.jsonl", "--train", train,
         "--pairs", f"{d}/test.pairs.jsonl", "--out", f"{d}/predictions.tsv", "--exemplar", exemplar],
        ["evaluate", "--predictions", f"{d}/predictions.tsv", "--references", f"{d}/test.jsonl",
         "--report", f"{d}/report.txt", "--records", f"{d}/report.jsonl"],
    ]
    for engine in ("vsm", "nngen"):
        steps.append(["baseline", "--engine", engine, "--train", train, "--samples", f"{d}/test.jsonl", "--out", f"{d}/{engine}.tsv"])
    for step in steps:
        code = cli(step + ["--seed", str(seed), "--log-level", "WARNING"])
        if code != 0:
            raise RuntimeError(f"stage {step[0]} failed with exit code {code}")
    return work / "report.txt"
