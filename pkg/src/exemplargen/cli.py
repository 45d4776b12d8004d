"""Command-line pipeline: preprocess, index, pair, train, generate, evaluate, baseline.

Every stage writes its artifact plus ``<artifact>.manifest.json`` holding the
resolved configuration, the seed and the wall time.  Options can also come
from a ``key=value`` file passed with ``--config``; command-line flags win.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical abort.
"""

from __future__ import annotations

import os

# single-threaded BLAS keeps reruns bit-identical; must precede the numpy import
for _var in ("OPENBLAS_NUM_THREADS", "OMP_NUM_THREADS", "MKL_NUM_THREADS"):
    os.environ.setdefault(_var, "1")

import argparse
import json
import logging
import sys
import time
from dataclasses import asdict
from fractions import Fraction
from pathlib import Path
from typing import Sequence

log = logging.getLogger("exemplargen")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3


class DataError(Exception):
    pass


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# ------------------------------------------------------------------ helpers


def _need(path) -> Path:
    p = Path(path)
    if not p.exists():
        raise DataError(f"missing input: {p}")
    return p


def _out(path) -> Path:
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    return p


def _write_manifest(artifact: Path, stage: str, args: argparse.Namespace, started: float, extra: dict | None = None):
    config = {k: (str(v) if isinstance(v, Path) else v) for k, v in sorted(vars(args).items()) if k != "func"}
    manifest = {
        "stage": stage,
        "seed": args.seed,
        "config": config,
        "wall_time_s": round(time.perf_counter() - started, 3),
        **(extra or {}),
    }
    path = artifact.with_name(artifact.name + ".manifest.json")
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def read_config_file(path) -> dict[str, str]:
    """Parse ``key=value`` lines; blank lines and ``#`` comments are ignored."""
    out = {}
    for n, line in enumerate(_need(path).read_text(encoding="utf-8").splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{n}: expected key=value")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key.replace("-", "_")] = value
    return out


def _apply_config(parser: argparse.ArgumentParser, values: dict[str, str]) -> dict:
    actions = {a.dest: a for a in parser._actions}
    defaults = {}
    for key, raw in values.items():
        action = actions.get(key)
        if action is None or key in ("help", "config"):
            raise UsageError(f"unknown config key {key!r} for this subcommand")
        if isinstance(action, argparse._StoreTrueAction):
            defaults[key] = raw.lower() in ("1", "true", "yes", "on")
            continue
        value = action.type(raw) if action.type else raw
        if action.choices is not None and value not in action.choices:
            raise UsageError(f"config key {key!r}: {raw!r} not in {sorted(action.choices)}")
        defaults[key] = value
    return defaults


def read_predictions(path) -> dict[int, list[str]]:
    preds = {}
    for n, line in enumerate(_need(path).read_text(encoding="utf-8").splitlines(), 1):
        if not line:
            continue
        if "\t" not in line:
            raise DataError(f"{path}:{n}: expected '<id>\\t<tokens>'")
        sid, text = line.split("\t", 1)
        try:
            preds[int(sid)] = text.split()
        except ValueError as exc:
            raise DataError(f"{path}:{n}: bad sample id {sid!r}") from exc
    return preds


def write_predictions(path, rows: Sequence[tuple[int, list[str]]]):
    with open(_out(path), "w", encoding="utf-8", newline="\n") as fh:
        for sid, tokens in rows:
            fh.write(f"{sid}\t{' '.join(tokens)}\n")


def _split_spec(text: str, seed: int):
    from .corpus import SplitSpec

    try:
        parts = [Fraction(p) for p in text.split(",")]
    except ValueError as exc:
        raise UsageError(f"bad --split {text!r}") from exc
    if len(parts) != 3:
        raise UsageError("--split needs three comma-separated fractions")
    try:
        return SplitSpec(*parts, seed=seed)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


def _samples(path):
    from .corpus import read_samples

    try:
        return read_samples(_need(path))
    except (ValueError, KeyError, TypeError) as exc:
        raise DataError(f"{path}: malformed sample file ({exc})") from exc


def _pairs(path):
    from .retrieval import read_pairs

    try:
        return read_pairs(_need(path))
    except (ValueError, KeyError, TypeError) as exc:
        raise DataError(f"{path}: malformed pair file ({exc})") from exc


def _model_config(args):
    from .model import ModelConfig

    overrides = {
        "seed": args.seed,
        "lr": args.lr,
        "clip_norm": args.clip,
        "epochs": args.epochs,
        "beam_size": args.beam,
        "max_src_len": args.max_src_len,
        "max_tgt_len": args.max_tgt_len,
        "batch_size": args.batch_size,
        "dropout": args.dropout,
        "select_by": args.select_by,
        "ast_view": args.ast_view,
    }
    if args.dims:
        try:
            embed, hidden = (int(x) for x in args.dims.split(","))
        except ValueError as exc:
            raise UsageError(f"--dims expects EMBED,HIDDEN, got {args.dims!r}") from exc
        overrides.update(embed_dim=embed, hidden_dim=hidden)
    try:
        return ModelConfig(**{k: v for k, v in overrides.items() if v is not None})
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


# ------------------------------------------------------------------- stages


def cmd_preprocess(args) -> int:
    from .corpus import ingest, split_by_project, stats, write_samples

    started = time.perf_counter()
    spec = _split_spec(args.split, args.seed)
    samples, skipped = ingest(_need(args.raw), challenge=args.mode == "challenge")
    if not samples:
        raise DataError(f"{args.raw}: no usable records")
    splits = dict(zip(("train", "valid", "test"), split_by_project(samples, spec)))
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    for name, part in splits.items():
        write_samples(out_dir / f"{name}.jsonl", part)
    summary = asdict(stats(splits))
    log.info("kept %d samples, skipped %s", len(samples), skipped)
    _write_manifest(out_dir / "preprocess", "preprocess", args, started, {"skipped": skipped, "stats": summary})
    return EXIT_OK


def cmd_index(args) -> int:
    from .retrieval import IndexBuildError, index_samples

    started = time.perf_counter()
    try:
        index = index_samples(_samples(args.train))
    except IndexBuildError as exc:
        raise DataError(f"{args.train}: {exc}") from exc
    index.save(_out(args.index))
    _write_manifest(Path(args.index), "index", args, started, {"doc_count": index.doc_count})
    return EXIT_OK


def cmd_pair(args) -> int:
    from .retrieval import Index, pair_exemplars, write_pairs

    started = time.perf_counter()
    try:
        index = Index.load(_need(args.index))
    except (ValueError, KeyError) as exc:
        raise DataError(f"{args.index}: {exc}") from exc
    corpus = {s.id: s for s in _samples(args.train)}
    queries = _samples(args.queries)
    pairs = pair_exemplars(queries, index, corpus, exclude_self=args.exclude_self)
    write_pairs(_out(args.out), pairs)
    empty = sum(p.similar_id is None for p in pairs)
    _write_manifest(Path(args.out), "pair", args, started, {"pairs": len(pairs), "empty": empty})
    return EXIT_OK


def cmd_train(args) -> int:
    from .training import build_inputs, new_model, train

    started = time.perf_counter()
    config = _model_config(args)
    train_samples = _samples(args.train)
    train_pairs = _pairs(args.train_pairs) if args.exemplar == "retrieved" else None
    examples = build_inputs(train_samples, train_pairs, train_samples, config, args.exemplar, args.seed)
    valid = None
    if args.valid:
        valid_samples = _samples(args.valid)
        if valid_samples:
            valid_pairs = _pairs(args.valid_pairs) if args.exemplar == "retrieved" else None
            valid = build_inputs(valid_samples, valid_pairs, train_samples, config, args.exemplar, args.seed)
    model = new_model(examples, config)
    result = train(model, examples, valid)
    model.save(_out(args.checkpoint), {"best_epoch": result.best_epoch, "history": result.history})
    _write_manifest(
        Path(args.checkpoint), "train", args, started,
        {"model_config": asdict(config), "best_epoch": result.best_epoch, "history": result.history},
    )
    return EXIT_OK


def cmd_generate(args) -> int:
    from .model import RefineModel
    from .training import build_inputs, decode

    started = time.perf_counter()
    try:
        model = RefineModel.load(_need(args.checkpoint))
    except (ValueError, KeyError) as exc:
        raise DataError(f"{args.checkpoint}: unreadable checkpoint ({exc})") from exc
    if args.beam is not None:
        model.config.beam_size = args.beam
    samples = _samples(args.samples)
    train_samples = _samples(args.train)
    pairs = _pairs(args.pairs) if args.exemplar == "retrieved" else None
    try:
        inputs = build_inputs(samples, pairs, train_samples, model.config, args.exemplar, args.seed, with_targets=False)
    except KeyError as exc:
        raise DataError(f"{args.pairs}: {exc}") from exc
    rows = [(ex.id, decode(model, ex)) for ex in inputs]
    write_predictions(args.out, rows)
    _write_manifest(Path(args.out), "generate", args, started, {"count": len(rows)})
    return EXIT_OK


def cmd_evaluate(args) -> int:
    from .evaluation import corpus_bleu, length_bucket_report, write_report

    started = time.perf_counter()
    preds = read_predictions(args.predictions)
    refs = _samples(args.references)
    missing = [s.id for s in refs if s.id not in preds]
    if missing:
        raise DataError(f"{args.predictions}: no prediction for sample ids {missing[:5]}")
    cands = [preds[s.id] for s in refs]
    gold = [s.comment_tokens for s in refs]
    report = corpus_bleu(cands, gold)
    buckets = length_bucket_report(cands, gold, [len(s.code_tokens) for s in refs], args.bucket_width)
    write_report(_out(args.report), _out(args.records) if args.records else None, report, {"length_bucket": buckets})
    print("\n".join(report.lines()))
    _write_manifest(Path(args.report), "evaluate", args, started)
    return EXIT_OK


def cmd_baseline(args) -> int:
    from .baselines import LSI, NNGen, VSM, RetrieveOnly

    started = time.perf_counter()
    train_samples = _samples(args.train)
    if not train_samples:
        raise DataError(f"{args.train}: empty training split")
    queries = _samples(args.samples)
    if args.engine == "retrieve":
        engine = RetrieveOnly(train_samples)
        predict = lambda q: engine.predict(q, exclude_self=args.exclude_self)  # noqa: E731
    elif args.engine == "vsm":
        predict = VSM(train_samples).predict
    elif args.engine == "lsi":
        predict = LSI(train_samples, d=args.lsi_dim, seed=args.seed).predict
    else:
        predict = NNGen(train_samples, k=args.k).predict
    write_predictions(args.out, [(q.id, predict(q)) for q in queries])
    _write_manifest(Path(args.out), "baseline", args, started)
    return EXIT_OK


# ------------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", help="key=value file; flags override it")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--mode", choices=("standard", "challenge"), default="standard")
    common.add_argument("--log-level", default="INFO")

    model_opts = _Parser(add_help=False)
    model_opts.add_argument("--exemplar", choices=("retrieved", "random", "none"), default="retrieved")
    model_opts.add_argument("--beam", type=int)
    model_opts.add_argument("--epochs", type=int)
    model_opts.add_argument("--lr", type=float)
    model_opts.add_argument("--clip", type=float)
    model_opts.add_argument("--dims", help="EMBED,HIDDEN (hidden is per direction)")
    model_opts.add_argument("--max-src-len", type=int)
    model_opts.add_argument("--max-tgt-len", type=int)
    model_opts.add_argument("--batch-size", type=int)
    model_opts.add_argument("--dropout", type=float)
    model_opts.add_argument("--select-by", choices=("loss", "bleu"))
    model_opts.add_argument("--ast-view", choices=("sbt", "sbt_ao"))

    parser = _Parser(prog="exemplargen", description="Exemplar-based code comment generation pipeline.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("preprocess", parents=[common], help="raw records -> train/valid/test sample files")
    p.add_argument("--raw", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--split", default="8/10,1/10,1/10", help="train,valid,test fractions")
    p.set_defaults(func=cmd_preprocess)

    p = sub.add_parser("index", parents=[common], help="build the BM25 index over training code")
    p.add_argument("--train", required=True)
    p.add_argument("--index", required=True)
    p.set_defaults(func=cmd_index)

    p = sub.add_parser("pair", parents=[common], help="pair query samples with retrieved exemplars")
    p.add_argument("--index", required=True)
    p.add_argument("--train", required=True)
    p.add_argument("--queries", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--exclude-self", action="store_true", help="use for training queries")
    p.set_defaults(func=cmd_pair)

    p = sub.add_parser("train", parents=[common, model_opts], help="train the refine model")
    p.add_argument("--train", required=True)
    p.add_argument("--train-pairs")
    p.add_argument("--valid")
    p.add_argument("--valid-pairs")
    p.add_argument("--checkpoint", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("generate", parents=[common, model_opts], help="decode comments with a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--samples", required=True)
    p.add_argument("--train", required=True, help="training samples (similar code, random exemplars)")
    p.add_argument("--pairs")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("evaluate", parents=[common], help="BLEU report for a prediction file")
    p.add_argument("--predictions", required=True)
    p.add_argument("--references", required=True)
    p.add_argument("--report", required=True)
    p.add_argument("--records")
    p.add_argument("--bucket-width", type=int, default=10)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("baseline", parents=[common], help="retrieval baselines")
    p.add_argument("--engine", choices=("retrieve", "vsm", "lsi", "nngen"), required=True)
    p.add_argument("--train", required=True)
    p.add_argument("--samples", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--k", type=int, default=5, help="NNGen neighbour count")
    p.add_argument("--lsi-dim", type=int, default=500)
    p.add_argument("--exclude-self", action="store_true")
    p.set_defaults(func=cmd_baseline)
    return parser


def _subparser(parser: argparse.ArgumentParser, name: str) -> argparse.ArgumentParser:
    for action in parser._actions:
        if isinstance(action, argparse._SubParsersAction):
            return action.choices[name]
    raise KeyError(name)


def _check_requirements(args):
    if args.command == "train" and args.exemplar == "retrieved" and not args.train_pairs:
        raise UsageError("--train-pairs is required with --exemplar retrieved")
    if args.command == "train" and args.valid and args.exemplar == "retrieved" and not args.valid_pairs:
        raise UsageError("--valid-pairs is required with --valid and --exemplar retrieved")
    if args.command == "generate" and args.exemplar == "retrieved" and not args.pairs:
        raise UsageError("--pairs is required with --exemplar retrieved")


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    argv = list(sys.argv[1:] if argv is None else argv)
    args = parser.parse_args(argv)
    try:
        if args.config:
            sub = _subparser(parser, args.command)
            sub.set_defaults(**_apply_config(sub, read_config_file(args.config)))
            args = parser.parse_args(argv)
        _check_requirements(args)
    except UsageError as exc:
        print(f"exemplargen: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DataError as exc:
        print(f"exemplargen: {exc}", file=sys.stderr)
        return EXIT_DATA
    logging.basicConfig(level=args.log_level.upper(), format="%(levelname)s %(name)s: %(message)s")

    from .training import NumericalError

    try:
        return args.func(args)
    except UsageError as exc:
        print(f"exemplargen: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DataError as exc:
        print(f"exemplargen: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericalError as exc:
        print(f"exemplargen: numerical abort: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
