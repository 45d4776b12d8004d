"""Training loop, decoding wrappers and exemplar-mode assembly."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import autodiff as ad
from .corpus import NONE_TOKEN, Sample
from .decoding import beam_search, greedy_decode
from .evaluation import corpus_bleu
from .model import BOS_ID, EOS_ID, Batch, ModelConfig, ModelInput, RefineModel, build_vocabularies, make_batch
from .parser import sbt_to_ao
from .retrieval import ExemplarPair

log = logging.getLogger(__name__)

EXEMPLAR_MODES = ("retrieved", "random", "none")


class NumericalError(RuntimeError):
    pass


def ast_tokens(sample: Sample, config: ModelConfig) -> list[str]:
    return sbt_to_ao(sample.sbt_tokens) if config.ast_view == "sbt_ao" else list(sample.sbt_tokens)


def build_inputs(
    samples: Sequence[Sample],
    pairs: Sequence[ExemplarPair] | None,
    corpus: Sequence[Sample] | dict[int, Sample],
    config: ModelConfig,
    mode: str = "retrieved",
    seed: int = 0,
    with_targets: bool = True,
) -> list[ModelInput]:
    """Assemble model inputs; the exemplar mode only changes the s and r streams.

    ``retrieved`` takes the paired training sample, ``random`` draws one
    uniformly from ``corpus`` (seeded per query id), ``none`` uses the
    empty-exemplar marker for both.
    """
    if mode not in EXEMPLAR_MODES:
        raise ValueError(f"unknown exemplar mode {mode!r}")
    by_id = corpus if isinstance(corpus, dict) else {s.id: s for s in corpus}
    pool = sorted(by_id)
    pair_of = {p.query_id: p for p in pairs or []}
    out = []
    for s in samples:
        if mode == "retrieved":
            pair = pair_of.get(s.id)
            if pair is None:
                raise KeyError(f"no exemplar pair for sample {s.id}")
            similar = by_id[pair.similar_id].code_tokens if pair.similar_id is not None else [NONE_TOKEN]
            exemplar = pair.exemplar_tokens
        elif mode == "random":
            rng = np.random.default_rng([seed, s.id])
            pick = by_id[pool[int(rng.integers(len(pool)))]]
            similar, exemplar = pick.code_tokens, pick.comment_tokens
        else:
            similar, exemplar = [NONE_TOKEN], [NONE_TOKEN]
        out.append(
            ModelInput(
                code=list(s.code_tokens),
                ast=ast_tokens(s, config),
                similar_code=list(similar),
                exemplar=list(exemplar),
                comment=list(s.comment_tokens) if with_targets else None,
                id=s.id,
            )
        )
    return out


def lr_at(config: ModelConfig, epoch: int) -> float:
    """Learning rate used during ``epoch`` (0-based)."""
    return config.lr * config.lr_decay**epoch


def batches(examples: Sequence[ModelInput], model: RefineModel, order: Sequence[int]) -> list[Batch]:
    size = model.config.batch_size
    return [
        make_batch([examples[i] for i in order[k : k + size]], model.vocabs, model.config)
        for k in range(0, len(order), size)
    ]


def evaluate_loss(model: RefineModel, examples: Sequence[ModelInput]) -> float:
    """Mean per-sample loss without dropout."""
    total = 0.0
    for batch in batches(examples, model, range(len(examples))):
        _, per_sample = model.loss(batch)
        total += float(per_sample.sum())
    return total / len(examples)


@dataclass
class TrainResult:
    history: list[dict] = field(default_factory=list)
    best_epoch: int = -1
    best_metric: float = math.nan


def train(
    model: RefineModel,
    train_examples: Sequence[ModelInput],
    valid_examples: Sequence[ModelInput] | None = None,
    epochs: int | None = None,
    progress=None,
) -> TrainResult:
    """SGD with per-epoch decay and global-norm clipping.

    Keeps the parameters from the epoch with the best validation loss (or
    validation BLEU when ``config.select_by == "bleu"``) and restores them at
    the end.  Raises NumericalError on a non-finite loss.
    """
    cfg = model.config
    epochs = cfg.epochs if epochs is None else epochs
    valid = valid_examples if valid_examples else train_examples
    rng = np.random.default_rng(cfg.seed)
    result = TrainResult()
    best_snapshot = None
    for epoch in range(epochs):
        lr = lr_at(cfg, epoch)
        order = rng.permutation(len(train_examples))
        losses = []
        for batch in batches(train_examples, model, order):
            with ad.Tape() as tape:
                loss, _ = model.loss(batch, rng=rng)
            value = float(loss.value)
            if not math.isfinite(value):
                raise NumericalError(f"non-finite training loss {value} in epoch {epoch}")
            tape.backward(loss)
            ad.sgd_step(model.params, lr, cfg.clip_norm)
            losses.append(value)
        record = {"epoch": epoch, "lr": lr, "train_loss": float(np.mean(losses))}
        if cfg.select_by == "bleu":
            preds = generate_batch(model, valid, beam_size=1)
            metric = -corpus_bleu(preds, [ex.comment for ex in valid]).bleu
            record["valid_bleu"] = -metric
        else:
            metric = evaluate_loss(model, valid)
            record["valid_loss"] = metric
        if not math.isfinite(metric):
            raise NumericalError(f"non-finite validation metric in epoch {epoch}")
        if best_snapshot is None or metric < result.best_metric:
            result.best_metric, result.best_epoch = metric, epoch
            best_snapshot = model.params.snapshot()
        result.history.append(record)
        log.info("epoch %d %s", epoch, record)
        if progress is not None:
            progress(record)
    if best_snapshot is not None:
        model.params.restore(best_snapshot)
    return result


# ---------------------------------------------------------------- decoding


class _Stepper:
    """Adapts a model and one encoded input to the decoding step-function protocol."""

    def __init__(self, model: RefineModel, example: ModelInput, sim_override=None):
        self.model = model
        batch = make_batch([example], model.vocabs, model.config)
        self.encs, self.sim, (h0, c0) = model.start(batch, sim_override=sim_override)
        for stream in ("x", "t", "r"):
            model.attention(h0, self.encs[stream], stream)  # fills the key cache
        self.init_state = (h0.value, c0.value)
        self._tiled: dict[int, tuple] = {}

    def _tiled_inputs(self, n: int):
        if n not in self._tiled:
            encs = {}
            for stream, enc in self.encs.items():
                encs[stream] = type(enc)(
                    ad.constant(np.repeat(enc.states.value, n, axis=0)),
                    enc.final,
                    np.repeat(enc.mask, n, axis=0),
                    None if enc.keys is None else ad.constant(np.repeat(enc.keys.value, n, axis=0)),
                )
            self._tiled[n] = (encs, ad.constant(np.repeat(self.sim.value, n, axis=0)))
        return self._tiled[n]

    def __call__(self, states, last_tokens):
        h, c = states
        encs, sim = self._tiled_inputs(h.shape[0])
        (h2, c2), logits, _ = self.model.decode_step((ad.constant(h), ad.constant(c)), last_tokens, encs, sim)
        return ad.log_softmax_np(logits.value), (h2.value, c2.value)


def decode(model: RefineModel, example: ModelInput, beam_size: int | None = None, sim_override=None) -> list[str]:
    """Generate comment tokens for one input; ``beam_size=1`` is greedy."""
    stepper = _Stepper(model, example, sim_override)
    b = model.config.beam_size if beam_size is None else beam_size
    ids, _ = beam_search(stepper, stepper.init_state, BOS_ID, EOS_ID, b, model.config.max_tgt_len)
    return model.vocabs.comment.decode(ids)


def decode_greedy(model: RefineModel, example: ModelInput) -> list[str]:
    stepper = _Stepper(model, example)
    ids, _ = greedy_decode(stepper, stepper.init_state, BOS_ID, EOS_ID, model.config.max_tgt_len)
    return model.vocabs.comment.decode(ids)


def generate_batch(model: RefineModel, examples: Sequence[ModelInput], beam_size: int | None = None) -> list[list[str]]:
    return [decode(model, ex, beam_size) for ex in examples]


def new_model(train_examples: Sequence[ModelInput], config: ModelConfig) -> RefineModel:
    return RefineModel(config, build_vocabularies(train_examples, config))
