"""Four-encoder attentional encoder-decoder with a similarity gate.

Streams:
    x  input code tokens          t  AST traversal of the input code
    s  code of the retrieved sample   r  comment of the retrieved sample (exemplar)

The gate ``sim = sigmoid(W_sim [h_x; h_s])`` blends a code-side vector
``W_c [.; .] + b_c`` with the exemplar-side vector, both for the initial
decoder state and for the attention context at every step.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import asdict, dataclass, fields
from typing import Iterable, Sequence

import numpy as np

from . import autodiff as ad

PAD, UNK, BOS, EOS, OTHER, NONE = "<pad>", "<unk>", "<s>", "</s>", "<OTHER>", "<none>"
RESERVED = [PAD, UNK, BOS, EOS, OTHER, NONE]
PAD_ID, UNK_ID, BOS_ID, EOS_ID = 0, 1, 2, 3

STREAMS = ("x", "t", "s", "r")
ATTENDED = ("x", "t", "r")


@dataclass
class ModelConfig:
    embed_dim: int = 100
    hidden_dim: int = 256  # per direction
    attn_dim: int = 0  # 0 -> hidden_dim
    max_src_len: int = 100
    max_tgt_len: int = 13  # counts <s> and </s>
    dropout: float = 0.2
    beam_size: int = 5
    code_vocab: int = 30000
    sbt_vocab: int = 30000
    comment_vocab: int = 20000
    lr: float = 0.2
    lr_decay: float = 0.95
    clip_norm: float = 5.0
    batch_size: int = 256
    epochs: int = 20
    select_by: str = "loss"  # or "bleu"
    tie_fusion: bool = True  # share W_c, b_c between initial state and context
    ast_view: str = "sbt_ao"  # "sbt" or "sbt_ao" feeds the AST encoder
    dtype: str = "float64"
    init_scale: float = 0.08
    forget_bias: float = 1.0  # added to the forget-gate slice of every LSTM bias at init
    seed: int = 0

    def __post_init__(self):
        for name in ("embed_dim", "hidden_dim", "max_src_len", "beam_size", "batch_size",
                     "code_vocab", "sbt_vocab", "comment_vocab"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.max_tgt_len < 3:
            raise ValueError("max_tgt_len must leave room for <s>, one token and </s>")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must be in [0, 1)")
        if self.select_by not in ("loss", "bleu"):
            raise ValueError("select_by must be 'loss' or 'bleu'")
        if self.ast_view not in ("sbt", "sbt_ao"):
            raise ValueError("ast_view must be 'sbt' or 'sbt_ao'")
        if self.dtype not in ("float64", "float32"):
            raise ValueError("dtype must be float64 or float32")

    @property
    def decoder_dim(self) -> int:
        return 2 * self.hidden_dim

    @property
    def attention_dim(self) -> int:
        return self.attn_dim or self.hidden_dim

    @classmethod
    def from_dict(cls, d: dict) -> ModelConfig:
        names = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in names})


class Vocabulary:
    def __init__(self, tokens: Sequence[str]):
        if list(tokens[: len(RESERVED)]) != RESERVED:
            raise ValueError("vocabulary must start with the reserved tokens")
        self.itos = list(tokens)
        self.stoi = {t: i for i, t in enumerate(self.itos)}
        if len(self.stoi) != len(self.itos):
            raise ValueError("duplicate vocabulary entries")

    @classmethod
    def build(cls, sequences: Iterable[Sequence[str]], cap: int) -> Vocabulary:
        counts = Counter(t for seq in sequences for t in seq if t not in RESERVED)
        ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))[:cap]
        return cls(RESERVED + [t for t, _ in ranked])

    def __len__(self):
        return len(self.itos)

    def encode(self, tokens: Sequence[str]) -> list[int]:
        return [self.stoi.get(t, UNK_ID) for t in tokens]

    def decode(self, ids: Iterable[int]) -> list[str]:
        return [self.itos[i] for i in ids]


@dataclass
class Vocabularies:
    code: Vocabulary  # shared by x and s
    sbt: Vocabulary
    comment: Vocabulary  # shared by r and the decoder output

    def to_dict(self) -> dict:
        return {"code": self.code.itos, "sbt": self.sbt.itos, "comment": self.comment.itos}

    @classmethod
    def from_dict(cls, d: dict) -> Vocabularies:
        return cls(Vocabulary(d["code"]), Vocabulary(d["sbt"]), Vocabulary(d["comment"]))

    def for_stream(self, stream: str) -> Vocabulary:
        return {"x": self.code, "s": self.code, "t": self.sbt, "r": self.comment, "y": self.comment}[stream]


@dataclass
class ModelInput:
    """Token-level inputs for one example; ``comment`` is None at inference."""

    code: list[str]
    ast: list[str]
    similar_code: list[str]
    exemplar: list[str]
    comment: list[str] | None = None
    id: int = -1


@dataclass
class Batch:
    ids: dict[str, np.ndarray]  # stream -> (B, T) int
    masks: dict[str, np.ndarray]  # stream -> (B, T) bool
    y_in: np.ndarray | None = None  # (B, L)
    y_out: np.ndarray | None = None
    y_mask: np.ndarray | None = None

    @property
    def size(self) -> int:
        return self.ids["x"].shape[0]


@dataclass
class EncoderOutputs:
    states: ad.Tensor  # (B, T, 2H), step t is [fwd_t; bwd_t]
    final: ad.Tensor  # (B, 2H) = [fwd at last real token; bwd at first token]
    mask: np.ndarray  # (B, T)
    keys: ad.Tensor | None = None  # attention projection, filled lazily


def _pad(seqs: list[list[int]], pad: int = PAD_ID) -> tuple[np.ndarray, np.ndarray]:
    width = max(len(s) for s in seqs)
    ids = np.full((len(seqs), width), pad, dtype=np.int64)
    mask = np.zeros((len(seqs), width), dtype=bool)
    for i, s in enumerate(seqs):
        ids[i, : len(s)] = s
        mask[i, : len(s)] = True
    return ids, mask


def make_batch(examples: Sequence[ModelInput], vocabs: Vocabularies, config: ModelConfig) -> Batch:
    ids, masks = {}, {}
    sources = {"x": "code", "t": "ast", "s": "similar_code", "r": "exemplar"}
    for stream, attr in sources.items():
        seqs = []
        for ex in examples:
            toks = getattr(ex, attr)[: config.max_src_len]
            if not toks:
                raise ValueError(f"example {ex.id}: empty {attr} sequence")
            seqs.append(vocabs.for_stream(stream).encode(toks))
        ids[stream], masks[stream] = _pad(seqs)
    batch = Batch(ids, masks)
    if all(ex.comment is not None for ex in examples):
        body = [vocabs.comment.encode(ex.comment[: config.max_tgt_len - 2]) for ex in examples]
        y_in, _ = _pad([[BOS_ID] + b for b in body])
        y_out, y_mask = _pad([b + [EOS_ID] for b in body])
        batch.y_in, batch.y_out, batch.y_mask = y_in, y_out, y_mask
    return batch


class RefineModel:
    def __init__(self, config: ModelConfig, vocabs: Vocabularies, seed: int | None = None):
        self.config = config
        self.vocabs = vocabs
        self.dtype = np.dtype(config.dtype)
        self.params = ad.ParamStore()
        rng = np.random.default_rng(config.seed if seed is None else seed)
        self._init_params(rng)

    # ------------------------------------------------------------ parameters

    def _init_params(self, rng):
        c = self.config
        E, H, D, A = c.embed_dim, c.hidden_dim, c.decoder_dim, c.attention_dim
        V = len(self.vocabs.comment)
        shapes: dict[str, tuple] = {}
        for stream in STREAMS:
            shapes[f"emb.{stream}"] = (len(self.vocabs.for_stream(stream)), E)
        shapes["emb.y"] = (V, E)
        for stream in STREAMS:
            for direction in ("fw", "bw"):
                p = f"enc.{stream}.{direction}"
                shapes[f"{p}.W_in"] = (E, 4 * H)
                shapes[f"{p}.W_h"] = (H, 4 * H)
                shapes[f"{p}.b"] = (4 * H,)
        shapes["sim.W"] = (2 * D, 1)
        shapes["fuse.W"] = (2 * D, D)
        shapes["fuse.b"] = (D,)
        if not c.tie_fusion:
            shapes["fuse_ctx.W"] = (2 * D, D)
            shapes["fuse_ctx.b"] = (D,)
        for stream in ATTENDED:
            p = f"att.{stream}"
            shapes[f"{p}.W_k"] = (D, A)
            shapes[f"{p}.W_q"] = (D, A)
            shapes[f"{p}.b"] = (A,)
            shapes[f"{p}.v"] = (A, 1)
        shapes["dec.W_in"] = (E, 4 * D)
        shapes["dec.W_h"] = (D, 4 * D)
        shapes["dec.b"] = (4 * D,)
        shapes["out.W_pre"] = (E + 2 * D, D)
        shapes["out.b_pre"] = (D,)
        shapes["out.W"] = (D, V)
        shapes["out.b"] = (V,)
        s = c.init_scale
        for name, shape in shapes.items():
            value = rng.uniform(-s, s, size=shape)
            if name.endswith(".b") and (name.startswith("enc.") or name.startswith("dec.")):
                size = shape[0] // 4
                value[size : 2 * size] += c.forget_bias
            self.params.add(name, value.astype(self.dtype))

    def encoder_param_names(self, stream: str) -> list[str]:
        return [n for n in self.params if n == f"emb.{stream}" or n.startswith(f"enc.{stream}.")]

    # --------------------------------------------------------------- helpers

    def _dropout(self, x: ad.Tensor, rng) -> ad.Tensor:
        p = self.config.dropout
        if rng is None or p == 0.0:
            return x
        keep = (rng.random(x.shape) >= p).astype(self.dtype) / (1.0 - p)
        return ad.dropout(x, keep)

    def _zeros(self, *shape) -> ad.Tensor:
        return ad.constant(np.zeros(shape, dtype=self.dtype))

    def _lstm_cell(self, xproj, h, c, W_h, size):
        gates = ad.add(xproj, ad.matmul(h, W_h))
        i = ad.sigmoid(ad.getitem(gates, (slice(None), slice(0, size))))
        f = ad.sigmoid(ad.getitem(gates, (slice(None), slice(size, 2 * size))))
        g = ad.tanh(ad.getitem(gates, (slice(None), slice(2 * size, 3 * size))))
        o = ad.sigmoid(ad.getitem(gates, (slice(None), slice(3 * size, 4 * size))))
        c_new = ad.add(ad.mul(f, c), ad.mul(i, g))
        h_new = ad.mul(o, ad.tanh(c_new))
        return h_new, c_new

    def _lstm_pass(self, emb, mask, prefix, reverse):
        P = self.params
        H = self.config.hidden_dim
        B, T = mask.shape
        xproj = ad.add(ad.matmul(emb, P[f"{prefix}.W_in"]), P[f"{prefix}.b"])
        h, c = self._zeros(B, H), self._zeros(B, H)
        outs = [None] * T
        for t in (range(T - 1, -1, -1) if reverse else range(T)):
            h_new, c_new = self._lstm_cell(ad.getitem(xproj, (slice(None), t)), h, c, P[f"{prefix}.W_h"], H)
            m = mask[:, t]
            if m.all():
                h, c = h_new, c_new
            else:
                # padded rows carry their state through unchanged
                keep = m[:, None].astype(self.dtype)
                h, c = ad.gate_blend(keep, h_new, h), ad.gate_blend(keep, c_new, c)
            outs[t] = h
        return outs, h

    # ------------------------------------------------------------ components

    def encode(self, ids: np.ndarray, mask: np.ndarray, stream: str, rng=None) -> EncoderOutputs:
        if ids.shape[1] == 0 or not mask.any(axis=1).all():
            raise ValueError(f"empty sequence in stream {stream!r}")
        emb = self._dropout(ad.embedding(self.params[f"emb.{stream}"], ids), rng)
        fw, fw_last = self._lstm_pass(emb, mask, f"enc.{stream}.fw", reverse=False)
        bw, bw_last = self._lstm_pass(emb, mask, f"enc.{stream}.bw", reverse=True)
        states = ad.concat([ad.stack(fw, axis=1), ad.stack(bw, axis=1)], axis=-1)
        return EncoderOutputs(states, ad.concat([fw_last, bw_last]), mask)

    def encode_all(self, batch: Batch, rng=None) -> dict[str, EncoderOutputs]:
        return {s: self.encode(batch.ids[s], batch.masks[s], s, rng) for s in STREAMS}

    def similarity(self, hx_final: ad.Tensor, hs_final: ad.Tensor) -> ad.Tensor:
        """(B, 1) gate in (0, 1)."""
        return ad.sigmoid(ad.matmul(ad.concat([hx_final, hs_final]), self.params["sim.W"]))

    def _fuse(self, a: ad.Tensor, b: ad.Tensor, context: bool) -> ad.Tensor:
        prefix = "fuse_ctx" if context and not self.config.tie_fusion else "fuse"
        return ad.add(ad.matmul(ad.concat([a, b]), self.params[f"{prefix}.W"]), self.params[f"{prefix}.b"])

    def init_decoder_state(self, hx_final, ht_final, hr_final, sim) -> ad.Tensor:
        """``h'_0 = h_c * (1 - sim) + h_r * sim`` with ``h_c = W_c [h_x; h_t] + b_c``."""
        return ad.gate_blend(sim, hr_final, self._fuse(hx_final, ht_final, context=False))

    def combine_context(self, cx, ct, cr, sim) -> ad.Tensor:
        return ad.gate_blend(sim, cr, self._fuse(cx, ct, context=True))

    def attention(self, prev_state: ad.Tensor, enc: EncoderOutputs, stream: str):
        """Additive attention of the previous decoder state over one stream.

        Returns ``(weights (B, T), context (B, 2H))``.
        """
        P = self.params
        if enc.keys is None:
            enc.keys = ad.matmul(enc.states, P[f"att.{stream}.W_k"])
        B, T, A = enc.keys.shape
        q = ad.add(ad.matmul(prev_state, P[f"att.{stream}.W_q"]), P[f"att.{stream}.b"])
        energy = ad.tanh(ad.add(enc.keys, ad.reshape(q, (B, 1, A))))
        scores = ad.reshape(ad.matmul(energy, P[f"att.{stream}.v"]), (B, T))
        weights = ad.softmax(scores, mask=enc.mask)
        ctx = ad.reshape(ad.matmul(ad.reshape(weights, (B, 1, T)), enc.states), (B, -1))
        return weights, ctx

    def decode_step(self, state, y_prev: np.ndarray, encs: dict[str, EncoderOutputs], sim, rng=None):
        """One decoder step.

        ``state`` is ``(h, c)`` of the decoder LSTM.  Returns
        ``(new_state, logits, info)`` where ``info`` carries the attention
        weights and the combined context.
        """
        P = self.params
        D = self.config.decoder_dim
        h_prev, c_prev = state
        emb = self._dropout(ad.embedding(P["emb.y"], y_prev), rng)
        weights, ctxs = {}, {}
        for stream in ATTENDED:
            weights[stream], ctxs[stream] = self.attention(h_prev, encs[stream], stream)
        xproj = ad.add(ad.matmul(emb, P["dec.W_in"]), P["dec.b"])
        h, c = self._lstm_cell(xproj, h_prev, c_prev, P["dec.W_h"], D)
        ctx = self.combine_context(ctxs["x"], ctxs["t"], ctxs["r"], sim)
        pre = ad.tanh(ad.add(ad.matmul(ad.concat([emb, h, ctx]), P["out.W_pre"]), P["out.b_pre"]))
        pre = self._dropout(pre, rng)
        logits = ad.add(ad.matmul(pre, P["out.W"]), P["out.b"])
        return (h, c), logits, {"weights": weights, "contexts": ctxs, "context": ctx}

    def start(self, batch: Batch, rng=None, sim_override: float | None = None):
        """Encode a batch; return ``(encs, sim, initial decoder state)``."""
        encs = self.encode_all(batch, rng)
        if sim_override is None:
            sim = self.similarity(encs["x"].final, encs["s"].final)
        else:
            sim = ad.constant(np.full((batch.size, 1), sim_override, dtype=self.dtype))
        h0 = self.init_decoder_state(encs["x"].final, encs["t"].final, encs["r"].final, sim)
        return encs, sim, (h0, self._zeros(batch.size, self.config.decoder_dim))

    def loss(self, batch: Batch, rng=None, sim_override: float | None = None):
        """Teacher-forced cross-entropy: per-sample token sums, averaged over the batch.

        Returns ``(loss tensor, per-sample losses as numpy)``.
        """
        if batch.y_in is None:
            raise ValueError("batch has no target comments")
        encs, sim, state = self.start(batch, rng, sim_override)
        steps = []
        for t in range(batch.y_in.shape[1]):
            state, logits, _ = self.decode_step(state, batch.y_in[:, t], encs, sim, rng)
            steps.append(logits)
        logits = ad.stack(steps, axis=1)
        weights = batch.y_mask.astype(self.dtype) / batch.size
        total = ad.cross_entropy(logits, batch.y_out, weights)
        logp = ad.log_softmax_np(logits.value)
        picked = np.take_along_axis(logp, batch.y_out[..., None], axis=-1)[..., 0]
        per_sample = -(picked * batch.y_mask).sum(axis=1)
        return total, per_sample

    # ----------------------------------------------------------- checkpoint

    def save(self, path, extra: dict | None = None):
        header = {"config": asdict(self.config), "vocabs": self.vocabs.to_dict(), **(extra or {})}
        self.params.save(path, header)

    @classmethod
    def load(cls, path) -> RefineModel:
        header, values = ad.ParamStore.read(path)
        model = cls(ModelConfig.from_dict(header["config"]), Vocabularies.from_dict(header["vocabs"]))
        missing = set(model.params) - set(values)
        if missing:
            raise ValueError(f"{path}: checkpoint lacks parameters {sorted(missing)}")
        model.params.restore(values)
        return model


def build_vocabularies(examples: Sequence[ModelInput], config: ModelConfig) -> Vocabularies:
    return Vocabularies(
        code=Vocabulary.build((ex.code for ex in examples), config.code_vocab),
        sbt=Vocabulary.build((ex.ast for ex in examples), config.sbt_vocab),
        comment=Vocabulary.build((ex.comment or [] for ex in examples), config.comment_vocab),
    )

