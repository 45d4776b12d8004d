"""Small dense reverse-mode autodiff on top of numpy.

Operations record themselves onto the :class:`Tape` that is active in the
current thread.  Outside a tape the same functions just compute values, which
is what inference uses.

    with Tape() as tape:
        loss = ad.sum(ad.sigmoid(w))
    tape.backward(loss)          # gradients accumulate into w.grad
"""

from __future__ import annotations

import json
import struct
import threading
from typing import Callable, Iterable, Sequence

import numpy as np

_local = threading.local()


class Tensor:
    __slots__ = ("value", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, value, requires_grad: bool = False):
        self.value = np.asarray(value)
        self.grad = None
        self.requires_grad = requires_grad
        self._parents: tuple = ()
        self._backward: Callable | None = None

    @property
    def shape(self):
        return self.value.shape

    def __repr__(self):
        return f"Tensor(shape={self.value.shape}, requires_grad={self.requires_grad})"


class Parameter(Tensor):
    """Leaf tensor whose gradient accumulates across backward passes."""

    __slots__ = ()

    def __init__(self, value):
        super().__init__(value, requires_grad=True)
        self.grad = np.zeros_like(self.value)

    def zero_grad(self):
        self.grad = np.zeros_like(self.value)


class Tape:
    """Records nodes in creation order, which is already a topological order."""

    def __init__(self):
        self.nodes: list[Tensor] = []

    def __enter__(self):
        stack = getattr(_local, "stack", None)
        if stack is None:
            stack = _local.stack = []
        stack.append(self)
        return self

    def __exit__(self, *exc):
        _local.stack.pop()
        return False

    def backward(self, loss: Tensor):
        if loss.value.size != 1:
            raise ValueError("backward expects a scalar loss")
        loss.grad = np.ones_like(loss.value)
        owned: set[int] = set()  # ids of tensors whose grad array we allocated
        for node in reversed(self.nodes):
            g = node.grad
            if g is None:
                continue
            parent_grads = node._backward(g)
            for parent, pg in zip(node._parents, parent_grads):
                if pg is None or not parent.requires_grad:
                    continue
                _accumulate(parent, pg, owned)
            if not isinstance(node, Parameter):
                node.grad = None
        self.nodes.clear()


class _Scatter:
    """Gradient that only touches ``grad[key]``; avoids dense temporaries."""

    __slots__ = ("key", "value", "fancy")

    def __init__(self, key, value, fancy: bool = False):
        self.key = key
        self.value = value
        self.fancy = fancy


def _accumulate(t: Tensor, pg, owned: set[int]):
    if isinstance(pg, _Scatter):
        if t.grad is None:
            t.grad = np.zeros(t.value.shape, dtype=pg.value.dtype)
        elif not isinstance(t, Parameter) and id(t) not in owned:
            t.grad = t.grad.copy()
        owned.add(id(t))
        if pg.fancy:
            np.add.at(t.grad, pg.key, pg.value)
        else:
            t.grad[pg.key] += pg.value
        return
    if t.grad is None:
        t.grad = pg
    elif isinstance(t, Parameter) or id(t) in owned:
        t.grad += pg
    else:
        t.grad = t.grad + pg
        owned.add(id(t))


def current_tape() -> Tape | None:
    stack = getattr(_local, "stack", None)
    return stack[-1] if stack else None


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(value, parents: Sequence[Tensor], backward: Callable) -> Tensor:
    out = Tensor(value)
    tape = current_tape()
    if tape is not None and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward
        tape.nodes.append(out)
    return out


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum ``g`` down to ``shape`` after numpy broadcasting."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


# ---------------------------------------------------------------- primitives


def constant(value, dtype=None) -> Tensor:
    return Tensor(np.asarray(value, dtype=dtype))


def matmul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    av, bv = a.value, b.value

    def backward(g):
        ga = gb = None
        if a.requires_grad:
            ga = _unbroadcast(g @ np.swapaxes(bv, -1, -2), av.shape)
        if b.requires_grad:
            if av.ndim == 2:
                gb = av.T @ g
            else:
                gb = _unbroadcast(np.swapaxes(av, -1, -2) @ g, bv.shape)
        return ga, gb

    return _make(av @ bv, (a, b), backward)


def add(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    sa, sb = a.value.shape, b.value.shape
    return _make(
        a.value + b.value,
        (a, b),
        lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)),
    )


def mul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    av, bv = a.value, b.value
    return _make(
        av * bv,
        (a, b),
        lambda g: (_unbroadcast(g * bv, av.shape), _unbroadcast(g * av, bv.shape)),
    )


def concat(tensors: Sequence, axis: int = -1) -> Tensor:
    tensors = [_as_tensor(t) for t in tensors]
    sizes = [t.value.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def backward(g):
        return tuple(np.split(g, splits, axis=axis))

    return _make(np.concatenate([t.value for t in tensors], axis=axis), tensors, backward)


def stack(tensors: Sequence, axis: int = 0) -> Tensor:
    tensors = [_as_tensor(t) for t in tensors]

    def backward(g):
        return tuple(np.moveaxis(g, axis, 0))

    return _make(np.stack([t.value for t in tensors], axis=axis), tensors, backward)


def getitem(x, key) -> Tensor:
    """Basic (non-fancy) indexing."""
    x = _as_tensor(x)
    return _make(x.value[key], (x,), lambda g: (_Scatter(key, g),))


def reshape(x, shape) -> Tensor:
    x = _as_tensor(x)
    old = x.value.shape
    return _make(x.value.reshape(shape), (x,), lambda g: (g.reshape(old),))


def sum(x) -> Tensor:  # noqa: A001 - mirrors numpy naming
    x = _as_tensor(x)
    shape = x.value.shape
    return _make(np.sum(x.value), (x,), lambda g: (np.broadcast_to(g, shape).copy(),))


def sigmoid(x) -> Tensor:
    x = _as_tensor(x)
    # split by sign so neither branch overflows
    v = x.value
    out = np.empty_like(v)
    pos = v >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-v[pos]))
    ev = np.exp(v[~pos])
    out[~pos] = ev / (1.0 + ev)
    return _make(out, (x,), lambda g: (g * out * (1.0 - out),))


def tanh(x) -> Tensor:
    x = _as_tensor(x)
    out = np.tanh(x.value)
    return _make(out, (x,), lambda g: (g * (1.0 - out * out),))


def softmax(x, mask=None) -> Tensor:
    """Softmax over the last axis.

    ``mask`` (same shape, truthy = keep) sends masked logits to -inf before
    normalising.  Every row needs at least one unmasked entry.
    """
    x = _as_tensor(x)
    v = x.value
    if mask is not None:
        v = np.where(mask, v, -np.inf)
    shifted = v - v.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=-1, keepdims=True)

    def backward(g):
        return (out * (g - (g * out).sum(axis=-1, keepdims=True)),)

    return _make(out, (x,), backward)


def embedding(table, ids) -> Tensor:
    """Row gather: ``table[ids]`` for an integer array ``ids`` of any shape."""
    table = _as_tensor(table)
    ids = np.asarray(ids)
    return _make(table.value[ids], (table,), lambda g: (_Scatter(ids, g, fancy=True),))


def dropout(x, mask) -> Tensor:
    """Multiply by an externally drawn, already rescaled keep-mask."""
    if mask is None:
        return _as_tensor(x)
    return mul(x, constant(mask))


def gate_blend(a, x, y) -> Tensor:
    """``a * x + (1 - a) * y`` with ``a`` broadcast against ``x``/``y``."""
    a, x, y = _as_tensor(a), _as_tensor(x), _as_tensor(y)
    av, xv, yv = a.value, x.value, y.value
    out = av * xv + (1.0 - av) * yv

    def backward(g):
        return (
            _unbroadcast(g * (xv - yv), av.shape),
            _unbroadcast(g * av, xv.shape),
            _unbroadcast(g * (1.0 - av), yv.shape),
        )

    return _make(out, (a, x, y), backward)


def log_softmax_np(v: np.ndarray) -> np.ndarray:
    shifted = v - v.max(axis=-1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


def cross_entropy(logits, targets, weights=None) -> Tensor:
    """Fused log-softmax + negative log-likelihood.

    ``targets`` has the shape of ``logits`` minus the last axis.  With
    ``weights=None`` the result is the mean over positions; otherwise it is
    ``sum(weights * nll)``, so padding is masked by a zero weight.
    """
    logits = _as_tensor(logits)
    v = logits.value
    targets = np.asarray(targets)
    vocab = v.shape[-1]
    if targets.size and (targets.min() < 0 or targets.max() >= vocab):
        raise IndexError(f"target id out of range for vocabulary of size {vocab}")
    if weights is None:
        weights = np.full(targets.shape, 1.0 / max(targets.size, 1), dtype=v.dtype)
    weights = np.asarray(weights, dtype=v.dtype)
    logp = log_softmax_np(v)
    picked = np.take_along_axis(logp, targets[..., None], axis=-1)[..., 0]
    loss = -np.sum(weights * picked)

    def backward(g):
        probs = np.exp(logp)
        onehot = np.zeros_like(probs)
        np.put_along_axis(onehot, targets[..., None], 1.0, axis=-1)
        return (g * weights[..., None] * (probs - onehot),)

    return _make(np.asarray(loss), (logits,), backward)


# ---------------------------------------------------------------- parameters


class ParamStore:
    """Named parameters in insertion order."""

    MAGIC = b"EXGPARAM"
    VERSION = 1

    def __init__(self):
        self._params: dict[str, Parameter] = {}

    def add(self, name: str, value) -> Parameter:
        if name in self._params:
            raise KeyError(f"duplicate parameter {name!r}")
        p = Parameter(value)
        self._params[name] = p
        return p

    def __getitem__(self, name) -> Parameter:
        return self._params[name]

    def __contains__(self, name) -> bool:
        return name in self._params

    def __iter__(self):
        return iter(self._params)

    def __len__(self):
        return len(self._params)

    def items(self):
        return self._params.items()

    def zero_grad(self):
        for p in self._params.values():
            p.zero_grad()

    def grad_norm(self) -> float:
        return float(np.sqrt(np.sum([np.sum(p.grad * p.grad) for p in self._params.values()])))

    def snapshot(self) -> dict[str, np.ndarray]:
        return {k: p.value.copy() for k, p in self._params.items()}

    def restore(self, values: dict[str, np.ndarray]):
        for k, v in values.items():
            self._params[k].value = np.array(v, dtype=self._params[k].value.dtype)

    def save(self, path, header: dict | None = None):
        """Write a versioned little-endian checkpoint.

        Layout: magic, u32 version, u32 header length, UTF-8 JSON header,
        u32 entry count, then per entry: u32 name length, name, u32 ndim,
        u64 dims, float64 values.
        """
        blob = json.dumps(header or {}, sort_keys=True).encode("utf-8")
        with open(path, "wb") as fh:
            fh.write(self.MAGIC)
            fh.write(struct.pack("<II", self.VERSION, len(blob)))
            fh.write(blob)
            fh.write(struct.pack("<I", len(self._params)))
            for name, p in self._params.items():
                raw = name.encode("utf-8")
                fh.write(struct.pack("<I", len(raw)))
                fh.write(raw)
                fh.write(struct.pack("<I", p.value.ndim))
                fh.write(struct.pack(f"<{p.value.ndim}Q", *p.value.shape))
                fh.write(np.ascontiguousarray(p.value, dtype="<f8").tobytes())

    @staticmethod
    def read(path) -> tuple[dict, dict[str, np.ndarray]]:
        """Return ``(header, {name: array})`` from a checkpoint file."""
        with open(path, "rb") as fh:
            if fh.read(len(ParamStore.MAGIC)) != ParamStore.MAGIC:
                raise ValueError(f"{path}: not a parameter checkpoint")
            version, hlen = struct.unpack("<II", fh.read(8))
            if version != ParamStore.VERSION:
                raise ValueError(f"{path}: unsupported checkpoint version {version}")
            header = json.loads(fh.read(hlen).decode("utf-8"))
            (count,) = struct.unpack("<I", fh.read(4))
            values = {}
            for _ in range(count):
                (nlen,) = struct.unpack("<I", fh.read(4))
                name = fh.read(nlen).decode("utf-8")
                (ndim,) = struct.unpack("<I", fh.read(4))
                shape = struct.unpack(f"<{ndim}Q", fh.read(8 * ndim))
                n = int(np.prod(shape)) if ndim else 1
                values[name] = np.frombuffer(fh.read(8 * n), dtype="<f8").reshape(shape).copy()
        return header, values


def sgd_step(params: ParamStore | Iterable[Parameter], lr: float, clip_norm: float | None) -> float:
    """Clip by global gradient norm, take one SGD step, zero the gradients.

    Returns the pre-clipping global norm.
    """
    plist = list(params._params.values() if isinstance(params, ParamStore) else params)
    norm = float(np.sqrt(np.sum([np.sum(p.grad * p.grad) for p in plist])))
    scale = 1.0
    if clip_norm is not None and norm > clip_norm:
        scale = clip_norm / norm
    for p in plist:
        p.value = p.value - (lr * scale) * p.grad
        p.zero_grad()
    return norm
