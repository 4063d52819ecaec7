"""Built-in micro tasks: linear regression, a tanh MLP, and a character LM.

Gradients are written by hand and evaluated with fixed-order arithmetic
(non-BLAS einsum plus aligned power-of-two tree sums over micro-blocks),
so that a data-parallel mean over M replicas is bit-identical to the
single-process computation whenever batch and replica counts are powers
of two. Batch contents are addressed by (data stream, step), never by a
sequential generator, which keeps every replica's shard reproducible.
"""

from __future__ import annotations

import math

import numpy as np

from . import corpus
from .rng import RoundRng, data_stream
from .tensor import Tensor

MICROBATCH = 16  # leaf size of the gradient accumulation tree


def _mm(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Deterministic matrix product (fixed-order loops, no BLAS threading)."""
    return np.einsum("ij,jk->ik", a, b, optimize=False)


def _tree_sum(blocks: list) -> list[np.ndarray]:
    """Pairwise tree over per-block gradient lists, split at the midpoint."""
    if len(blocks) == 1:
        return blocks[0]
    half = len(blocks) // 2
    left = _tree_sum(blocks[:half])
    right = _tree_sum(blocks[half:])
    return [l + r for l, r in zip(left, right)]


def _block_slices(n: int):
    if n % MICROBATCH:
        raise ValueError(f"batch size must be a multiple of {MICROBATCH}")
    return [slice(i, i + MICROBATCH) for i in range(0, n, MICROBATCH)]


def _accumulate(xs, ys, block_fn) -> tuple[float, list[np.ndarray]]:
    """Sum block losses/grads over aligned micro-blocks, then scale by 1/n."""
    losses, grads = [], []
    for sl in _block_slices(len(xs)):
        loss, g = block_fn(xs[sl], ys[sl])
        losses.append(np.float32(loss))
        grads.append(g)
    total = _tree_sum([[l] for l in losses])[0]
    summed = _tree_sum(grads)
    inv = np.float32(1.0 / len(xs))  # power-of-two batch: exact scaling
    return float(total * inv), [g * inv for g in summed]


class LinearRegressionTask:
    """Least squares on a stream of fresh synthetic examples."""

    name = "linreg"

    def __init__(self, dim: int = 16, batch: int = 64, noise: float = 0.05,
                 data_seed: int = 11):
        self.dim = dim
        self.batch = batch
        self.noise = noise
        self.data_rng = RoundRng(data_seed)
        self.w_true = self.data_rng.normal_array(data_stream(1), 0, dim).astype(np.float32)
        self._val = self._examples(np.arange(2**40, 2**40 + 512))

    def _examples(self, ids: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        flat = (ids[:, None] * self.dim + np.arange(self.dim)).ravel()
        x = self.data_rng.uniform_array(data_stream(2), 0, flat)
        x = (x.reshape(len(ids), self.dim) * 2.0 - 1.0).astype(np.float32)
        eps = self.data_rng.normal_array(data_stream(3), 0, len(ids)).astype(np.float32)
        y = x @ self.w_true + np.float32(self.noise) * eps
        return x, y.astype(np.float32)

    def init_params(self, storage: str) -> list[Tensor]:
        return [Tensor.zeros((self.dim,), storage)]

    def make_batches(self, step: int, m: int) -> list[tuple[np.ndarray, np.ndarray]]:
        ids = np.arange(step * self.batch, (step + 1) * self.batch, dtype=np.uint64)
        x, y = self._examples(ids)
        shard = self.batch // m
        return [(x[i * shard:(i + 1) * shard], y[i * shard:(i + 1) * shard])
                for i in range(m)]

    def grad_fn(self, params: list[Tensor], batch) -> tuple[float, list[Tensor]]:
        x, y = batch
        w = params[0].np

        def block(xb, yb):
            r = xb @ w - yb
            loss = np.float32(0.5) * np.float32((r * r).sum())
            gw = np.einsum("i,ij->j", r, xb, optimize=False)
            return loss, [gw]

        loss, grads = _accumulate(x, y, block)
        return loss, [Tensor.from_array(grads[0])]

    def val_loss(self, params: list[Tensor]) -> float:
        x, y = self._val
        r = x @ params[0].np - y
        return float(0.5 * (r * r).mean())


class MlpTask:
    """One-hidden-layer tanh regressor fitting a fixed tanh teacher."""

    name = "mlp"

    def __init__(self, dim: int = 8, hidden: int = 32, batch: int = 64,
                 data_seed: int = 13):
        self.dim = dim
        self.hidden = hidden
        self.batch = batch
        self.data_rng = RoundRng(data_seed)
        self.w_teacher = self.data_rng.normal_array(data_stream(4), 0, dim).astype(np.float32)
        self._val = self._examples(np.arange(2**40, 2**40 + 512))

    def _examples(self, ids: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        flat = (ids[:, None] * self.dim + np.arange(self.dim)).ravel()
        u = self.data_rng.uniform_array(data_stream(5), 0, flat)
        x = (u.reshape(len(ids), self.dim) * 2.0 - 1.0).astype(np.float32)
        y = np.tanh(x @ self.w_teacher).astype(np.float32)
        return x, y

    def init_params(self, storage: str) -> list[Tensor]:
        n1 = self.hidden * self.dim
        w1 = self.data_rng.normal_array(data_stream(6), 0, n1).astype(np.float32)
        w1 = (w1 / math.sqrt(self.dim)).reshape(self.hidden, self.dim)
        w2 = self.data_rng.normal_array(data_stream(7), 0, self.hidden).astype(np.float32)
        w2 = w2 / math.sqrt(self.hidden)
        return [
            Tensor.from_array(w1, storage),
            Tensor.zeros((self.hidden,), storage),
            Tensor.from_array(w2, storage),
            Tensor.zeros((1,), storage),
        ]

    def make_batches(self, step: int, m: int) -> list[tuple[np.ndarray, np.ndarray]]:
        ids = np.arange(step * self.batch, (step + 1) * self.batch, dtype=np.uint64)
        x, y = self._examples(ids)
        shard = self.batch // m
        return [(x[i * shard:(i + 1) * shard], y[i * shard:(i + 1) * shard])
                for i in range(m)]

    def _forward(self, params, x):
        w1, b1, w2, b2 = (p.np for p in params)
        z1 = _mm(x, w1.T) + b1
        a1 = np.tanh(z1)
        yhat = a1 @ w2 + b2[0]
        return a1, yhat

    def grad_fn(self, params: list[Tensor], batch) -> tuple[float, list[Tensor]]:
        x, y = batch
        w1, b1, w2, b2 = (p.np for p in params)

        def block(xb, yb):
            z1 = _mm(xb, w1.T) + b1
            a1 = np.tanh(z1)
            yhat = np.einsum("ij,j->i", a1, w2, optimize=False) + b2[0]
            r = (yhat - yb).astype(np.float32)
            loss = np.float32(0.5) * np.float32((r * r).sum())
            gw2 = np.einsum("i,ij->j", r, a1, optimize=False)
            gb2 = np.array([r.sum()], dtype=np.float32)
            da1 = r[:, None] * w2[None, :]
            dz1 = (da1 * (1.0 - a1 * a1)).astype(np.float32)
            gw1 = np.einsum("ih,id->hd", dz1, xb, optimize=False)
            gb1 = dz1.sum(axis=0)
            return loss, [gw1, gb1, gw2, gb2]

        loss, grads = _accumulate(x, y, block)
        return loss, [Tensor.from_array(g) for g in grads]

    def val_loss(self, params: list[Tensor]) -> float:
        x, y = self._val
        _, yhat = self._forward(params, x)
        r = yhat - y
        return float(0.5 * (r * r).mean())


class CharLmTask:
    """Fixed-context character model: embed, tanh hidden layer, softmax."""

    name = "char_lm"

    def __init__(self, context: int = 8, embed: int = 12, hidden: int = 96,
                 batch: int = 64, corpus_bytes: int = 1_000_000, data_seed: int = 17):
        self.context = context
        self.embed = embed
        self.hidden = hidden
        self.batch = batch
        self.data_rng = RoundRng(data_seed)
        self.train_ids, self.val_ids, self.alphabet = corpus.load_split(corpus_bytes)
        self.vocab = len(self.alphabet)
        val_starts = np.arange(0, len(self.val_ids) - context - 1, 97)[:512]
        self._val = self._window(self.val_ids, val_starts)

    def param_count(self) -> int:
        v, e, k, h = self.vocab, self.embed, self.context, self.hidden
        return v * e + h * (k * e) + h + v * h + v

    def _window(self, ids: np.ndarray, starts: np.ndarray):
        ctx = ids[starts[:, None] + np.arange(self.context)]
        tgt = ids[starts + self.context]
        return ctx, tgt

    def init_params(self, storage: str) -> list[Tensor]:
        v, e, k, h = self.vocab, self.embed, self.context, self.hidden

        def normal(tag, n, scale):
            z = self.data_rng.normal_array(data_stream(tag), 0, n).astype(np.float32)
            return z * np.float32(scale)

        emb = normal(8, v * e, 0.1).reshape(v, e)
        w1 = normal(9, h * k * e, 1.0 / math.sqrt(k * e)).reshape(h, k * e)
        w2 = normal(10, v * h, 1.0 / math.sqrt(h)).reshape(v, h)
        return [
            Tensor.from_array(emb, storage),
            Tensor.from_array(w1, storage),
            Tensor.zeros((h,), storage),
            Tensor.from_array(w2, storage),
            Tensor.zeros((v,), storage),
        ]

    def make_batches(self, step: int, m: int):
        span = len(self.train_ids) - self.context - 1
        draws = self.data_rng.u64_array(data_stream(11), step, np.arange(self.batch))
        starts = (draws % np.uint64(span)).astype(np.int64)
        ctx, tgt = self._window(self.train_ids, starts)
        shard = self.batch // m
        return [(ctx[i * shard:(i + 1) * shard], tgt[i * shard:(i + 1) * shard])
                for i in range(m)]

    def _logits(self, params, ctx):
        emb, w1, b1, w2, b2 = (p.np for p in params)
        flat = emb[ctx].reshape(len(ctx), self.context * self.embed)
        a1 = np.tanh(_mm(flat, w1.T) + b1)
        return a1, flat, _mm(a1, w2.T) + b2

    @staticmethod
    def _softmax_ce(logits, tgt):
        z = logits - logits.max(axis=1, keepdims=True)
        ez = np.exp(z)
        p = ez / ez.sum(axis=1, keepdims=True)
        nll = -np.log(np.maximum(p[np.arange(len(tgt)), tgt], 1e-30))
        return p.astype(np.float32), nll.astype(np.float32)

    def grad_fn(self, params: list[Tensor], batch) -> tuple[float, list[Tensor]]:
        ctx_all, tgt_all = batch
        emb, w1, b1, w2, b2 = (p.np for p in params)

        def block(ctx, tgt):
            a1, flat, logits = self._logits(params, ctx)
            p, nll = self._softmax_ce(logits, tgt)
            loss = np.float32(nll.sum())
            dlogits = p
            dlogits[np.arange(len(tgt)), tgt] -= 1.0
            gw2 = np.einsum("iv,ih->vh", dlogits, a1, optimize=False)
            gb2 = dlogits.sum(axis=0)
            da1 = np.einsum("iv,vh->ih", dlogits, w2, optimize=False)
            dz1 = (da1 * (1.0 - a1 * a1)).astype(np.float32)
            gw1 = np.einsum("ih,if->hf", dz1, flat, optimize=False)
            gb1 = dz1.sum(axis=0)
            dflat = np.einsum("ih,hf->if", dz1, w1, optimize=False)
            demb = np.zeros_like(emb)
            np.add.at(demb, ctx.ravel(),
                      dflat.reshape(len(ctx) * self.context, self.embed))
            return loss, [demb, gw1, gb1, gw2, gb2]

        loss, grads = _accumulate(ctx_all, tgt_all, block)
        return loss, [Tensor.from_array(g) for g in grads]

    def val_loss(self, params: list[Tensor]) -> float:
        ctx, tgt = self._val
        _, _, logits = self._logits(params, ctx)
        _, nll = self._softmax_ce(logits, tgt)
        return float(nll.mean())


TASKS = {"linreg": LinearRegressionTask, "mlp": MlpTask, "char_lm": CharLmTask}


def make_task(name: str, **kwargs):
    if name not in TASKS:
        raise ValueError(f"unknown task {name!r}; choose from {sorted(TASKS)}")
    return TASKS[name](**kwargs)
