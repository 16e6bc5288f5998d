"""Sequence-model building blocks: embeddings, attention (full and
sparse-query), layer norm, feed-forward, encoder/decoder stacks.

All parameters are float64 Tensors; initialization is driven by an
explicit numpy Generator so whole training runs are reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .tensor import Tensor


@dataclass
class AttentionConfig:
    d_model: int = 32
    heads: int = 4
    sampling_factor: int = 5   # c_s: top-u = c_s * ceil(ln L)
    dropout: float = 0.0

    def __post_init__(self):
        if self.d_model % self.heads != 0:
            raise ValueError("d_model must be divisible by heads")

    @property
    def d_step(self) -> int:
        return self.d_model // self.heads

    def top_u(self, length: int) -> int:
        u = self.sampling_factor * int(np.ceil(np.log(max(length, 2))))
        return max(1, min(u, length))


class Module:
    def parameters(self) -> list[Tensor]:
        out = []
        for v in vars(self).values():
            if isinstance(v, Tensor) and v.requires_grad:
                out.append(v)
            elif isinstance(v, Module):
                out.extend(v.parameters())
            elif isinstance(v, (list, tuple)):
                for item in v:
                    if isinstance(item, Module):
                        out.extend(item.parameters())
                    elif isinstance(item, Tensor) and item.requires_grad:
                        out.append(item)
        return out

    def named_parameters(self, prefix="") -> list[tuple[str, Tensor]]:
        out = []
        for k, v in vars(self).items():
            name = f"{prefix}{k}"
            if isinstance(v, Tensor) and v.requires_grad:
                out.append((name, v))
            elif isinstance(v, Module):
                out.extend(v.named_parameters(name + "."))
            elif isinstance(v, (list, tuple)):
                for i, item in enumerate(v):
                    if isinstance(item, Module):
                        out.extend(item.named_parameters(f"{name}.{i}."))
                    elif isinstance(item, Tensor) and item.requires_grad:
                        out.append((f"{name}.{i}", item))
        return out


class Linear(Module):
    def __init__(self, d_in: int, d_out: int, rng: np.random.Generator, bias=True):
        scale = 1.0 / np.sqrt(d_in)
        self.w = Tensor(rng.uniform(-scale, scale, (d_in, d_out)), requires_grad=True)
        self.b = Tensor(np.zeros(d_out), requires_grad=True) if bias else None

    def __call__(self, x: Tensor) -> Tensor:
        out = T.matmul(x, self.w)
        if self.b is not None:
            out = T.add(out, self.b)
        return out


class Embedding(Module):
    def __init__(self, vocab: int, d_model: int, rng: np.random.Generator):
        self.table = Tensor(rng.normal(0, 0.02, (vocab, d_model)), requires_grad=True)

    def __call__(self, idx) -> Tensor:
        return T.take_rows(self.table, np.asarray(idx, dtype=np.intp))


class LayerNorm(Module):
    def __init__(self, d_model: int, eps: float = 1e-6):
        self.gamma = Tensor(np.ones(d_model), requires_grad=True)
        self.beta = Tensor(np.zeros(d_model), requires_grad=True)
        self.eps = eps

    def __call__(self, x: Tensor) -> Tensor:
        mu = T.tmean(x, axis=-1, keepdims=True)
        centered = T.add(x, T.mul(mu, -1.0))
        var = T.tmean(T.mul(centered, centered), axis=-1, keepdims=True)
        inv = T.power(T.add(var, self.eps), -0.5)
        return T.add(T.mul(T.mul(centered, inv), self.gamma), self.beta)


class FeedForward(Module):
    def __init__(self, d_model: int, d_ff: int, rng: np.random.Generator):
        self.fc1 = Linear(d_model, d_ff, rng)
        self.fc2 = Linear(d_ff, d_model, rng)

    def __call__(self, x: Tensor) -> Tensor:
        return self.fc2(T.relu(self.fc1(x)))


def sinusoidal_encoding(length: int, d_model: int, offset: int = 0) -> np.ndarray:
    """Classic sin/cos positional table for local positions."""
    pos = np.arange(offset, offset + length, dtype=np.float64)[:, None]
    i = np.arange(d_model, dtype=np.float64)[None, :]
    angle = pos / np.power(10000.0, (2 * (i // 2)) / d_model)
    enc = np.zeros((length, d_model))
    enc[:, 0::2] = np.sin(angle[:, 0::2])
    enc[:, 1::2] = np.cos(angle[:, 1::2])
    return enc


def _split_heads(x: Tensor, heads: int) -> Tensor:
    # (B, L, D) -> (B, H, L, d_step)
    b, l, d = x.shape
    return T.transpose(T.reshape(x, (b, l, heads, d // heads)), (0, 2, 1, 3))


def _merge_heads(x: Tensor) -> Tensor:
    b, h, l, d = x.shape
    return T.reshape(T.transpose(x, (0, 2, 1, 3)), (b, l, h * d))


def attention(q: Tensor, k: Tensor, v: Tensor, cfg: AttentionConfig,
              mask: np.ndarray | None = None) -> Tensor:
    """Scaled dot-product attention over (B, H, L, d_step) inputs.

    `mask` is additive (0 where allowed, large negative where blocked).
    """
    if q.shape[-1] != k.shape[-1] or k.shape[-2] != v.shape[-2]:
        raise ValueError(f"attention shape mismatch: q{q.shape} k{k.shape} v{v.shape}")
    scores = T.mul(T.matmul(q, T.transpose(k, (0, 1, 3, 2))), 1.0 / np.sqrt(cfg.d_step))
    if mask is not None:
        scores = T.add(scores, Tensor(mask))
    return T.matmul(T.softmax(scores, axis=-1), v)


def sparsity_scores(scores: np.ndarray) -> np.ndarray:
    """Dominance proxy per query row: max score minus mean score."""
    return scores.max(axis=-1) - scores.mean(axis=-1)


def select_dominant(scores: np.ndarray, top_u: int) -> np.ndarray:
    """Indices of the top-u queries by sparsity proxy.

    Ties select the lowest query indices (stable ordering).
    """
    m = sparsity_scores(scores)
    order = np.argsort(-m, axis=-1, kind="stable")
    return np.sort(order[..., :top_u], axis=-1)


def probsparse_attention(q: Tensor, k: Tensor, v: Tensor, cfg: AttentionConfig,
                         top_u: int | None = None) -> Tensor:
    """Sparse-query attention: full softmax rows only for dominant queries.

    Lazy queries emit the mean of V, which equals a uniform (all-zero
    score) softmax row; that lets the whole op stay batched: the raw
    score matrix is multiplied by a {0,1} row mask before the softmax.
    Query selection is discrete and carries no gradient.
    """
    if q.shape[-1] != k.shape[-1] or k.shape[-2] != v.shape[-2]:
        raise ValueError(f"attention shape mismatch: q{q.shape} k{k.shape} v{v.shape}")
    l_q = q.shape[-2]
    if top_u is None:
        top_u = cfg.top_u(l_q)
    if not 1 <= top_u <= l_q:
        raise ValueError(f"top_u={top_u} outside [1, {l_q}]")
    raw = (q.data @ np.swapaxes(k.data, -1, -2)) / np.sqrt(cfg.d_step)
    sel = select_dominant(raw, top_u)
    row_mask = np.zeros(raw.shape[:-1] + (1,))
    np.put_along_axis(row_mask[..., 0], sel, 1.0, axis=-1)
    scores = T.mul(T.matmul(q, T.transpose(k, (0, 1, 3, 2))), 1.0 / np.sqrt(cfg.d_step))
    masked = T.mul(scores, Tensor(row_mask))
    return T.matmul(T.softmax(masked, axis=-1), v)


class MultiHeadAttention(Module):
    def __init__(self, cfg: AttentionConfig, rng: np.random.Generator, sparse=False):
        d = cfg.d_model
        self.cfg = cfg
        self.sparse = sparse
        self.wq = Linear(d, d, rng)
        self.wk = Linear(d, d, rng)
        self.wv = Linear(d, d, rng)
        self.wo = Linear(d, d, rng)

    def __call__(self, x_q: Tensor, x_kv: Tensor, mask: np.ndarray | None = None,
                 rng: np.random.Generator | None = None, train=False) -> Tensor:
        q = _split_heads(self.wq(x_q), self.cfg.heads)
        k = _split_heads(self.wk(x_kv), self.cfg.heads)
        v = _split_heads(self.wv(x_kv), self.cfg.heads)
        if self.sparse and mask is None:
            ctx = probsparse_attention(q, k, v, self.cfg)
        else:
            ctx = attention(q, k, v, self.cfg, mask=mask)
        out = self.wo(_merge_heads(ctx))
        return T.dropout(out, self.cfg.dropout, rng, train)


def halve_length(x: Tensor) -> Tensor:
    """Distillation pool: pairwise mean along the time axis, output ceil(L/2)."""
    b, l, d = x.shape
    if l % 2 == 1:
        x = T.pad_last_rows(x, 1)
        l += 1
    pairs = T.reshape(x, (b, l // 2, 2, d))
    return T.tmean(pairs, axis=2)


class EncoderLayer(Module):
    def __init__(self, cfg: AttentionConfig, d_ff: int, rng, sparse=True, distill=True):
        self.attn = MultiHeadAttention(cfg, rng, sparse=sparse)
        self.ff = FeedForward(cfg.d_model, d_ff, rng)
        self.ln1 = LayerNorm(cfg.d_model)
        self.ln2 = LayerNorm(cfg.d_model)
        self.distill = distill

    def __call__(self, x: Tensor, rng=None, train=False) -> Tensor:
        x = self.ln1(T.add(x, self.attn(x, x, rng=rng, train=train)))
        x = self.ln2(T.add(x, self.ff(x)))
        if self.distill:
            x = halve_length(x)
        return x


class DecoderLayer(Module):
    def __init__(self, cfg: AttentionConfig, d_ff: int, rng):
        self.self_attn = MultiHeadAttention(cfg, rng)
        self.cross_attn = MultiHeadAttention(cfg, rng)
        self.ff = FeedForward(cfg.d_model, d_ff, rng)
        self.ln1 = LayerNorm(cfg.d_model)
        self.ln2 = LayerNorm(cfg.d_model)
        self.ln3 = LayerNorm(cfg.d_model)

    def __call__(self, x: Tensor, memory: Tensor, causal_mask: np.ndarray,
                 rng=None, train=False) -> Tensor:
        x = self.ln1(T.add(x, self.self_attn(x, x, mask=causal_mask, rng=rng, train=train)))
        x = self.ln2(T.add(x, self.cross_attn(x, memory, rng=rng, train=train)))
        return self.ln3(T.add(x, self.ff(x)))


def causal_mask(length: int) -> np.ndarray:
    m = np.triu(np.ones((length, length)), k=1) * -1e9
    return m[None, None, :, :]


def cross_entropy(logits: Tensor, labels: np.ndarray) -> Tensor:
    """Mean token-level cross entropy; logits (N, V), labels (N,)."""
    n = logits.shape[0]
    probs = T.softmax(logits, axis=-1)
    onehot = np.zeros(logits.shape)
    onehot[np.arange(n), np.asarray(labels, dtype=np.intp)] = 1.0
    picked = T.tsum(T.mul(T.log(T.add(probs, 1e-12)), Tensor(onehot)))
    return T.mul(picked, -1.0 / n)


def mse(pred: Tensor, target: np.ndarray) -> Tensor:
    diff = T.add(pred, Tensor(-np.asarray(target, dtype=np.float64)))
    return T.tmean(T.mul(diff, diff))
