"""Attention building blocks: linear/norm/mlp layers, multi-head
cross-attention, and the latent encoder (cross-attend then self-attend)."""

from __future__ import annotations

import math

import numpy as np

from .. import autodiff as ad
from ..autodiff import Parameters, Tensor

FF_MULT = 2  # feed-forward widening factor


def init_linear(p: Parameters, name: str, n_in: int, n_out: int, rng) -> None:
    bound = 1.0 / math.sqrt(n_in)
    p.add(f"{name}.W", rng.uniform(-bound, bound, size=(n_in, n_out)))
    p.add(f"{name}.b", np.zeros(n_out))


def linear(p: Parameters, name: str, x: Tensor) -> Tensor:
    w, b = p[f"{name}.W"], p[f"{name}.b"]
    if x.data.shape[-1] != w.data.shape[0]:
        raise ValueError(
            f"{name}: input shape {x.data.shape} incompatible with weight "
            f"{w.data.shape}"
        )
    return x @ w + b


def init_layer_norm(p: Parameters, name: str, dim: int) -> None:
    p.add(f"{name}.g", np.ones(dim))
    p.add(f"{name}.b", np.zeros(dim))


def layer_norm(p: Parameters, name: str, x: Tensor) -> Tensor:
    return ad.layer_norm_core(x) * p[f"{name}.g"] + p[f"{name}.b"]


def init_mlp(p: Parameters, prefix: str, dims: tuple[int, ...], rng) -> None:
    for i in range(len(dims) - 1):
        init_linear(p, f"{prefix}.fc{i}", dims[i], dims[i + 1], rng)


def mlp(p: Parameters, prefix: str, x: Tensor, n_layers: int, act=ad.relu) -> Tensor:
    """Stack of linears with an activation after every layer but the last."""
    for i in range(n_layers):
        x = linear(p, f"{prefix}.fc{i}", x)
        if i < n_layers - 1:
            x = act(x)
    return x


def sinusoidal_encoding(n_positions: int, dim: int) -> np.ndarray:
    """Standard transformer position encoding over integer indices."""
    pos = np.arange(n_positions, dtype=np.float64)[:, None]
    i = np.arange(dim, dtype=np.float64)[None, :]
    angle = pos / np.power(10000.0, (2.0 * np.floor(i / 2.0)) / dim)
    enc = np.where(i % 2 == 0, np.sin(angle), np.cos(angle))
    return enc


def init_attention_block(p: Parameters, prefix: str, dim: int, rng) -> None:
    init_layer_norm(p, f"{prefix}.ln_q", dim)
    init_layer_norm(p, f"{prefix}.ln_kv", dim)
    for name in ("q", "k", "v", "o"):
        init_linear(p, f"{prefix}.{name}", dim, dim, rng)


def attention_block(
    p: Parameters,
    prefix: str,
    q_in: Tensor,
    kv_in: Tensor,
    n_heads: int,
    return_weights: bool = False,
):
    """Pre-norm multi-head attention with residual connection.

    ``q_in`` is (Tq, D), ``kv_in`` is (Tk, D).  Per head: softmax(QK^T/sqrt(d))V,
    heads concatenated, output-projected, residual-added.
    """
    tq, dim = q_in.data.shape
    tk = kv_in.data.shape[0]
    if dim % n_heads:
        raise ValueError(f"dim {dim} not divisible by {n_heads} heads")
    dh = dim // n_heads

    qn = layer_norm(p, f"{prefix}.ln_q", q_in)
    kn = layer_norm(p, f"{prefix}.ln_kv", kv_in)
    q = linear(p, f"{prefix}.q", qn)
    k = linear(p, f"{prefix}.k", kn)
    v = linear(p, f"{prefix}.v", kn)

    def split_heads(x: Tensor, t: int) -> Tensor:
        return ad.transpose(ad.reshape(x, (t, n_heads, dh)), (1, 0, 2))

    qh = split_heads(q, tq)
    kh = split_heads(k, tk)
    vh = split_heads(v, tk)
    logits = (qh @ ad.transpose(kh, (0, 2, 1))) * (1.0 / math.sqrt(dh))
    if not np.all(np.isfinite(logits.data)):
        raise FloatingPointError("non-finite attention logits")
    weights = ad.softmax(logits, axis=-1)  # (H, Tq, Tk)
    ctx = weights @ vh
    merged = ad.reshape(ad.transpose(ctx, (1, 0, 2)), (tq, dim))
    out = linear(p, f"{prefix}.o", merged) + q_in
    if return_weights:
        return out, weights.data
    return out


def init_feed_forward(p: Parameters, prefix: str, dim: int, rng) -> None:
    init_layer_norm(p, f"{prefix}.ln", dim)
    init_linear(p, f"{prefix}.fc1", dim, FF_MULT * dim, rng)
    init_linear(p, f"{prefix}.fc2", FF_MULT * dim, dim, rng)


def feed_forward(p: Parameters, prefix: str, x: Tensor) -> Tensor:
    h = layer_norm(p, f"{prefix}.ln", x)
    h = ad.gelu(linear(p, f"{prefix}.fc1", h))
    return linear(p, f"{prefix}.fc2", h) + x


def init_perceiver(
    p: Parameters, prefix: str, dim: int, n_latents: int, n_layers: int, rng
) -> None:
    p.add(f"{prefix}.latents", rng.normal(0.0, 0.02, size=(n_latents, dim)))
    init_attention_block(p, f"{prefix}.cross", dim, rng)
    init_feed_forward(p, f"{prefix}.cross_ff", dim, rng)
    for i in range(n_layers):
        init_attention_block(p, f"{prefix}.self{i}", dim, rng)
        init_feed_forward(p, f"{prefix}.self{i}_ff", dim, rng)


def perceiver_encode(
    p: Parameters, prefix: str, tokens: Tensor, n_layers: int, n_heads: int
) -> Tensor:
    """Latents cross-attend to input tokens, then self-attend ``n_layers`` times.

    Output shape (n_latents, dim) regardless of the token count.
    """
    if tokens.data.shape[0] == 0:
        raise ValueError("perceiver_encode: empty input token set")
    x = attention_block(p, f"{prefix}.cross", p[f"{prefix}.latents"], tokens, n_heads)
    x = feed_forward(p, f"{prefix}.cross_ff", x)
    for i in range(n_layers):
        x = attention_block(p, f"{prefix}.self{i}", x, x, n_heads)
        x = feed_forward(p, f"{prefix}.self{i}_ff", x)
    return x
