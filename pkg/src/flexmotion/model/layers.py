"""Transformer building blocks expressed in the core op language.

Parameters live in a ParamStore under dotted name prefixes; forward
functions take a TensorBag so the same code path serves training (taped)
and inference (untaped).
"""

from __future__ import annotations

import numpy as np

from ..core import tensor as T
from ..core.params import ParamStore, TensorBag
from ..core.rng import RngStream


def init_linear(params: ParamStore, name: str, n_in: int, n_out: int,
                rng: RngStream, zero: bool = False, bias: bool = True) -> None:
    if zero:
        w = np.zeros((n_in, n_out))
    else:
        w = rng.normal((n_in, n_out)) / np.sqrt(n_in)
    params.add(f"{name}.w", w)
    if bias:
        params.add(f"{name}.b", np.zeros(n_out))


def linear(bag: TensorBag, name: str, x):
    out = T.matmul(x, bag[f"{name}.w"])
    b = bag.get(f"{name}.b")
    return out if b is None else out + b


def init_layer_norm(params: ParamStore, name: str, width: int) -> None:
    params.add(f"{name}.g", np.ones(width))
    params.add(f"{name}.b", np.zeros(width))


def layer_norm(bag: TensorBag, name: str, x, eps: float = 1e-6):
    mu = T.mean(x, axis=-1, keepdims=True)
    xc = x - mu
    var = T.mean(T.square(xc), axis=-1, keepdims=True)
    inv = 1.0 / T.sqrt(var + eps)
    return xc * inv * bag[f"{name}.g"] + bag[f"{name}.b"]


def init_attention(params: ParamStore, name: str, width: int,
                   rng: RngStream) -> None:
    # no key bias: scores are invariant to a shared key shift, which would
    # leave a parameter with a structurally zero gradient
    for part, bias in (("q", True), ("k", False), ("v", True), ("o", True)):
        init_linear(params, f"{name}.{part}", width, width, rng, bias=bias)


def attention(bag: TensorBag, name: str, x, heads: int):
    B, L, w = x.shape
    dh = w // heads
    scale = 1.0 / np.sqrt(dh)

    def split_heads(t):
        return T.transpose(T.reshape(t, (B, L, heads, dh)), (0, 2, 1, 3))

    q = split_heads(linear(bag, f"{name}.q", x))
    k = split_heads(linear(bag, f"{name}.k", x))
    v = split_heads(linear(bag, f"{name}.v", x))
    scores = T.matmul(q, T.transpose(k, (0, 1, 3, 2))) * scale
    att = T.softmax(scores, axis=-1)
    out = T.matmul(att, v)
    out = T.reshape(T.transpose(out, (0, 2, 1, 3)), (B, L, w))
    return linear(bag, f"{name}.o", out)


def init_block(params: ParamStore, name: str, width: int, mlp_ratio: int,
               rng: RngStream) -> None:
    init_layer_norm(params, f"{name}.ln1", width)
    init_attention(params, f"{name}.attn", width, rng)
    init_layer_norm(params, f"{name}.ln2", width)
    init_linear(params, f"{name}.mlp1", width, mlp_ratio * width, rng)
    init_linear(params, f"{name}.mlp2", mlp_ratio * width, width, rng)


def block(bag: TensorBag, name: str, x, heads: int):
    x = x + attention(bag, f"{name}.attn", layer_norm(bag, f"{name}.ln1", x), heads)
    h = T.silu(linear(bag, f"{name}.mlp1", layer_norm(bag, f"{name}.ln2", x)))
    return x + linear(bag, f"{name}.mlp2", h)


def init_stack(params: ParamStore, name: str, n_in: int, n_out: int,
               width: int, layers: int, mlp_ratio: int, rng: RngStream) -> None:
    init_linear(params, f"{name}.inp", n_in, width, rng)
    for i in range(layers):
        init_block(params, f"{name}.l{i}", width, mlp_ratio, rng)
    init_layer_norm(params, f"{name}.lnf", width)
    init_linear(params, f"{name}.out", width, n_out, rng)


def stack(bag: TensorBag, name: str, x, layers: int, heads: int,
          extra_token_bias=None):
    """Input projection + position code (+ optional per-sequence bias),
    `layers` blocks, final norm, output projection."""
    h = linear(bag, f"{name}.inp", x)
    L = h.shape[1]
    h = h + T.sinusoidal_embedding(np.arange(L), h.shape[2])[None, :, :]
    if extra_token_bias is not None:
        h = h + extra_token_bias
    for i in range(layers):
        h = block(bag, f"{name}.l{i}", h, heads)
    h = layer_norm(bag, f"{name}.lnf", h)
    return linear(bag, f"{name}.out", h)
