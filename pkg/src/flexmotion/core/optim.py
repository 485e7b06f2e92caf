"""AdamW with decoupled weight decay and bias correction."""

from __future__ import annotations

import numpy as np

from .params import ParamStore


class AdamWState:
    """First/second moment accumulators keyed by parameter name."""

    def __init__(self):
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}


def adamw_step(params: ParamStore, grads: ParamStore, lr: float,
               beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8,
               weight_decay: float = 0.0, t: int = 1,
               state: AdamWState | None = None) -> ParamStore:
    """One decoupled-weight-decay Adam update, in place; frozen entries untouched.

    `t` is the 1-based step index used for bias correction. Pass the same
    `state` across steps; a fresh one is created (and discarded) otherwise.
    """
    if t < 1:
        raise ValueError("step index t must be >= 1")
    if state is None:
        state = AdamWState()
    bc1 = 1.0 - beta1 ** t
    bc2 = 1.0 - beta2 ** t
    for name, p in params.items():
        if params.is_frozen(name):
            continue
        if name not in grads:
            raise ValueError(f"missing gradient for parameter '{name}'")
        g = grads[name]
        if g.shape != p.shape:
            raise ValueError(
                f"gradient shape {g.shape} does not match parameter "
                f"'{name}' of shape {p.shape}")
        m = state.m.get(name)
        if m is None:
            m = state.m[name] = np.zeros_like(p)
            state.v[name] = np.zeros_like(p)
        v = state.v[name]
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * g * g
        mhat = m / bc1
        vhat = v / bc2
        p -= lr * (mhat / (np.sqrt(vhat) + eps) + weight_decay * p)
    return params


class AdamW:
    """Stateful convenience wrapper tracking the step counter."""

    def __init__(self, lr: float, beta1: float = 0.9, beta2: float = 0.999,
                 eps: float = 1e-8, weight_decay: float = 0.0):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.weight_decay = weight_decay
        self.state = AdamWState()
        self.t = 0

    def step(self, params: ParamStore, grads: ParamStore) -> None:
        self.t += 1
        adamw_step(params, grads, self.lr, self.beta1, self.beta2, self.eps,
                   self.weight_decay, self.t, self.state)
