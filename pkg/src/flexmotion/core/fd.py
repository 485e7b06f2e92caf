"""Central finite-difference verification of reverse-mode gradients."""

from __future__ import annotations

import numpy as np

from .params import ParamStore, gradients, loss_value


def finite_diff_check(loss_fn, params: ParamStore, step: float = 1e-5) -> float:
    """Max relative error between reverse-mode and central-FD gradients.

    Every coordinate of every non-frozen parameter is perturbed by +-step.
    Relative error uses a max(|a|, |b|, 1e-12) denominator.
    """
    if step <= 0:
        raise ValueError("step must be positive")
    analytic = gradients(loss_fn, params)
    worst = 0.0
    for name, p in params.items():
        if params.is_frozen(name):
            continue
        ga = analytic[name]
        flat = p.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            f_plus = loss_value(loss_fn, params)
            flat[i] = orig - step
            f_minus = loss_value(loss_fn, params)
            flat[i] = orig
            fd = (f_plus - f_minus) / (2.0 * step)
            a = ga.reshape(-1)[i]
            denom = max(abs(a), abs(fd), 1e-12)
            err = abs(a - fd) / denom
            if err > worst:
                worst = err
    return worst
