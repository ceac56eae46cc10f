"""Central finite-difference gradient checking."""
from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .tensor import Tape, Tensor, backward


def grad_check(fn: Callable[..., Tensor], inputs: Sequence[np.ndarray], eps: float = 1e-5) -> float:
    """Max relative error between tape gradients and central differences.

    ``fn`` receives one tensor per input and must return a scalar tensor.
    Relative error per coordinate is ``|a - n| / max(1e-8, |a| + |n|)``.
    """
    arrays = [np.array(x, dtype=np.float64, copy=True) for x in inputs]
    leaves = [Tensor(a, requires_grad=True) for a in arrays]
    with Tape() as tape:
        loss = fn(*leaves)
    analytic = backward(tape, loss, leaves)

    def value() -> float:
        return fn(*[Tensor(a) for a in arrays]).item()

    worst = 0.0
    for leaf, arr in zip(leaves, arrays):
        ga = analytic[leaf].reshape(-1)
        flat = arr.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            up = value()
            flat[i] = orig - eps
            down = value()
            flat[i] = orig
            num = (up - down) / (2.0 * eps)
            err = abs(ga[i] - num) / max(1e-8, abs(ga[i]) + abs(num))
            worst = max(worst, err)
    return worst


def params_grad_check(loss_fn: Callable[[], Tensor], params: dict, eps: float = 1e-5) -> dict:
    """Finite-difference check of ``loss_fn`` w.r.t. named parameter tensors, in place.

    ``loss_fn`` closes over ``params`` (e.g. a network's parameter store);
    each coordinate is nudged through ``Tensor.data``. Returns the max
    relative error per parameter name.
    """
    tensors = list(params.values())
    with Tape() as tape:
        loss = loss_fn()
    analytic = backward(tape, loss, tensors)
    out = {}
    for name, t in params.items():
        ga = analytic[t].reshape(-1)
        flat = t.data.reshape(-1)
        worst = 0.0
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            up = loss_fn().item()
            flat[i] = orig - eps
            down = loss_fn().item()
            flat[i] = orig
            num = (up - down) / (2.0 * eps)
            worst = max(worst, abs(ga[i] - num) / max(1e-8, abs(ga[i]) + abs(num)))
        out[name] = worst
    return out
