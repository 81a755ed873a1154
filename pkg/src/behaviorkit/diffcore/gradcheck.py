"""Finite-difference verification of backward passes."""

import numpy as np

from ..errors import ContractError
from .tensor import Tensor, no_grad


def _value(fn, arrays):
    with no_grad():
        leaves = [Tensor(a) for a in arrays]
        out = fn(*leaves)
    return float(out.data)


def grad_check(fn, inputs, eps=1e-5):
    """Worst relative error between analytic and central-difference gradients.

    fn maps leaf Tensors to a scalar Tensor; inputs are arrays (or scalars)
    giving the point of evaluation.  Every coordinate of every input is
    perturbed by +/- eps and the relative error uses the larger of the two
    magnitudes (floored at 1e-8) as denominator.
    """
    arrays = [np.array(a, dtype=np.float64) for a in inputs]
    leaves = [Tensor(a, requires_grad=True) for a in arrays]
    out = fn(*leaves)
    if out.data.size != 1:
        raise ContractError("grad_check requires a scalar-valued fn")
    out.backward()

    worst = 0.0
    for k, base in enumerate(arrays):
        analytic = leaves[k].grad
        if analytic is None:
            analytic = np.zeros_like(base)
        flat = base.reshape(-1)
        for idx in range(flat.size):
            orig = flat[idx]
            flat[idx] = orig + eps
            f_plus = _value(fn, arrays)
            flat[idx] = orig - eps
            f_minus = _value(fn, arrays)
            flat[idx] = orig
            numeric = (f_plus - f_minus) / (2.0 * eps)
            a = float(analytic.reshape(-1)[idx])
            denom = max(abs(a), abs(numeric), 1e-8)
            rel = abs(a - numeric) / denom
            if rel > worst:
                worst = rel
    return worst
