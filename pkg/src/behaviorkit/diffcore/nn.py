"""Parameter initializers and forward helpers for small networks."""

import numpy as np

from ..errors import ContractError
from .tensor import linear, lstm_step, gru_step, relu, tanh, sigmoid

_ACTIVATIONS = {"relu": relu, "tanh": tanh, "sigmoid": sigmoid, "linear": None}


def init_linear(ps, name, out_dim, in_dim, rng, zero=False, identity=False):
    """Add weight/bias for an affine layer; weight std is 1/sqrt(in_dim)."""
    if identity:
        if out_dim != in_dim:
            raise ContractError("identity init requires square weight")
        w = np.eye(out_dim)
    elif zero:
        w = np.zeros((out_dim, in_dim))
    else:
        w = rng.standard_normal((out_dim, in_dim)) / np.sqrt(in_dim)
    ps.add(f"{name}_w", w)
    ps.add(f"{name}_b", np.zeros(out_dim))


def linear_apply(ps, name, x):
    return linear(x, ps[f"{name}_w"], ps[f"{name}_b"])


def init_lstm(ps, prefix, in_dim, hidden, rng, forget_bias=1.0):
    ps.add(f"{prefix}_w_in", rng.standard_normal((4 * hidden, in_dim)) / np.sqrt(in_dim))
    ps.add(f"{prefix}_w_rec", rng.standard_normal((4 * hidden, hidden)) / np.sqrt(hidden))
    b = np.zeros(4 * hidden)
    b[hidden:2 * hidden] = forget_bias  # start remembering
    ps.add(f"{prefix}_b", b)


def recurrent_cell(x, state, ps, prefix="lstm"):
    """One step of the package's recurrent cell (an LSTM).

    state is an (h, c) pair of Tensors; returns the next (h, c).
    """
    h, c = state
    return lstm_step(x, h, c, ps[f"{prefix}_w_in"], ps[f"{prefix}_w_rec"], ps[f"{prefix}_b"])


def init_gru(ps, prefix, in_dim, hidden, rng):
    ps.add(f"{prefix}_w_in", rng.standard_normal((3 * hidden, in_dim)) / np.sqrt(in_dim))
    ps.add(f"{prefix}_w_rec", rng.standard_normal((3 * hidden, hidden)) / np.sqrt(hidden))
    ps.add(f"{prefix}_b", np.zeros(3 * hidden))


def gru_cell(x, h, ps, prefix="gru"):
    return gru_step(x, h, ps[f"{prefix}_w_in"], ps[f"{prefix}_w_rec"], ps[f"{prefix}_b"])


def init_mlp(ps, prefix, widths, rng, zero_last=False):
    """Add parameters for a stack of affine layers sized widths[0] -> widths[-1]."""
    if len(widths) < 2:
        raise ContractError("mlp needs at least input and output widths")
    for i in range(len(widths) - 1):
        last = i == len(widths) - 2
        init_linear(ps, f"{prefix}{i}", widths[i + 1], widths[i], rng,
                    zero=zero_last and last)


def mlp(x, ps, prefix, n_layers, activation="relu"):
    """Run a stack of affine layers with an activation between them.

    activation may be one name applied to every hidden layer, or a list with
    one name per layer (use "linear" for none); the final layer defaults to
    linear output.
    """
    if isinstance(activation, str):
        acts = [activation] * (n_layers - 1) + ["linear"]
    else:
        acts = list(activation)
        if len(acts) != n_layers:
            raise ContractError("need one activation per layer")
    out = x
    for i in range(n_layers):
        out = linear_apply(ps, f"{prefix}{i}", out)
        name = acts[i]
        if name not in _ACTIVATIONS:
            raise ContractError(f"unknown activation '{name}'")
        fn = _ACTIVATIONS[name]
        if fn is not None:
            out = fn(out)
    return out
