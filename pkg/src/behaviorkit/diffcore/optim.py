"""Optimizer steps operating on ParamSets and gradient records."""

from dataclasses import dataclass, field

import numpy as np

from ..errors import ContractError


@dataclass
class AdamState:
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    step: int = 0

    def state_arrays(self, tag):
        """Flat name -> array view for checkpointing."""
        out = {}
        for k, arr in self.m.items():
            out[f"{tag}/m/{k}"] = arr
        for k, arr in self.v.items():
            out[f"{tag}/v/{k}"] = arr
        return out


def adam_init(params):
    st = AdamState()
    for k, t in params.items():
        st.m[k] = np.zeros_like(t.data)
        st.v[k] = np.zeros_like(t.data)
    return st


def adam_step(params, grads, state, lr, betas=(0.9, 0.999), eps=1e-8):
    """One Adam update in place.

    First step moves each coordinate by about lr * g/(|g| + eps); zero
    gradient leaves a parameter unchanged while its moments decay.
    """
    if set(grads) != set(state.m):
        raise ContractError("gradient record does not align with optimizer state")
    b1, b2 = betas
    state.step += 1
    t = state.step
    c1 = 1.0 - b1 ** t
    c2 = 1.0 - b2 ** t
    for k, g in grads.items():
        p = params[k]
        if g.shape != p.data.shape:
            raise ContractError(f"gradient shape mismatch for '{k}'")
        m, v = state.m[k], state.v[k]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        denom = np.sqrt(v / c2)
        denom += eps
        params.assign(k, p.data - (lr / c1) * m / denom)


@dataclass
class SGDState:
    velocity: dict = field(default_factory=dict)


def sgd_init(params):
    st = SGDState()
    for k, t in params.items():
        st.velocity[k] = np.zeros_like(t.data)
    return st


def sgd_momentum_step(params, grads, state, lr, momentum=0.9):
    for k, g in grads.items():
        state.velocity[k] = momentum * state.velocity[k] + g
        params.assign(k, params[k].data - lr * state.velocity[k])
