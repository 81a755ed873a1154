"""Named parameter collections with role tags."""

import numpy as np

from ..errors import ContractError, ShapeError
from .tensor import Tensor


class ParamSet:
    """Ordered mapping name -> leaf Tensor, tagged with an optimization role.

    Shapes are fixed at creation; ``assign`` swaps in a fresh Tensor with the
    same shape, which is how optimizer steps update parameters without
    disturbing graphs that still reference the old values.
    """

    def __init__(self, role):
        self.role = role
        self._params = {}

    def add(self, name, value):
        if name in self._params:
            raise ContractError(f"parameter '{name}' already exists in '{self.role}'")
        t = Tensor(np.array(value, dtype=np.float64), requires_grad=True)
        self._params[name] = t
        return t

    def assign(self, name, value):
        old = self[name]
        if isinstance(value, Tensor):
            # adopt the given tensor (keeps graph identity, e.g. for
            # gradient checks that inject leaf tensors as parameters)
            if value.data.shape != old.data.shape:
                raise ShapeError(
                    f"assign '{name}': shape {value.data.shape} != existing "
                    f"{old.data.shape}")
            self._params[name] = value
            return
        value = np.asarray(value, dtype=np.float64)
        if value.shape != old.data.shape:
            raise ShapeError(
                f"assign '{name}': shape {value.shape} != existing {old.data.shape}")
        self._params[name] = Tensor(value, requires_grad=True)

    def __getitem__(self, name):
        if name not in self._params:
            raise ContractError(f"no parameter '{name}' in '{self.role}'")
        return self._params[name]

    def __contains__(self, name):
        return name in self._params

    def __len__(self):
        return len(self._params)

    def names(self):
        return list(self._params)

    def items(self):
        return self._params.items()

    def n_values(self):
        return sum(t.data.size for t in self._params.values())

    def zero_grad(self):
        for t in self._params.values():
            t.grad = None

    def grads(self):
        """Gradient record: name -> array, zeros where a parameter was unused."""
        return {
            k: (t.grad if t.grad is not None else np.zeros_like(t.data))
            for k, t in self._params.items()
        }

    def detached(self):
        """Same values, no gradients: a frozen view for adversarial terms."""
        frozen = ParamSet(self.role + "-frozen")
        for k, t in self._params.items():
            frozen._params[k] = Tensor(t.data, requires_grad=False)
        return frozen

    def state_dict(self):
        return {k: t.data.copy() for k, t in self._params.items()}

    def load_state_dict(self, state):
        if set(state) != set(self._params):
            missing = set(self._params) - set(state)
            extra = set(state) - set(self._params)
            raise ContractError(
                f"state dict mismatch for '{self.role}': missing {sorted(missing)}, "
                f"unexpected {sorted(extra)}")
        for k, v in state.items():
            self.assign(k, v)


def clip_global_norm(grads, max_norm):
    """Scale a gradient record in place so its global L2 norm is <= max_norm.

    Returns the pre-clip norm.
    """
    total = 0.0
    for g in grads.values():
        total += float(np.sum(g * g))
    norm = float(np.sqrt(total))
    if norm > max_norm and norm > 0.0:
        factor = max_norm / norm
        for k in grads:
            grads[k] = grads[k] * factor
    return norm
