"""Reverse-mode differentiable array ops on float64 numpy storage.

Every model in this package is expressed through the ops below.  Each op
returns a new Tensor that records its parents and a backward closure;
``Tensor.backward()`` on a scalar walks the recorded graph once in reverse
topological order and accumulates gradients into the leaves.

Recurrent cells (``lstm_step``, ``gru_step``) and the classification losses
are single fused ops with hand-derived backward passes, so a 50-step unroll
stays a 50-node chain instead of a few thousand elementwise nodes.  Each op
checks its output for NaN/Inf and raises ``NumericsError`` naming itself,
which is what the training loop relies on to catch divergence.
"""

import numpy as np
from scipy.special import expit as _sigmoid

from ..errors import ContractError, NumericsError, ShapeError

_grad_enabled = True


class no_grad:
    """Context manager: ops executed inside record no graph."""

    def __enter__(self):
        global _grad_enabled
        self._prev = _grad_enabled
        _grad_enabled = False
        return self

    def __exit__(self, exc_type, exc, tb):
        global _grad_enabled
        _grad_enabled = self._prev
        return False


class Tensor:
    """A float64 array plus an optional place in a backward graph."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad=False):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._parents = ()
        self._backward = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    def item(self):
        return float(self.data)

    def detach(self):
        """A view of the same values outside the graph."""
        return Tensor(self.data, requires_grad=False)

    def zero_grad(self):
        self.grad = None

    def backward(self):
        """Accumulate d(self)/d(leaf) into .grad over the recorded graph."""
        if self.data.size != 1:
            raise ContractError("backward() requires a scalar output")
        topo = []
        seen = set()
        stack = [(self, False)]
        while stack:
            node, done = stack.pop()
            if done:
                topo.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in seen:
                    stack.append((p, False))
        self.grad = np.ones_like(self.data)
        for node in reversed(topo):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    # arithmetic sugar; constants stay out of the graph
    def __add__(self, other):
        return add_const(self, other) if isinstance(other, (int, float)) else add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return add_const(self, -other) if isinstance(other, (int, float)) else sub(self, other)

    def __mul__(self, other):
        return scale(self, other) if isinstance(other, (int, float)) else mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return neg(self)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"


def _accum(t, g):
    if t.requires_grad:
        t.grad = g if t.grad is None else t.grad + g


def _node(data, parents, backward, op):
    arr = np.asarray(data, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise NumericsError(f"{op}: non-finite values in output")
    out = Tensor(arr)
    if _grad_enabled and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(p for p in parents if p.requires_grad)
        out._backward = backward
    return out


def _unbroadcast(g, shape):
    """Reduce gradient g back to `shape` after numpy broadcasting."""
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


# ---------------------------------------------------------------- elementwise

def add(a, b):
    def bw(g):
        _accum(a, _unbroadcast(g, a.data.shape))
        _accum(b, _unbroadcast(g, b.data.shape))
    return _node(a.data + b.data, (a, b), bw, "add")


def sub(a, b):
    def bw(g):
        _accum(a, _unbroadcast(g, a.data.shape))
        _accum(b, _unbroadcast(-g, b.data.shape))
    return _node(a.data - b.data, (a, b), bw, "sub")


def mul(a, b):
    def bw(g):
        _accum(a, _unbroadcast(g * b.data, a.data.shape))
        _accum(b, _unbroadcast(g * a.data, b.data.shape))
    return _node(a.data * b.data, (a, b), bw, "mul")


def neg(a):
    def bw(g):
        _accum(a, -g)
    return _node(-a.data, (a,), bw, "neg")


def scale(a, c):
    c = float(c)

    def bw(g):
        _accum(a, g * c)
    return _node(a.data * c, (a,), bw, "scale")


def add_const(a, c):
    def bw(g):
        _accum(a, g)
    return _node(a.data + c, (a,), bw, "add_const")


def exp(a):
    with np.errstate(over="ignore"):       # overflow surfaces as NumericsError
        out_val = np.exp(a.data)

    def bw(g):
        _accum(a, g * out_val)
    return _node(out_val, (a,), bw, "exp")


def log(a):
    with np.errstate(invalid="ignore", divide="ignore"):
        out_val = np.log(a.data)

    def bw(g):
        _accum(a, g / a.data)
    return _node(out_val, (a,), bw, "log")


def log_abs(a):
    """log|x|; gradient 1/x.  Used for volume terms of invertible maps."""
    def bw(g):
        _accum(a, g / a.data)
    return _node(np.log(np.abs(a.data)), (a,), bw, "log_abs")


def tanh(a):
    out_val = np.tanh(a.data)

    def bw(g):
        _accum(a, g * (1.0 - out_val * out_val))
    return _node(out_val, (a,), bw, "tanh")


def sigmoid(a):
    out_val = _sigmoid(a.data)

    def bw(g):
        _accum(a, g * out_val * (1.0 - out_val))
    return _node(out_val, (a,), bw, "sigmoid")


def relu(a):
    mask = a.data > 0

    def bw(g):
        _accum(a, g * mask)
    return _node(np.where(mask, a.data, 0.0), (a,), bw, "relu")


def square(a):
    def bw(g):
        _accum(a, g * (2.0 * a.data))
    return _node(a.data * a.data, (a,), bw, "square")


def clip(a, lo, hi):
    """Clamp values to [lo, hi]; gradient passes only strictly inside."""
    inside = (a.data > lo) & (a.data < hi)

    def bw(g):
        _accum(a, g * inside)
    return _node(np.clip(a.data, lo, hi), (a,), bw, "clip")


def minimum_const(a, c):
    """min(x, c) elementwise against a scalar; gradient passes where x < c."""
    keep = a.data < c

    def bw(g):
        _accum(a, g * keep)
    return _node(np.minimum(a.data, c), (a,), bw, "minimum_const")


def maximum_const(a, c):
    """max(x, c) elementwise against a scalar; gradient passes where x > c."""
    keep = a.data > c

    def bw(g):
        _accum(a, g * keep)
    return _node(np.maximum(a.data, c), (a,), bw, "maximum_const")


# ---------------------------------------------------------------- reductions

def tsum(a):
    def bw(g):
        _accum(a, np.full_like(a.data, float(g)))
    return _node(a.data.sum(), (a,), bw, "tsum")


def tmean(a):
    n = a.data.size

    def bw(g):
        _accum(a, np.full_like(a.data, float(g) / n))
    return _node(a.data.mean(), (a,), bw, "tmean")


def sum_last(a):
    """Sum over the last axis: (..., D) -> (...)."""
    def bw(g):
        _accum(a, np.broadcast_to(np.expand_dims(g, -1), a.data.shape).copy())
    return _node(a.data.sum(axis=-1), (a,), bw, "sum_last")


# ------------------------------------------------------------ shape movement

def slice_last(a, start, stop):
    def bw(g):
        full = np.zeros_like(a.data)
        full[..., start:stop] = g
        _accum(a, full)
    return _node(np.ascontiguousarray(a.data[..., start:stop]), (a,), bw, "slice_last")


def concat_last(parts):
    parts = list(parts)
    widths = [p.data.shape[-1] for p in parts]
    offs = np.concatenate([[0], np.cumsum(widths)])

    def bw(g):
        for p, s, e in zip(parts, offs[:-1], offs[1:]):
            _accum(p, np.ascontiguousarray(g[..., s:e]))
    return _node(np.concatenate([p.data for p in parts], axis=-1), tuple(parts), bw, "concat_last")


def permute_last(a, perm):
    perm = np.asarray(perm, dtype=np.int64)
    inv = np.empty_like(perm)
    inv[perm] = np.arange(perm.size)

    def bw(g):
        _accum(a, np.ascontiguousarray(g[..., inv]))
    return _node(np.ascontiguousarray(a.data[..., perm]), (a,), bw, "permute_last")


# ------------------------------------------------------------- linear algebra

def _weight_grad(d_out, x):
    """dW for y = x @ W.T given upstream d_out; handles 1-D and 2-D x."""
    if d_out.ndim == 1:
        return np.outer(d_out, x)
    return d_out.T @ x


def _bias_grad(d_out):
    return d_out if d_out.ndim == 1 else d_out.sum(axis=0)


def linear(x, w, b):
    """Affine map y = x @ W.T + b with W of shape (out, in)."""
    if w.data.ndim != 2 or x.data.shape[-1] != w.data.shape[1]:
        raise ShapeError(
            f"linear: x has last dim {x.data.shape[-1]}, W is {w.data.shape}")
    if b.data.shape != (w.data.shape[0],):
        raise ShapeError(f"linear: b shape {b.data.shape} does not match W {w.data.shape}")

    def bw(g):
        _accum(x, g @ w.data)
        _accum(w, _weight_grad(g, x.data))
        _accum(b, _bias_grad(g))
    return _node(x.data @ w.data.T + b.data, (x, w, b), bw, "linear")


# ------------------------------------------------------------ recurrent cells

def _lstm_packed(x, h, c, w_in, w_rec, bias):
    hid = h.data.shape[-1]
    if w_in.data.shape != (4 * hid, x.data.shape[-1]):
        raise ShapeError(f"lstm_step: w_in {w_in.data.shape} vs input {x.data.shape}")
    if w_rec.data.shape != (4 * hid, hid) or bias.data.shape != (4 * hid,):
        raise ShapeError("lstm_step: recurrent weight or bias shape mismatch")

    pre = x.data @ w_in.data.T + h.data @ w_rec.data.T + bias.data
    gi = _sigmoid(pre[..., 0 * hid:1 * hid])
    gf = _sigmoid(pre[..., 1 * hid:2 * hid])
    gc = np.tanh(pre[..., 2 * hid:3 * hid])
    go = _sigmoid(pre[..., 3 * hid:4 * hid])
    c_new = gf * c.data + gi * gc
    tc = np.tanh(c_new)
    h_new = go * tc

    def bw(g):
        gh = g[..., :hid]
        gc_direct = g[..., hid:]
        d_o = gh * tc
        d_c = gc_direct + gh * go * (1.0 - tc * tc)
        d_f = d_c * c.data
        d_cprev = d_c * gf
        d_i = d_c * gc
        d_g = d_c * gi
        d_pre = np.concatenate([
            d_i * gi * (1.0 - gi),
            d_f * gf * (1.0 - gf),
            d_g * (1.0 - gc * gc),
            d_o * go * (1.0 - go),
        ], axis=-1)
        _accum(x, d_pre @ w_in.data)
        _accum(h, d_pre @ w_rec.data)
        _accum(c, d_cprev)
        _accum(w_in, _weight_grad(d_pre, x.data))
        _accum(w_rec, _weight_grad(d_pre, h.data))
        _accum(bias, _bias_grad(d_pre))

    packed = np.concatenate([h_new, c_new], axis=-1)
    return _node(packed, (x, h, c, w_in, w_rec, bias), bw, "lstm_step"), hid


def lstm_step(x, h, c, w_in, w_rec, bias):
    """One fused LSTM step; gate order [input, forget, cell, output].

    With all parameters zero the gates sit at 0.5 and the candidate at 0,
    so c' = 0.5*c and h' = 0.5*tanh(c').
    Returns (h', c').
    """
    packed, hid = _lstm_packed(x, h, c, w_in, w_rec, bias)
    return slice_last(packed, 0, hid), slice_last(packed, hid, 2 * hid)


def gru_step(x, h, w_in, w_rec, bias):
    """One fused GRU step; gate order [reset, update, candidate].

    Convention: n = tanh(x W_n^T + r * (h U_n^T) + b_n), h' = (1-u)*n + u*h.
    """
    hid = h.data.shape[-1]
    if w_in.data.shape != (3 * hid, x.data.shape[-1]):
        raise ShapeError(f"gru_step: w_in {w_in.data.shape} vs input {x.data.shape}")
    if w_rec.data.shape != (3 * hid, hid) or bias.data.shape != (3 * hid,):
        raise ShapeError("gru_step: recurrent weight or bias shape mismatch")

    ax = x.data @ w_in.data.T
    ah = h.data @ w_rec.data.T
    r = _sigmoid(ax[..., :hid] + ah[..., :hid] + bias.data[:hid])
    u = _sigmoid(ax[..., hid:2 * hid] + ah[..., hid:2 * hid] + bias.data[hid:2 * hid])
    hn = ah[..., 2 * hid:]
    n = np.tanh(ax[..., 2 * hid:] + r * hn + bias.data[2 * hid:])
    h_new = (1.0 - u) * n + u * h.data

    def bw(g):
        d_u = g * (h.data - n)
        d_n = g * (1.0 - u)
        d_h_direct = g * u
        d_an = d_n * (1.0 - n * n)
        d_r = d_an * hn
        d_hn = d_an * r
        d_ar = d_r * r * (1.0 - r)
        d_au = d_u * u * (1.0 - u)
        d_ax = np.concatenate([d_ar, d_au, d_an], axis=-1)
        d_ah = np.concatenate([d_ar, d_au, d_hn], axis=-1)
        _accum(x, d_ax @ w_in.data)
        _accum(h, d_h_direct + d_ah @ w_rec.data)
        _accum(w_in, _weight_grad(d_ax, x.data))
        _accum(w_rec, _weight_grad(d_ah, h.data))
        _accum(bias, _bias_grad(d_ax))

    return _node(h_new, (x, h, w_in, w_rec, bias), bw, "gru_step")


# ------------------------------------------------------------------- losses

def softmax_cross_entropy(logits, labels):
    """Mean negative log-likelihood of integer labels under softmax(logits)."""
    z = logits.data
    if z.ndim != 2:
        raise ShapeError("softmax_cross_entropy expects (batch, classes) logits")
    labels = np.asarray(labels, dtype=np.int64)
    if labels.shape != (z.shape[0],):
        raise ShapeError("softmax_cross_entropy: labels must be (batch,) ints")
    m = z.max(axis=1, keepdims=True)
    ez = np.exp(z - m)
    denom = ez.sum(axis=1, keepdims=True)
    p = ez / denom
    n = z.shape[0]
    nll = (np.log(denom[:, 0]) + m[:, 0] - z[np.arange(n), labels]).mean()

    def bw(g):
        d = p.copy()
        d[np.arange(n), labels] -= 1.0
        _accum(logits, d * (float(g) / n))
    return _node(nll, (logits,), bw, "softmax_cross_entropy")


def sigmoid_bce(logits, targets):
    """Mean binary cross-entropy of sigmoid(logits) against targets in [0,1]."""
    z = logits.data
    t = np.asarray(targets, dtype=np.float64)
    if t.shape != z.shape:
        raise ShapeError("sigmoid_bce: logits and targets must have equal shape")
    # stable form: max(z,0) - z*t + log(1+exp(-|z|))
    val = (np.maximum(z, 0.0) - z * t + np.log1p(np.exp(-np.abs(z)))).mean()
    n = z.size

    def bw(g):
        _accum(logits, (_sigmoid(z) - t) * (float(g) / n))
    return _node(val, (logits,), bw, "sigmoid_bce")


def gaussian_recon_nll(pred, target):
    """Mean squared error (unit-variance Gaussian NLL up to constants)."""
    if pred.data.shape != np.shape(target.data if isinstance(target, Tensor) else target):
        raise ShapeError("gaussian_recon_nll: shape mismatch")
    t = target if isinstance(target, Tensor) else Tensor(target)
    return tmean(square(sub(pred, t)))


LOGVAR_MIN = -30.0
LOGVAR_MAX = 30.0


def diag_gauss_kl(mu, logvar):
    """KL(N(mu, diag exp(logvar)) || N(0, I)), summed over dims.

    For batched inputs the per-row sums are averaged, so the result is the
    batch-mean KL in nats.  logvar is clamped to [-30, 30] first.
    """
    lv = clip(logvar, LOGVAR_MIN, LOGVAR_MAX)
    per_dim = sub(sub(add(square(mu), exp(lv)), Tensor(1.0)), lv)
    per_row = sum_last(scale(per_dim, 0.5))
    if per_row.data.ndim == 0:
        return per_row
    return tmean(per_row)


STD_FLOOR = 1e-6


def reparameterize(mu, logvar, rng, eps=None):
    """Sample mu + std*eps with std = exp(clamp(logvar)/2), floored at 1e-6.

    Returns (sample, eps) so callers can record the noise that was used.
    Passing eps explicitly reproduces a sample exactly; eps of zeros gives
    the posterior mean.
    """
    if eps is None:
        eps = rng.standard_normal(mu.data.shape)
    else:
        eps = np.asarray(eps, dtype=np.float64)
        if eps.shape != mu.data.shape:
            raise ShapeError("reparameterize: eps shape must match mu")
    lv = clip(logvar, LOGVAR_MIN, LOGVAR_MAX)
    # floor keeps the sample well-defined when a dimension collapses
    std = maximum_const(exp(scale(lv, 0.5)), STD_FLOOR)
    sample = add(mu, mul(std, Tensor(eps)))
    return sample, eps
