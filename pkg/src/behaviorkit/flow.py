"""Invertible map between the behavior-code posterior and a standard normal.

A stack of blocks, each actnorm -> affine coupling -> fixed shuffle, trained
by maximum likelihood on encoded training sequences.  Sampling draws u from
N(0, I) and applies the exact inverse; an empty stack is the identity, which
is the raw-prior baseline.

The coupling subnet is two affine layers of width equal to the code
dimension, with a zero-initialized output layer so every block starts as the
identity (plus actnorm); its scale output is squashed as bound * tanh(raw)
with a learnable per-dimension bound.
"""

import numpy as np

from . import diffcore as dc
from .diffcore import ParamSet, Tensor
from .errors import ContractError

ACTNORM_STD_FLOOR = 1e-6


def _relu_np(x):
    return np.maximum(x, 0.0)


class FlowModel:
    """Stack of invertible blocks over a dim-sized code space."""

    def __init__(self, dim, n_blocks=6, seed=0, identity_init=True):
        if dim < 2:
            raise ContractError("flow needs at least 2 dimensions to split")
        self.dim = dim
        self.n_blocks = n_blocks
        self.seed = seed
        self.d1 = dim // 2
        self.d2 = dim - self.d1
        self.initialized = n_blocks == 0
        self.xi = ParamSet("xi")
        self.perms = []
        rng = np.random.default_rng([seed, 301])
        for b in range(n_blocks):
            self.xi.add(f"b{b}_act_scale", np.ones(dim))
            self.xi.add(f"b{b}_act_bias", np.zeros(dim))
            dc.init_linear(self.xi, f"b{b}_net0", dim, self.d1, rng)
            dc.init_linear(self.xi, f"b{b}_net1", 2 * self.d2, dim, rng,
                           zero=identity_init)
            if not identity_init:
                # keep the starting scales small so exp() stays tame
                self.xi.assign(f"b{b}_net1_w",
                               rng.standard_normal((2 * self.d2, dim)) * 0.1)
            self.xi.add(f"b{b}_bound", np.ones(self.d2))
            self.perms.append(rng.permutation(dim))

    # ------------------------------------------------------------ graph path

    def _coupling(self, y, b):
        z1 = dc.slice_last(y, 0, self.d1)
        z2 = dc.slice_last(y, self.d1, self.dim)
        hidden = dc.relu(dc.linear_apply(self.xi, f"b{b}_net0", z1))
        raw = dc.linear_apply(self.xi, f"b{b}_net1", hidden)
        s = dc.mul(dc.tanh(dc.slice_last(raw, 0, self.d2)), self.xi[f"b{b}_bound"])
        t = dc.slice_last(raw, self.d2, 2 * self.d2)
        y2 = dc.add(dc.mul(z2, dc.exp(s)), t)
        return dc.concat_last([z1, y2]), dc.sum_last(s)

    def block_forward(self, z, b):
        """One block in the generative-to-base direction; returns (out, logdet)."""
        scale = self.xi[f"b{b}_act_scale"]
        bias = self.xi[f"b{b}_act_bias"]
        y = dc.add(dc.mul(z, scale), bias)
        logdet = dc.tsum(dc.log_abs(scale))
        out, c_logdet = self._coupling(y, b)
        logdet = dc.add(logdet, c_logdet)
        return dc.permute_last(out, self.perms[b]), logdet

    def forward(self, z):
        """Map codes to base space: returns (u, per-row logdet) as Tensors."""
        if not isinstance(z, Tensor):
            z = Tensor(z)
        if z.data.shape[-1] != self.dim:
            raise ContractError(f"flow expects last dim {self.dim}, got {z.data.shape}")
        logdet = Tensor(np.zeros(z.data.shape[:-1]))
        out = z
        for b in range(self.n_blocks):
            out, ld = self.block_forward(out, b)
            logdet = dc.add(logdet, ld)
        return out, logdet

    def nll(self, z):
        """Mean negative log-likelihood of codes under the flow-warped base.

        Standard change of variables: nll = -[log N(u; 0, I) + logdet].
        For the identity flow at z = 0 in 2 dimensions this is log(2*pi).
        """
        u, logdet = self.forward(z)
        sq = dc.scale(dc.sum_last(dc.square(u)), 0.5)
        const = 0.5 * self.dim * np.log(2.0 * np.pi)
        per_row = dc.sub(dc.add_const(sq, const), logdet)
        return dc.tmean(per_row) if per_row.data.ndim else per_row

    # ------------------------------------------------------------ numpy path

    def _coupling_inverse(self, x, b):
        z1 = x[..., :self.d1]
        y2 = x[..., self.d1:]
        w0, b0 = self.xi[f"b{b}_net0_w"].data, self.xi[f"b{b}_net0_b"].data
        w1, b1 = self.xi[f"b{b}_net1_w"].data, self.xi[f"b{b}_net1_b"].data
        raw = _relu_np(z1 @ w0.T + b0) @ w1.T + b1
        s = np.tanh(raw[..., :self.d2]) * self.xi[f"b{b}_bound"].data
        t = raw[..., self.d2:]
        z2 = (y2 - t) * np.exp(-s)
        return np.concatenate([z1, z2], axis=-1)

    def inverse(self, u):
        """Exact inverse of forward(); numpy in, numpy out."""
        x = np.asarray(u, dtype=float)
        if x.shape[-1] != self.dim:
            raise ContractError(f"flow expects last dim {self.dim}, got {x.shape}")
        for b in range(self.n_blocks - 1, -1, -1):
            inv_perm = np.empty(self.dim, dtype=np.int64)
            inv_perm[self.perms[b]] = np.arange(self.dim)
            x = x[..., inv_perm]
            x = self._coupling_inverse(x, b)
            x = (x - self.xi[f"b{b}_act_bias"].data) / self.xi[f"b{b}_act_scale"].data
        return x

    # ---------------------------------------------------------------- setup

    def actnorm_init(self, batch):
        """Data-dependent init: each block's actnorm standardizes the batch
        it actually sees (already standardized input leaves scale 1, bias 0).
        One-shot; calling again is an error."""
        if self.initialized:
            raise ContractError("actnorm already initialized for this flow")
        x = np.asarray(batch, dtype=float)
        if x.ndim != 2 or x.shape[0] < 2:
            raise ContractError("actnorm init needs a (batch, dim) array, batch >= 2")
        with dc.no_grad():
            for b in range(self.n_blocks):
                mean = x.mean(axis=0)
                std = np.maximum(x.std(axis=0), ACTNORM_STD_FLOOR)
                self.xi.assign(f"b{b}_act_scale", 1.0 / std)
                self.xi.assign(f"b{b}_act_bias", -mean / std)
                out, _ = self.block_forward(Tensor(x), b)
                x = out.data
        self.initialized = True

    # ------------------------------------------------------------- sampling

    def sample_behavior(self, count, rng):
        """Draw codes: u ~ N(0, I) pushed through the inverse map."""
        u = rng.standard_normal((count, self.dim))
        return self.inverse(u)

    # --------------------------------------------------------- persistence

    def param_arrays(self):
        return {f"xi/{k}": t.data for k, t in self.xi.items()}

    def load_param_arrays(self, arrays):
        state = {k[3:]: v for k, v in arrays.items() if k.startswith("xi/")}
        self.xi.load_state_dict(state)

    def describe(self):
        return {"dim": self.dim, "n_blocks": self.n_blocks, "seed": self.seed,
                "actnorm_initialized": self.initialized}


def recursive_sample(model, flow, start_posture, segments, rng):
    """Chain sampled segments, re-seeding each from the last generated posture.

    start_posture: (pose,) normalized conditioning posture for the first
    segment.  flow may be None, in which case codes come straight from the
    N(0, I) prior; with a flow the *same* rng draws are warped through its
    inverse, so paired runs see identical base noise.  Returns
    (segments * frames, pose).
    """
    if segments < 1:
        raise ContractError("need at least one segment")
    x_t = np.asarray(start_posture, dtype=float)[None]
    dim = model.dims.latent
    chunks = []
    for _ in range(segments):
        if flow is None:
            z = rng.standard_normal((1, dim))
        else:
            z = flow.sample_behavior(1, rng)
        seq = model.decode_array(z, x_t)
        chunks.append(seq[0])
        x_t = seq[0, -1][None]
    return np.concatenate(chunks, axis=0)
