"""Conditional sequence autoencoder with an information budget and an
adversarial posture decoder.

The encoder (role phi) reads a full motion sequence and emits a diagonal
Gaussian over a behavior code z.  The decoder (role theta) is seeded with a
conditioning posture x_t: z initializes its recurrent state, x_t is its first
input, and every step predicts a residual on its previous output.  A small
MLP (role psi) tries to reconstruct the whole sequence from z alone; the
main loss *rewards* its failure, pushing static posture information out of z
while the budget constraint holds the code's KL near a fixed nat target via
a non-negative multiplier updated by dual ascent.

Modes:
  full    - budget + adversarial term (the default)
  no_aux  - budget only (adversarial weight zero)
  cvae    - fixed unit KL weight, no budget, no adversary
  cae     - plain autoencoder: z = posterior mean, no KL, no adversary
"""

from dataclasses import dataclass, replace

import numpy as np

from . import diffcore as dc
from .diffcore import ParamSet, Tensor
from .errors import ContractError

MODES = ("full", "no_aux", "cvae", "cae")

# starting log-variance of the posterior: a confident code from step one
# keeps the decoder's dependence on z alive while the budget constraint
# squeezes the KL down onto its target from above
LOGVAR_BIAS_INIT = -2.0


@dataclass
class ModelDims:
    frames: int = 50
    joints: int = 17
    latent: int = 64
    hidden: int = 128
    aux_hidden: int = 128

    @property
    def pose_dim(self):
        return self.joints * 3

    def to_dict(self):
        return {"frames": self.frames, "joints": self.joints,
                "latent": self.latent, "hidden": self.hidden,
                "aux_hidden": self.aux_hidden}

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


@dataclass
class BehaviorCode:
    """Posterior over the behavior code for a batch of sequences."""

    mu: Tensor
    logvar: Tensor
    sample: Tensor = None
    eps: np.ndarray = None


@dataclass(frozen=True)
class BudgetState:
    """Information-budget state: target nats and the dual multiplier."""

    gamma_kl: float = 1.0
    i_kl: float = 6.25
    gamma_c: float = 0.1
    dual_lr: float = 1e-3


def dual_update(budget, observed_kl):
    """Dual ascent on the KL constraint; the multiplier never goes negative."""
    g = budget.gamma_kl + budget.dual_lr * (float(observed_kl) - budget.i_kl)
    return replace(budget, gamma_kl=max(0.0, g))


def flatten_seq(frames):
    """(n, K, 3) -> (n, K*3); also accepts batches (B, n, K, 3)."""
    frames = np.asarray(frames, dtype=float)
    return frames.reshape(*frames.shape[:-2], frames.shape[-2] * 3)


def unflatten_seq(flat, joints=17):
    flat = np.asarray(flat, dtype=float)
    return flat.reshape(*flat.shape[:-1], joints, 3)


class BehaviorVAE:
    """Encoder/decoder/adversary parameter bundle plus forward passes."""

    def __init__(self, dims, seed=0, mode="full"):
        if mode not in MODES:
            raise ContractError(f"unknown mode '{mode}' (choose from {MODES})")
        self.dims = dims
        self.mode = mode
        d, h, p = dims.latent, dims.hidden, dims.pose_dim

        rng = np.random.default_rng([seed, 101])
        self.phi = ParamSet("phi")
        dc.init_lstm(self.phi, "enc", p, h, rng)
        dc.init_linear(self.phi, "mu", d, h, rng)
        dc.init_linear(self.phi, "logvar", d, h, rng)
        self.phi.assign("logvar_b", np.full(d, LOGVAR_BIAS_INIT))

        rng = np.random.default_rng([seed, 102])
        self.theta = ParamSet("theta")
        dc.init_linear(self.theta, "proj_h", h, d, rng, identity=(d == h))
        dc.init_linear(self.theta, "proj_c", h, d, rng, zero=True)
        dc.init_lstm(self.theta, "dec", p, h, rng)
        dc.init_linear(self.theta, "out", p, h, rng, zero=True)

        rng = np.random.default_rng([seed, 103])
        self.psi = ParamSet("psi")
        dc.init_mlp(self.psi, "aux", [d, dims.aux_hidden, dims.aux_hidden,
                                      dims.frames * p], rng)

    # ------------------------------------------------------------- forward

    def encode(self, frames_flat):
        """Run the encoder over (B, n, pose) or (n, pose); returns a BehaviorCode."""
        x = np.asarray(frames_flat, dtype=float)
        if x.shape[-1] != self.dims.pose_dim or x.shape[-2] != self.dims.frames:
            raise ContractError(
                f"encode expects (..., {self.dims.frames}, {self.dims.pose_dim}), "
                f"got {x.shape}")
        lead = x.shape[:-2]
        h = Tensor(np.zeros(lead + (self.dims.hidden,)))
        c = Tensor(np.zeros(lead + (self.dims.hidden,)))
        for t in range(self.dims.frames):
            h, c = dc.recurrent_cell(Tensor(x[..., t, :]), (h, c), self.phi, "enc")
        mu = dc.linear_apply(self.phi, "mu", h)
        logvar = dc.linear_apply(self.phi, "logvar", h)
        return BehaviorCode(mu=mu, logvar=logvar)

    def sample_code(self, code, rng=None, eps=None):
        """Attach a reparameterized sample (or the mean, in cae mode)."""
        if self.mode == "cae":
            code.sample, code.eps = code.mu, None
            return code
        code.sample, code.eps = dc.reparameterize(code.mu, code.logvar, rng, eps=eps)
        return code

    def decode(self, z, x_t, steps=None):
        """Unroll the decoder; returns a list of per-step (B, pose) Tensors.

        z: (B, latent) Tensor or array.  x_t: (B, pose) conditioning posture,
        consumed as the first input; afterwards each output feeds back in.
        With all decoder weights zero every frame equals x_t (the residual
        head contributes nothing).
        """
        steps = steps or self.dims.frames
        if not isinstance(z, Tensor):
            z = Tensor(z)
        h = dc.linear_apply(self.theta, "proj_h", z)
        c = dc.linear_apply(self.theta, "proj_c", z)
        inp = x_t if isinstance(x_t, Tensor) else Tensor(np.asarray(x_t, dtype=float))
        outs = []
        for _ in range(steps):
            h, c = dc.recurrent_cell(inp, (h, c), self.theta, "dec")
            inp = dc.add(inp, dc.linear_apply(self.theta, "out", h))
            outs.append(inp)
        return outs

    def decode_array(self, z, x_t, steps=None):
        """Decoder unroll outside the graph, stacked to (B, steps, pose)."""
        with dc.no_grad():
            outs = self.decode(z, x_t, steps)
        return np.stack([o.data for o in outs], axis=-2)

    def aux_predict(self, z, frozen=False):
        """Adversary's sequence prediction from the code alone: (B, n*pose)."""
        ps = self.psi.detached() if frozen else self.psi
        return dc.mlp(z, ps, "aux", 3, activation="relu")

    # -------------------------------------------------------------- losses

    def loss_aux(self, z, targets_flat):
        """Adversary training loss; the code is detached so phi gets no gradient."""
        z_d = z.detach() if isinstance(z, Tensor) else Tensor(z)
        pred = self.aux_predict(z_d)
        return dc.gaussian_recon_nll(pred, Tensor(targets_flat))

    def loss_main(self, code, z, x_flat, x_t, budget, aux_cap=None):
        """Main training objective for the encoder and decoder.

        x_flat: (B, n*pose) flattened targets; x_t: (B, pose) conditioning
        posture.  aux_cap bounds the adversarial reward (a float, usually the
        running mean of recent reconstruction losses) so a hopeless adversary
        cannot dominate the objective.  The adversary's parameters are used
        frozen: no gradient reaches psi here.

        Returns a dict with the scalar "total" Tensor plus float diagnostics.
        """
        steps = self.dims.frames
        preds = self.decode(z, x_t, steps)
        pred_flat = dc.concat_last(preds)
        recon = dc.gaussian_recon_nll(pred_flat, Tensor(x_flat))
        parts = {"recon": float(recon.data), "kl": 0.0,
                 "aux_mse": 0.0, "aux_reward": 0.0}
        total = recon

        if self.mode in ("full", "no_aux"):
            kl = dc.diag_gauss_kl(code.mu, code.logvar)
            parts["kl"] = float(kl.data)
            total = dc.add(total, dc.scale(dc.add_const(kl, -budget.i_kl),
                                           budget.gamma_kl))
        elif self.mode == "cvae":
            kl = dc.diag_gauss_kl(code.mu, code.logvar)
            parts["kl"] = float(kl.data)
            total = dc.add(total, kl)

        if self.mode == "full" and budget.gamma_c != 0.0:
            aux_pred = self.aux_predict(z, frozen=True)
            aux_mse = dc.gaussian_recon_nll(aux_pred, Tensor(x_flat))
            parts["aux_mse"] = float(aux_mse.data)
            reward = dc.scale(aux_mse, budget.gamma_c)
            cap = float(aux_cap) if aux_cap is not None else float(recon.data)
            reward = dc.minimum_const(reward, cap)
            parts["aux_reward"] = float(reward.data)
            total = dc.sub(total, reward)

        parts["total"] = total
        return parts

    # ----------------------------------------------------------- inference

    def transfer(self, source_flat, target_posture):
        """Re-enact the source behavior from a different starting posture.

        source_flat: (n, pose) or (B, n, pose) normalized sequence(s);
        target_posture: matching (pose,) or (B, pose).  Uses the posterior
        mean, so transfer is deterministic.  Returns arrays shaped like the
        decoder output.
        """
        src = np.asarray(source_flat, dtype=float)
        single = src.ndim == 2
        if single:
            src = src[None]
        tgt = np.atleast_2d(np.asarray(target_posture, dtype=float))
        if tgt.shape[0] != src.shape[0]:
            raise ContractError("transfer: need one target posture per source")
        with dc.no_grad():
            code = self.encode(src)
        out = self.decode_array(code.mu, tgt)
        return out[0] if single else out

    def interpolate(self, seq_a, seq_b, lam):
        """Decode the convex combination (1-lam)*z_a + lam*z_b of two codes.

        The conditioning posture is seq_a's first frame, except at lam = 1.0
        where it is seq_b's.  Inputs are (n, pose) normalized sequences.
        """
        if not 0.0 <= lam <= 1.0:
            raise ContractError(f"interpolation weight must be in [0, 1], got {lam}")
        a = np.asarray(seq_a, dtype=float)
        b = np.asarray(seq_b, dtype=float)
        with dc.no_grad():
            za = self.encode(a[None]).mu.data
            zb = self.encode(b[None]).mu.data
        z = (1.0 - lam) * za + lam * zb
        x_t = (b if lam == 1.0 else a)[0:1]
        return self.decode_array(z, x_t)[0]

    # --------------------------------------------------------- persistence

    def param_arrays(self):
        out = {}
        for ps in (self.phi, self.theta, self.psi):
            for k, t in ps.items():
                out[f"{ps.role}/{k}"] = t.data
        return out

    def load_param_arrays(self, arrays):
        for ps in (self.phi, self.theta, self.psi):
            prefix = f"{ps.role}/"
            state = {k[len(prefix):]: v for k, v in arrays.items()
                     if k.startswith(prefix)}
            ps.load_state_dict(state)


def d_beta(model, seq_a, seq_b):
    """Euclidean distance between the posterior means of two sequences.

    Inputs are (n, pose) normalized sequences, each conditioned on its own
    first frame.  Identical sequences give exactly zero.
    """
    a = np.asarray(seq_a, dtype=float)
    b = np.asarray(seq_b, dtype=float)
    with dc.no_grad():
        za = model.encode(a[None]).mu.data[0]
        zb = model.encode(b[None]).mu.data[0]
    return float(np.linalg.norm(za - zb))
