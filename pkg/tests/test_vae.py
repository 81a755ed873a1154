"""Unit tests for the sequence autoencoder: encoding contracts, the
free-running decoder, loss assembly per training mode, and the
detachment rules between the main model and the posture adversary."""

from types import SimpleNamespace

import numpy as np
import pytest

from behaviorkit.errors import ContractError
from behaviorkit.util import make_rng
from behaviorkit.vae import (
    BehaviorVAE,
    BudgetState,
    ModelDims,
    d_beta,
    dual_update,
)

DIMS = ModelDims(frames=6, joints=17, latent=8, hidden=12, aux_hidden=10)


def _model(mode="full", seed=3):
    return BehaviorVAE(DIMS, seed=seed, mode=mode)


def _batch(b=4, seed=11):
    rng = np.random.default_rng(seed)
    return rng.normal(0.0, 0.5, (b, DIMS.frames, DIMS.pose_dim))


def test_rejects_unknown_mode():
    with pytest.raises(ContractError):
        BehaviorVAE(DIMS, mode="gan")


def test_encode_shapes():
    model = _model()
    code = model.encode(_batch(3))
    assert code.mu.data.shape == (3, DIMS.latent)
    assert code.logvar.data.shape == (3, DIMS.latent)


def test_encode_accepts_single_sequence():
    model = _model()
    x = _batch(1)
    single = model.encode(x[0])
    batched = model.encode(x)
    np.testing.assert_allclose(single.mu.data, batched.mu.data[0], atol=1e-12)


def test_encode_rejects_wrong_pose_dim():
    model = _model()
    with pytest.raises(ContractError):
        model.encode(np.zeros((2, DIMS.frames, DIMS.pose_dim + 1)))


def test_encode_rejects_wrong_length():
    model = _model()
    with pytest.raises(ContractError):
        model.encode(np.zeros((2, DIMS.frames + 1, DIMS.pose_dim)))


def test_logvar_head_starts_negative():
    # the spread head is biased low at init so early samples stay close
    # to the posterior mean
    model = _model()
    code = model.encode(_batch(8))
    assert float(np.mean(code.logvar.data)) < -1.0


def test_zeroed_output_head_copies_first_frame():
    # with the residual head at zero the free-running decoder repeats its
    # conditioning frame verbatim, no matter what the rest of theta holds
    model = _model()
    rng = np.random.default_rng(21)
    for name, t in model.theta.items():
        if not name.startswith("out"):
            model.theta.assign(name, t.data + rng.normal(0.0, 0.3, t.data.shape))
    model.theta.assign("out_w", np.zeros((DIMS.pose_dim, DIMS.hidden)))
    model.theta.assign("out_b", np.zeros(DIMS.pose_dim))
    x = _batch(2)
    x_t = x[:, 0, :]
    z = np.random.default_rng(4).normal(0.0, 1.0, (2, DIMS.latent))
    steps = model.decode(z, x_t, DIMS.frames)
    assert len(steps) == DIMS.frames
    for step in steps:
        np.testing.assert_allclose(step.data, x_t, atol=1e-12)


def test_decode_array_matches_decode():
    model = _model()
    x = _batch(2)
    z = np.random.default_rng(4).normal(0.0, 1.0, (2, DIMS.latent))
    steps = model.decode(z, x[:, 0, :], DIMS.frames)
    stacked = np.stack([s.data for s in steps], axis=1)
    out = model.decode_array(z, x[:, 0, :], DIMS.frames)
    np.testing.assert_allclose(out, stacked, atol=1e-12)


def test_sample_with_zero_noise_is_the_mean():
    model = _model()
    code = model.sample_code(model.encode(_batch(2)),
                             eps=np.zeros((2, DIMS.latent)))
    np.testing.assert_allclose(code.sample.data, code.mu.data, atol=1e-12)


def test_cae_mode_samples_deterministically():
    # the plain autoencoder has no noise path: the code is the mean
    model = _model(mode="cae")
    code = model.sample_code(model.encode(_batch(2)), rng=make_rng(0, "sample"))
    assert code.sample is code.mu
    assert code.eps is None


def _hand_loss(model, x, budget, aux_cap=None):
    """Recompute the scalar objective from its published parts."""
    code = model.sample_code(model.encode(x),
                             eps=np.zeros((x.shape[0], DIMS.latent)))
    x_flat = x.reshape(x.shape[0], -1)
    parts = model.loss_main(code, code.sample, x_flat, x[:, 0, :], budget,
                            aux_cap=aux_cap)
    expected = parts["recon"]
    if model.mode == "cvae":
        expected += parts["kl"]
    elif model.mode in ("full", "no_aux"):
        expected += budget.gamma_kl * (parts["kl"] - budget.i_kl)
    if model.mode == "full" and budget.gamma_c != 0.0:
        cap = parts["recon"] if aux_cap is None else aux_cap
        expected -= min(budget.gamma_c * parts["aux_mse"], cap)
    return float(parts["total"].data), expected, parts


@pytest.mark.parametrize("mode", ["full", "no_aux", "cvae", "cae"])
def test_loss_total_matches_hand_assembly(mode):
    model = _model(mode=mode)
    budget = BudgetState(gamma_kl=0.7, i_kl=1.5, gamma_c=0.1)
    total, expected, _ = _hand_loss(model, _batch(3), budget)
    assert total == pytest.approx(expected, abs=1e-10)


def test_aux_reward_is_capped():
    # the adversary bonus saturates at the cap, so a huge gamma_c cannot
    # drive the total loss to minus infinity
    model = _model()
    budget = BudgetState(gamma_kl=0.0, i_kl=1.5, gamma_c=1e9)
    total, expected, parts = _hand_loss(model, _batch(3), budget, aux_cap=0.25)
    assert total == pytest.approx(expected, abs=1e-10)
    assert parts["aux_reward"] == pytest.approx(0.25, abs=1e-12)


def test_aux_cap_defaults_to_reconstruction():
    model = _model()
    budget = BudgetState(gamma_kl=0.0, i_kl=1.5, gamma_c=1e9)
    total, expected, parts = _hand_loss(model, _batch(3), budget)
    assert total == pytest.approx(expected, abs=1e-10)
    assert parts["aux_reward"] == pytest.approx(parts["recon"], abs=1e-10)
    assert total >= -1e-10


def test_loss_main_ignores_adversary_gradients():
    # the reward term reads the adversary through frozen weights: the
    # main backward pass must leave every psi parameter untouched
    model = _model()
    x = _batch(2)
    code = model.sample_code(model.encode(x), eps=np.zeros((2, DIMS.latent)))
    parts = model.loss_main(code, code.sample, x.reshape(2, -1), x[:, 0, :],
                            BudgetState(gamma_kl=0.5))
    for ps in (model.phi, model.theta, model.psi):
        ps.zero_grad()
    parts["total"].backward()
    for name, grad in model.psi.grads().items():
        assert grad is None or not np.any(grad), name
    phi_norm = sum(float(np.abs(g).sum())
                   for g in model.phi.grads().values() if g is not None)
    assert phi_norm > 0.0


def test_loss_aux_ignores_encoder_gradients():
    # the adversary trains against a detached code: its loss must not
    # push gradients back into the encoder
    model = _model()
    x = _batch(2)
    code = model.sample_code(model.encode(x), eps=np.zeros((2, DIMS.latent)))
    loss = model.loss_aux(code.sample, x.reshape(2, -1))
    for ps in (model.phi, model.psi):
        ps.zero_grad()
    loss.backward()
    for name, grad in model.phi.grads().items():
        assert grad is None or not np.any(grad), name
    psi_norm = sum(float(np.abs(g).sum())
                   for g in model.psi.grads().values() if g is not None)
    assert psi_norm > 0.0


def test_transfer_shapes_and_batch_consistency():
    model = _model()
    x = _batch(2)
    posture = x[0, 0, :]
    single = model.transfer(x[0], posture)
    batch = model.transfer(x, np.stack([posture, x[1, 0, :]]))
    assert single.shape == (DIMS.frames, DIMS.pose_dim)
    assert batch.shape == (2, DIMS.frames, DIMS.pose_dim)
    np.testing.assert_allclose(batch[0], single, atol=1e-12)


def test_transfer_is_deterministic():
    # posterior-mean decoding: repeated calls agree bit for bit
    model = _model()
    x = _batch(1)
    a = model.transfer(x[0], x[0, 0, :])
    b = model.transfer(x[0], x[0, 0, :])
    assert np.array_equal(a, b)


def test_transfer_rejects_mismatched_counts():
    model = _model()
    with pytest.raises(ContractError):
        model.transfer(_batch(2), np.zeros(DIMS.pose_dim))


def test_interpolate_endpoints_are_transfers():
    model = _model()
    # the residual head starts at zero (decoder = copy x_t), which would
    # make every blend identical; give it weights so codes matter
    rng = np.random.default_rng(6)
    model.theta.assign("out_w", rng.normal(0.0, 0.1, (DIMS.pose_dim, DIMS.hidden)))
    model.theta.assign("out_b", rng.normal(0.0, 0.1, DIMS.pose_dim))
    x = _batch(2)
    a, b = x[0], x[1]
    at_zero = model.interpolate(a, b, 0.0)
    at_one = model.interpolate(a, b, 1.0)
    np.testing.assert_allclose(at_zero, model.transfer(a, a[0]), atol=1e-12)
    np.testing.assert_allclose(at_one, model.transfer(b, b[0]), atol=1e-12)
    midway = model.interpolate(a, b, 0.5)
    assert not np.allclose(midway, at_zero, atol=1e-8)


@pytest.mark.parametrize("lam", [-0.1, 1.5])
def test_interpolate_rejects_out_of_range(lam):
    model = _model()
    x = _batch(2)
    with pytest.raises(ContractError):
        model.interpolate(x[0], x[1], lam)


def test_param_arrays_round_trip():
    src = _model(seed=3)
    dst = _model(seed=99)
    x = _batch(2)
    assert not np.allclose(src.encode(x).mu.data, dst.encode(x).mu.data)
    state = src.param_arrays()
    assert any(k.startswith("phi/") for k in state)
    assert any(k.startswith("theta/") for k in state)
    assert any(k.startswith("psi/") for k in state)
    dst.load_param_arrays(state)
    np.testing.assert_allclose(src.encode(x).mu.data, dst.encode(x).mu.data,
                               atol=1e-15)


def test_dual_update_holds_at_budget():
    budget = BudgetState(gamma_kl=0.4, i_kl=2.0, dual_lr=1e-2)
    assert dual_update(budget, 2.0).gamma_kl == pytest.approx(0.4)


def test_dual_update_raises_pressure_above_budget():
    budget = BudgetState(gamma_kl=0.4, i_kl=2.0, dual_lr=1e-2)
    assert dual_update(budget, 3.0).gamma_kl == pytest.approx(0.41)


def test_dual_update_clamps_at_zero():
    budget = BudgetState(gamma_kl=0.005, i_kl=2.0, dual_lr=1e-2)
    assert dual_update(budget, 1.0).gamma_kl == 0.0


class _FixedEncoder:
    """Stand-in model whose encoder returns preset code vectors, keyed by
    the first coordinate of the sequence it is shown."""

    def __init__(self, table):
        self._table = {k: np.asarray(v, dtype=float) for k, v in table.items()}

    def encode(self, x):
        mu = np.stack([self._table[round(float(row[0, 0]))] for row in x])
        return SimpleNamespace(mu=SimpleNamespace(data=mu))


def test_d_beta_hand_oracle():
    # codes (0, 0) and (3, 4) sit exactly 5 apart
    stub = _FixedEncoder({0: [0.0, 0.0], 1: [3.0, 4.0]})
    a = np.zeros((4, 2))
    b = np.ones((4, 2))
    assert d_beta(stub, a, b) == pytest.approx(5.0, abs=1e-12)
    assert d_beta(stub, a, a) == pytest.approx(0.0, abs=1e-12)


def test_d_beta_zero_on_identical_inputs():
    model = _model()
    x = _batch(1)[0]
    assert d_beta(model, x, x) == 0.0


def test_d_beta_is_symmetric():
    model = _model()
    a = _batch(1)[0]
    b = _batch(1, seed=5)[0]
    assert d_beta(model, a, b) == pytest.approx(d_beta(model, b, a), abs=1e-12)
