"""Unit tests for the invertible code-space bridge: exact inversion,
log-determinants against a numeric Jacobian, the likelihood closed form,
actnorm initialization, and chained segment sampling."""

from types import SimpleNamespace

import numpy as np
import pytest

from behaviorkit.errors import ContractError
from behaviorkit.flow import FlowModel, recursive_sample
from behaviorkit.util import make_rng


def _rand_flow(dim, n_blocks, seed=0):
    """A flow with non-trivial coupling weights (identity init disabled)."""
    return FlowModel(dim, n_blocks=n_blocks, seed=seed, identity_init=False)


def test_rejects_tiny_dimension():
    with pytest.raises(ContractError):
        FlowModel(1)


def test_empty_stack_is_identity():
    flow = FlowModel(8, n_blocks=0)
    z = np.random.default_rng(0).standard_normal((5, 8))
    u, logdet = flow.forward(z)
    np.testing.assert_array_equal(u.data, z)
    np.testing.assert_array_equal(logdet.data, np.zeros(5))
    np.testing.assert_array_equal(flow.inverse(z), z)


def test_identity_init_blocks_only_shuffle():
    # zero-initialized couplings and unit actnorm leave a pure permutation,
    # whose log-determinant is exactly zero
    flow = FlowModel(8, n_blocks=3)
    z = np.random.default_rng(1).standard_normal((4, 8))
    u, logdet = flow.forward(z)
    np.testing.assert_array_equal(logdet.data, np.zeros(4))
    np.testing.assert_allclose(np.sort(u.data, axis=1), np.sort(z, axis=1),
                               atol=1e-15)


def test_round_trip_inversion():
    flow = _rand_flow(64, 6)
    z = np.random.default_rng(2).standard_normal((32, 64))
    u, _ = flow.forward(z)
    back = flow.inverse(u.data)
    assert np.max(np.abs(back - z)) < 1e-8


def test_forward_rejects_wrong_width():
    flow = _rand_flow(8, 2)
    with pytest.raises(ContractError):
        flow.forward(np.zeros((3, 9)))
    with pytest.raises(ContractError):
        flow.inverse(np.zeros((3, 9)))


def test_logdet_matches_numeric_jacobian():
    dim = 6
    flow = _rand_flow(dim, 2, seed=5)
    z0 = np.random.default_rng(3).standard_normal(dim)

    def fwd(v):
        u, _ = flow.forward(v[None])
        return u.data[0]

    eps = 1e-6
    jac = np.empty((dim, dim))
    for j in range(dim):
        step = np.zeros(dim)
        step[j] = eps
        jac[:, j] = (fwd(z0 + step) - fwd(z0 - step)) / (2 * eps)
    _, logdet = flow.forward(z0[None])
    expected = np.log(np.abs(np.linalg.det(jac)))
    assert abs(float(logdet.data[0]) - expected) < 1e-5 * max(1.0, abs(expected))


def test_nll_identity_closed_form():
    flow = FlowModel(2, n_blocks=0)
    # standard normal at the origin: density (2*pi)^-1, nll = log(2*pi)
    val = float(flow.nll(np.zeros((1, 2))).data)
    assert val == pytest.approx(np.log(2.0 * np.pi), abs=1e-12)


def test_nll_identity_equals_standard_normal():
    flow = FlowModel(8, n_blocks=0)
    z = np.random.default_rng(4).standard_normal((16, 8))
    expected = np.mean(0.5 * np.sum(z**2, axis=1) + 4.0 * np.log(2.0 * np.pi))
    assert float(flow.nll(z).data) == pytest.approx(expected, abs=1e-10)


def test_actnorm_standardized_batch_is_noop():
    flow = FlowModel(6, n_blocks=1)
    rng = np.random.default_rng(5)
    batch = rng.standard_normal((4000, 6))
    batch = (batch - batch.mean(0)) / batch.std(0)
    flow.actnorm_init(batch)
    np.testing.assert_allclose(flow.xi["b0_act_scale"].data, np.ones(6),
                               atol=1e-10)
    np.testing.assert_allclose(flow.xi["b0_act_bias"].data, np.zeros(6),
                               atol=1e-10)


def test_actnorm_standardizes_each_block_input():
    flow = FlowModel(6, n_blocks=3)
    rng = np.random.default_rng(6)
    batch = rng.standard_normal((500, 6)) * 3.0 + 1.5
    flow.actnorm_init(batch)
    # after init, the first actnorm's own output on the init batch is
    # standardized per dimension
    scale = flow.xi["b0_act_scale"].data
    bias = flow.xi["b0_act_bias"].data
    out = batch * scale + bias
    np.testing.assert_allclose(out.mean(0), np.zeros(6), atol=1e-10)
    np.testing.assert_allclose(out.std(0), np.ones(6), atol=1e-10)


def test_actnorm_floors_constant_dimension():
    flow = FlowModel(4, n_blocks=1)
    batch = np.random.default_rng(7).standard_normal((50, 4))
    batch[:, 2] = 3.0
    flow.actnorm_init(batch)
    assert np.all(np.isfinite(flow.xi["b0_act_scale"].data))
    assert flow.xi["b0_act_scale"].data[2] <= 1.0 / 1e-6 + 1e-9


def test_actnorm_refuses_double_init():
    flow = FlowModel(4, n_blocks=1)
    batch = np.random.default_rng(8).standard_normal((10, 4))
    flow.actnorm_init(batch)
    with pytest.raises(ContractError):
        flow.actnorm_init(batch)


def test_actnorm_rejects_bad_batch():
    flow = FlowModel(4, n_blocks=1)
    with pytest.raises(ContractError):
        flow.actnorm_init(np.zeros((1, 4)))
    with pytest.raises(ContractError):
        flow.actnorm_init(np.zeros(4))


def test_sampling_is_seed_deterministic():
    flow = _rand_flow(16, 4)
    a = flow.sample_behavior(10, make_rng(0, "s"))
    b = flow.sample_behavior(10, make_rng(0, "s"))
    np.testing.assert_array_equal(a, b)


def test_identity_flow_samples_are_prior_draws():
    flow = FlowModel(16, n_blocks=0)
    samples = flow.sample_behavior(10, make_rng(0, "s"))
    np.testing.assert_array_equal(samples,
                                  make_rng(0, "s").standard_normal((10, 16)))


def test_forward_recovers_sampled_noise():
    flow = _rand_flow(16, 4)
    u = make_rng(1, "u").standard_normal((10, 16))
    z = flow.inverse(u)
    u2, _ = flow.forward(z)
    assert np.max(np.abs(u2.data - u)) < 1e-8


def test_param_round_trip():
    src = _rand_flow(8, 2, seed=1)
    dst = _rand_flow(8, 2, seed=9)
    z = np.random.default_rng(9).standard_normal((4, 8))
    dst.load_param_arrays(src.param_arrays())
    np.testing.assert_array_equal(dst.forward(z)[0].data,
                                  src.forward(z)[0].data)


class _SegmentModel:
    """Fake decoder that records each conditioning posture it receives and
    walks the posture upward by 0.1 per frame."""

    def __init__(self, frames=4, pose=3, latent=5):
        self.dims = SimpleNamespace(latent=latent)
        self.frames = frames
        self.calls = []

    def decode_array(self, z, x_t):
        x_t = np.asarray(x_t, dtype=float)
        self.calls.append(x_t.copy())
        ramp = 0.1 * np.arange(1, self.frames + 1)
        return x_t[:, None, :] + ramp[None, :, None]


def test_recursive_sample_chains_last_postures():
    model = _SegmentModel()
    start = np.zeros(3)
    out = recursive_sample(model, None, start, 3, make_rng(0, "rs"))
    assert out.shape == (12, 3)
    # each segment is conditioned on the previous segment's final posture
    np.testing.assert_allclose(model.calls[0][0], start, atol=1e-15)
    np.testing.assert_allclose(model.calls[1][0], out[3], atol=1e-15)
    np.testing.assert_allclose(model.calls[2][0], out[7], atol=1e-15)


def test_recursive_sample_rejects_zero_segments():
    with pytest.raises(ContractError):
        recursive_sample(_SegmentModel(), None, np.zeros(3), 0,
                         make_rng(0, "rs"))


def test_recursive_sample_identity_flow_matches_no_flow():
    # with the empty flow, warped draws are the raw prior draws, so paired
    # runs coincide exactly
    a = recursive_sample(_SegmentModel(), None, np.zeros(3), 3,
                         make_rng(2, "rs"))
    b = recursive_sample(_SegmentModel(), FlowModel(5, n_blocks=0),
                         np.zeros(3), 3, make_rng(2, "rs"))
    np.testing.assert_array_equal(a, b)
