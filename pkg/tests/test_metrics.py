"""Unit tests for the sequence metrics: displacement, diversity, boundary
jumps, and nearest-neighbor rankings, each checked against brute-force
recomputation or closed-form cases."""

import numpy as np
import pytest

from behaviorkit.errors import ContractError
from behaviorkit.metrics import (
    asd,
    boundary_displacement,
    fsd,
    nearest_neighbors,
    tde,
)
from behaviorkit.vae import BehaviorVAE, ModelDims


def test_tde_zero_on_identical():
    seq = np.random.default_rng(0).normal(size=(50, 17, 3))
    for t in (1, 10, 50):
        assert tde(seq, seq, t) == 0.0


def test_tde_constant_offset():
    seq = np.random.default_rng(1).normal(size=(50, 17, 3))
    for t in (1, 25, 50):
        assert tde(seq, seq + 2.0, t) == pytest.approx(4.0, abs=1e-12)


def test_tde_matches_direct_summation():
    rng = np.random.default_rng(2)
    a = rng.normal(size=(50, 17, 3))
    b = rng.normal(size=(50, 17, 3))
    direct = sum((a[9, j, c] - b[9, j, c]) ** 2
                 for j in range(17) for c in range(3)) / 51.0
    assert tde(a, b, 10) == pytest.approx(direct, rel=1e-12)


def test_tde_rejects_bad_inputs():
    a = np.zeros((50, 17, 3))
    with pytest.raises(ContractError):
        tde(a, np.zeros((49, 17, 3)), 1)
    with pytest.raises(ContractError):
        tde(a, a, 0)
    with pytest.raises(ContractError):
        tde(a, a, 51)


def test_asd_fsd_identical_pair_is_zero():
    seq = np.random.default_rng(3).normal(size=(50, 17, 3))
    assert asd([seq, seq]) == 0.0
    assert fsd([seq, seq]) == 0.0


def test_asd_unit_offset_closed_form():
    # every one of the 50*17*3 = 2550 coordinates differs by exactly 1
    a = np.zeros((50, 17, 3))
    assert asd([a, a + 1.0]) == pytest.approx(np.sqrt(2550.0), abs=1e-9)
    # final postures differ by 1 in each of 51 coordinates
    assert fsd([a, a + 1.0]) == pytest.approx(np.sqrt(51.0), abs=1e-12)


def _brute_asd(flat):
    n = len(flat)
    dists = [[np.linalg.norm(flat[i] - flat[j]) for j in range(n)]
             for i in range(n)]
    return np.mean([min(d for j, d in enumerate(row) if j != i)
                    for i, row in enumerate(dists)])


def test_asd_matches_brute_force():
    samples = np.random.default_rng(4).normal(size=(10, 50, 17, 3))
    flat = samples.reshape(10, -1)
    assert asd(samples) == pytest.approx(_brute_asd(flat), rel=1e-12)


def test_fsd_matches_brute_force():
    samples = np.random.default_rng(5).normal(size=(10, 50, 17, 3))
    flat = samples.reshape(10, -1)
    finals = samples.reshape(10, 50, -1)[:, -1]
    total = 0.0
    for i in range(10):
        j_best = min((j for j in range(10) if j != i),
                     key=lambda j: np.linalg.norm(flat[i] - flat[j]))
        total += np.linalg.norm(finals[i] - finals[j_best])
    assert fsd(samples) == pytest.approx(total / 10.0, rel=1e-12)


def test_diversity_rejects_tiny_sets():
    seq = np.zeros((50, 17, 3))
    with pytest.raises(ContractError):
        asd([seq])
    with pytest.raises(ContractError):
        fsd([seq])


def test_fsd_needs_per_frame_structure():
    with pytest.raises(ContractError):
        fsd(np.zeros((4, 2550)))


def test_boundary_displacement_hand_case():
    # two 3-frame segments; the only boundary jump is from (0,0) to (3,4)
    seq = np.array([[0.0, 0.0], [0.0, 0.0], [0.0, 0.0],
                    [3.0, 4.0], [3.0, 4.0], [3.0, 4.0]])
    assert boundary_displacement(seq, 3) == pytest.approx(5.0, abs=1e-12)


def test_boundary_displacement_averages_boundaries():
    seq = np.zeros((9, 1))
    seq[3:6] = 1.0   # jump of 1 into segment 2, jump of 1 out of it
    assert boundary_displacement(seq, 3) == pytest.approx(1.0, abs=1e-12)


def test_boundary_displacement_rejects_partial_segments():
    with pytest.raises(ContractError):
        boundary_displacement(np.zeros((7, 2)), 3)
    with pytest.raises(ContractError):
        boundary_displacement(np.zeros((3, 2)), 3)


def test_nn_posture_query_in_corpus_ranks_first():
    rng = np.random.default_rng(6)
    corpus = rng.normal(size=(8, 10, 17, 3))
    idx, dists = nearest_neighbors(corpus[3], corpus, k=3, mode="posture")
    assert idx[0] == 3
    assert dists[0] == pytest.approx(0.0, abs=1e-12)


def test_nn_posture_ignores_where_the_subject_stands():
    rng = np.random.default_rng(7)
    corpus = rng.normal(size=(6, 10, 17, 3))
    moved = corpus[2] + np.array([5.0, -3.0, 2.0])
    idx, dists = nearest_neighbors(moved, corpus, k=1, mode="posture")
    assert idx[0] == 2
    assert dists[0] == pytest.approx(0.0, abs=1e-10)


def test_nn_posture_matches_brute_force():
    rng = np.random.default_rng(8)
    corpus = rng.normal(size=(20, 10, 17, 3))
    query = rng.normal(size=(10, 17, 3))
    idx, dists = nearest_neighbors(query, corpus, k=20, mode="posture")
    rel_q = query - query[:, 0:1, :]
    expected = []
    for c in corpus:
        rel_c = c - c[:, 0:1, :]
        expected.append(np.linalg.norm(rel_c - rel_q, axis=-1).mean())
    expected = np.array(expected)
    np.testing.assert_array_equal(idx, np.argsort(expected, kind="stable"))
    np.testing.assert_allclose(dists, np.sort(expected), rtol=1e-12)


def test_nn_latent_query_in_corpus_ranks_first():
    dims = ModelDims(frames=6, joints=17, latent=8, hidden=12, aux_hidden=10)
    model = BehaviorVAE(dims, seed=1)
    corpus = np.random.default_rng(9).normal(size=(7, 6, 51))
    idx, dists = nearest_neighbors(corpus[4], corpus, k=2, mode="latent",
                                   model=model)
    assert idx[0] == 4
    # batched vs single-row matmul may differ in the last ulp
    assert dists[0] < 1e-12


def test_nn_contract_errors():
    seqs = np.zeros((3, 6, 51))
    with pytest.raises(ContractError):
        nearest_neighbors(seqs[0], seqs, mode="latent")     # no model
    with pytest.raises(ContractError):
        nearest_neighbors(seqs[0], seqs, mode="behavior")   # unknown mode
    with pytest.raises(ContractError):
        nearest_neighbors(np.zeros((5, 17, 3)), np.zeros((2, 10, 17, 3)),
                          mode="posture")                   # length mismatch
