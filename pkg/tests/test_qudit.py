import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bqkd.errors import DimensionMismatch, DimensionNotEven, DimensionTooSmall, InvalidPartition, NotNormalized
from bqkd.qudit import (
    BasisId,
    StateVector,
    apply_entangler,
    basis_for,
    born_probabilities,
    build_bases,
    computational_basis,
    copy_unitary,
    extract_ancilla_map,
    fourier_basis,
    is_orthonormal,
    measure,
    project_subspace,
    random_unitary,
)
from bqkd.seeding import UniformStream, draw_index, split_seed

even_dims = st.integers(min_value=2, max_value=16).map(lambda n: 2 * n)


@given(even_dims)
@settings(max_examples=15, deadline=None)
def test_bases_orthonormal_and_structured(d):
    fam = build_bases(d)
    for b in (fam.b0, fam.b1, fam.b2, fam.fourier):
        assert is_orthonormal(b)
        assert len(b.labels) == d
    s2 = 1 / np.sqrt(2)
    for m in range(d // 2):
        for s in (0, 1):
            v1 = np.zeros(d, complex)
            v1[2 * m], v1[2 * m + 1] = s2, (-1) ** s * s2
            np.testing.assert_allclose(fam.b1[2 * m + s].amps, v1, atol=1e-12)
            v2 = np.zeros(d, complex)
            v2[2 * m + 1], v2[(2 * m + 2) % d] = s2, (-1) ** s * s2
            np.testing.assert_allclose(fam.b2[2 * m + s].amps, v2, atol=1e-12)
    w = np.exp(2j * np.pi / d)
    k = d - 1
    np.testing.assert_allclose(fam.fourier[k].amps, w ** (np.arange(d) * k) / np.sqrt(d), atol=1e-12)


def test_ququart_labels():
    fam = build_bases(4)
    assert fam.b1.labels[2] == "(|2⟩+|3⟩)/√2"
    assert fam.b1.labels[3] == "(|2⟩−|3⟩)/√2"
    assert fam.b2.labels[2] == "(|3⟩+|0⟩)/√2"


def test_build_bases_errors():
    with pytest.raises(DimensionNotEven):
        build_bases(5)
    with pytest.raises(DimensionTooSmall):
        build_bases(2)


def test_small_dimension_bases_for_baselines():
    assert is_orthonormal(computational_basis(2))
    assert is_orthonormal(fourier_basis(2))
    assert basis_for(2, BasisId.FOURIER).dim == 2


def test_state_vector_validation():
    with pytest.raises(NotNormalized):
        StateVector(4, [1, 1, 0, 0])
    with pytest.raises(DimensionMismatch):
        StateVector(4, [1, 0, 0])
    with pytest.raises(DimensionMismatch):
        StateVector(1, [1])
    s = StateVector.ket(4, 2)
    with pytest.raises(ValueError):
        s.amps[0] = 1


def test_born_examples():
    fam = build_bases(4)
    np.testing.assert_allclose(born_probabilities(StateVector.ket(4, 0), fam.b1), [0.5, 0.5, 0, 0], atol=1e-15)
    np.testing.assert_allclose(born_probabilities(fam.b1[0], fam.b2), [0.25] * 4, atol=1e-15)
    np.testing.assert_allclose(born_probabilities(fam.b1[0], fam.b1), [1, 0, 0, 0], atol=1e-15)


@given(st.integers(0, 2**32 - 1), even_dims)
@settings(max_examples=30, deadline=None)
def test_born_probabilities_sum_to_one(seed, d):
    rng = np.random.default_rng(seed)
    v = rng.normal(size=d) + 1j * rng.normal(size=d)
    s = StateVector(d, v / np.linalg.norm(v))
    for b in build_bases(d):
        p = born_probabilities(s, b)
        assert p.min() >= 0
        assert abs(p.sum() - 1) < 1e-9


def test_measure_collapses_and_is_seeded():
    fam = build_bases(6)
    s = fam.b2[3]
    a = [measure(s, fam.b0, UniformStream(7))[0] for _ in range(3)]
    assert len(set(a)) == 1
    k, post = measure(s, fam.b0, UniformStream(7))
    assert k in (3, 4)
    assert post == fam.b0[k]
    # a state already in the basis measures to itself with certainty
    for i in range(6):
        assert measure(fam.b1[i], fam.b1, UniformStream(i))[0] == i


def test_measure_frequencies_match_born():
    fam = build_bases(4)
    rng = UniformStream(3)
    counts = np.bincount([measure(fam.b1[1], fam.b2, rng)[0] for _ in range(20000)], minlength=4)
    assert np.all(np.abs(counts / 20000 - 0.25) < 0.015)


def test_partial_projection_on_joint_state():
    d = 4
    s = apply_entangler(build_bases(d).b1[0], copy_unitary(d), d)
    assert s.env == d
    np.testing.assert_allclose(born_probabilities(s, build_bases(d).b1), [0.5, 0.5, 0, 0], atol=1e-12)
    k, post = measure(s, build_bases(d).b0, UniformStream(1))
    assert abs(post.norm() - 1) < 1e-12
    # the copy ancilla now agrees with Bob's outcome
    m = post.matrix
    assert abs(abs(m[k, k]) - 1) < 1e-12


def test_project_subspace():
    fam = build_bases(4)
    blocks = [[0, 1], [2, 3]]
    k, post = project_subspace(fam.b2[0], blocks, UniformStream(5))
    assert k in (0, 1)
    support = np.nonzero(np.abs(post.amps) > 1e-12)[0].tolist()
    assert set(support) <= set(blocks[k])
    # a B1 state lies in one block and is left untouched
    k, post = project_subspace(fam.b1[3], blocks, UniformStream(5))
    assert k == 1
    np.testing.assert_allclose(post.amps, fam.b1[3].amps, atol=1e-15)
    with pytest.raises(InvalidPartition):
        project_subspace(fam.b1[0], [[0, 1], [1, 2, 3]], UniformStream(1))


@given(st.integers(0, 10**6), st.integers(2, 12))
@settings(max_examples=25, deadline=None)
def test_random_unitary_is_unitary(seed, n):
    U = random_unitary(n, np.random.default_rng(seed))
    np.testing.assert_allclose(U.conj().T @ U, np.eye(n), atol=1e-10)


@given(st.integers(0, 10**6))
@settings(max_examples=20, deadline=None)
def test_ancilla_sum_rule(seed):
    U = random_unitary(16, np.random.default_rng(seed))
    E = extract_ancilla_map(U, 4, 4)
    assert E.sum_rule_residual() < 1e-9


def test_ancilla_map_of_identity_and_copy():
    I = extract_ancilla_map(np.eye(16), 4, 4)
    for i in range(4):
        for j in range(4):
            expected = 1.0 if i == j else 0.0
            assert abs(np.linalg.norm(I[i, j]) - expected) < 1e-12
    C = extract_ancilla_map(copy_unitary(4), 4, 4)
    assert abs(C[2, 2][2] - 1) < 1e-12


def test_extract_rejects_bad_shapes():
    with pytest.raises(DimensionMismatch):
        extract_ancilla_map(np.eye(12), 4, 4)


def test_draw_index_never_returns_zero_probability_outcome():
    cdf = [0.5, 0.5, 1.0]
    assert draw_index(cdf, 0.49999) == 0
    assert draw_index(cdf, 0.5) == 2
    assert draw_index([0.3, 1.0 - 1e-17, 1.0 - 1e-17], 0.99999999999999999) == 1


def test_split_seed_distinct_and_stable():
    seeds = {split_seed(12345, i) for i in range(1000)}
    assert len(seeds) == 1000
    assert split_seed(1, 2) == split_seed(1, 2)
    assert all(0 <= s < 2**64 for s in seeds)


def test_uniform_stream_matches_generator():
    a = UniformStream(99, block=7)
    ref = np.random.default_rng(99).random(20).tolist()
    assert [a.random() for _ in range(20)] == ref


def test_subset_is_exact_size_and_sorted():
    s = UniformStream(4).subset(100, 17)
    assert len(s) == len(set(s)) == 17 and s == sorted(s)
