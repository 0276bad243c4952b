import numpy as np
import pytest
from hypothesis import given

from fermiq import classd
from fermiq.exceptions import DecompositionError, MalformedInputError, SymmetryViolationError

from conftest import modes, seeds


@given(modes, seeds)
def test_random_points_are_class_d(M, seed):
    rng = np.random.default_rng(seed)
    z = classd.random_domain_point(M, rng)
    assert classd.check_class_d(z)[0]
    ok, margin = classd.domain_check(z)
    assert ok and margin > 0


def test_sigma_zeta_roundtrip(rng):
    n = np.array([[0.3, 0.1 + 0.05j], [0.1 - 0.05j, 0.6]])
    m = np.array([[0, 0.2j], [-0.2j, 0]])
    s = classd.sigma_from_blocks(n, m)
    assert classd.check_class_d(s)[0]
    n2, m2 = classd.blocks_from_sigma(s)
    np.testing.assert_allclose(n2, n)
    np.testing.assert_allclose(m2, m)
    np.testing.assert_allclose(classd.sigma_from_zeta(classd.zeta_from_sigma(s)), s)


def test_zero_occupation_center():
    s = classd.sigma_from_blocks(0.5 * np.eye(2), np.zeros((2, 2)))
    assert np.allclose(classd.zeta_from_sigma(s), 0)


def test_bad_blocks_rejected():
    with pytest.raises(SymmetryViolationError):
        classd.sigma_from_blocks([[0.1, 0.2], [0.0, 0.3]], np.zeros((2, 2)))
    with pytest.raises(SymmetryViolationError):
        classd.sigma_from_blocks(np.eye(2) * 0.5, [[0, 0.1], [0.1, 0]])
    with pytest.raises(MalformedInputError):
        classd.mode_count(np.zeros((3, 3)))


def test_check_class_d_catches_reflection(rng):
    z = classd.random_domain_point(2, rng)
    z[0, 0] += 0.1
    z[2, 2] += 0.1
    ok, viol = classd.check_class_d(z)
    assert not ok and viol > 0.1


@given(modes, seeds)
def test_majorana_real_antisymmetric(M, seed):
    rng = np.random.default_rng(seed)
    z = classd.random_domain_point(M, rng)
    X = classd.majorana_map(z)
    assert np.isrealobj(X)
    np.testing.assert_allclose(X, -X.T)
    np.testing.assert_allclose(classd.inverse_majorana_map(X), z, atol=1e-13)
    # the domain condition reads ||X|| < 1
    assert np.linalg.norm(X, 2) < 1


def test_majorana_single_mode_value():
    X = classd.majorana_map(np.diag([0.4, -0.4]))
    np.testing.assert_allclose(X, [[0, 0.4], [-0.4, 0]], atol=1e-15)


@given(modes, seeds)
def test_polar_reconstructs(M, seed):
    rng = np.random.default_rng(seed)
    z = classd.random_domain_point(M, rng)
    pf = classd.polar_decompose(z)
    S = classd.swap_matrix(M)
    np.testing.assert_allclose(pf.reconstruct(), z, atol=1e-12)
    np.testing.assert_allclose(pf.U, S @ pf.U.conj() @ S, atol=1e-12)
    assert np.all(pf.eigvals >= 0) and np.all(np.diff(pf.eigvals) <= 0)


@pytest.mark.parametrize("vals", [[0.5, 0.5], [0.0, 0.0], [0.7, 0.0], [1.0, 1.0], [0.3, 0.3, 0.3]])
def test_polar_degenerate_clusters(rng, vals):
    M = len(vals)
    D = np.diag(np.concatenate([vals, -np.asarray(vals)])).astype(complex)
    U = classd.random_class_d_unitary(M, rng)
    z = U.conj().T @ D @ U
    pf = classd.polar_decompose(z)
    np.testing.assert_allclose(pf.reconstruct(), z, atol=1e-12)
    np.testing.assert_allclose(np.sort(pf.eigvals), np.sort(vals), atol=1e-12)


def test_polar_center_is_identity():
    pf = classd.polar_decompose(np.zeros((4, 4)))
    np.testing.assert_array_equal(pf.U, np.eye(4))


def test_polar_batch_matches_single(rng):
    zs = np.stack([classd.random_domain_point(2, rng) for _ in range(20)] + [np.zeros((4, 4))])
    U, vals = classd.polar_decompose_batch(zs)
    for i in range(zs.shape[0]):
        rec = U[i].conj().T @ np.diag(np.concatenate([vals[i], -vals[i]])) @ U[i]
        np.testing.assert_allclose(rec, zs[i], atol=1e-12)


def test_polar_rejects_non_class_d():
    with pytest.raises((SymmetryViolationError, DecompositionError)):
        classd.polar_decompose(np.diag([0.3, 0.1]))


def test_pure_points_on_boundary(rng):
    for M in (1, 2, 3):
        z = classd.random_pure_point(M, rng)
        np.testing.assert_allclose(z @ z, np.eye(2 * M), atol=1e-12)
        assert abs(classd.domain_check(z)[1]) < 1e-12
