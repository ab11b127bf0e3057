import numpy as np
import pytest

from enkflab.errors import InvalidInput, NotPSD
from enkflab.numerics import inv_sqrt_shifted, psd_order, svd_desc, sym_eig_desc
from enkflab.perturbation import construct_M0

from conftest import random_psd


def test_sym_eig_identity_reconstructs():
    eig = sym_eig_desc(np.eye(3))
    np.testing.assert_array_equal(eig.values, [1.0, 1.0, 1.0])
    np.testing.assert_allclose(eig.reconstruct(), np.eye(3), atol=1e-14)


def test_sym_eig_sorts_descending():
    eig = sym_eig_desc(np.diag([1.0, 3.0, 2.0]))
    np.testing.assert_array_equal(eig.values, [3.0, 2.0, 1.0])
    np.testing.assert_array_equal(np.abs(eig.basis), np.eye(3)[[1, 2, 0]])


def test_sym_eig_random_reconstruction(rng):
    A = rng.standard_normal((5, 5))
    A = A + A.T
    eig = sym_eig_desc(A)
    assert np.linalg.norm(eig.reconstruct() - A) < 1e-10 * np.linalg.norm(A)
    assert np.linalg.norm(eig.basis @ eig.basis.T - np.eye(5)) < 1e-10
    assert np.all(np.diff(eig.values) <= 0)


def test_sym_eig_sign_rule_dominant_entry_positive(rng):
    A = rng.standard_normal((6, 6))
    eig = sym_eig_desc(A + A.T)
    idx = np.argmax(np.abs(eig.basis), axis=1)
    assert np.all(eig.basis[np.arange(6), idx] > 0)


def test_sym_eig_rejects_nonfinite():
    with pytest.raises(InvalidInput):
        sym_eig_desc(np.array([[1.0, np.nan], [np.nan, 1.0]]))


def test_svd_of_M0_d2_K3():
    dec = svd_desc(construct_M0(2, 3))
    np.testing.assert_allclose(dec.sigma, [np.sqrt(6.0), np.sqrt(2.0)], rtol=1e-14)
    assert dec.rank == 2


def test_svd_zero_matrix():
    dec = svd_desc(np.zeros((3, 4)))
    assert dec.rank == 0
    assert not np.any(dec.values)


def test_svd_random_against_gram_eigenvalues(rng):
    S = rng.standard_normal((4, 7))
    dec = svd_desc(S)
    assert np.linalg.norm(dec.reconstruct() - S) < 1e-10 * np.linalg.norm(S)
    oracle = np.sqrt(np.sort(np.linalg.eigvalsh(S @ S.T))[::-1])
    np.testing.assert_allclose(dec.sigma, oracle, rtol=1e-12)


def test_svd_sign_rule_first_significant_entry(rng):
    S = rng.standard_normal((3, 5))
    R = svd_desc(S).right
    for row in R[:3]:
        first = row[np.flatnonzero(np.abs(row) > 1e-12 * np.abs(row).max())[0]]
        assert first > 0


def test_svd_economy_shapes(rng):
    S = rng.standard_normal((6, 3))
    dec = svd_desc(S, full=False)
    assert dec.left.shape == (6, 3)
    assert dec.values.shape == (3, 3)
    np.testing.assert_allclose(dec.reconstruct(), S, atol=1e-12)


def test_inv_sqrt_trivial_cases():
    np.testing.assert_allclose(inv_sqrt_shifted(np.zeros((3, 3))), np.eye(3), atol=1e-15)
    np.testing.assert_allclose(inv_sqrt_shifted(3.0 * np.eye(2)), 0.5 * np.eye(2), atol=1e-15)


def test_inv_sqrt_random_psd(rng):
    C = random_psd(rng, 6)
    T = inv_sqrt_shifted(C)
    assert np.linalg.norm(T @ T @ (np.eye(6) + C) - np.eye(6)) < 1e-10
    assert np.linalg.norm(T @ C - C @ T) < 1e-10 * (1 + np.linalg.norm(C))


def test_inv_sqrt_rejects_indefinite():
    with pytest.raises(NotPSD):
        inv_sqrt_shifted(np.diag([1.0, -0.5]))


def test_psd_order_examples(rng):
    assert psd_order(np.zeros((2, 2)), np.eye(2))
    assert not psd_order(2 * np.eye(2), np.eye(2))
    A = random_psd(rng, 4)
    assert psd_order(A @ np.linalg.inv(A + np.eye(4)), np.eye(4))


def test_psd_order_shape_mismatch():
    with pytest.raises(InvalidInput):
        psd_order(np.eye(2), np.eye(3))


def test_decompositions_are_bitwise_deterministic(rng):
    S = rng.standard_normal((5, 8))
    a, b = svd_desc(S), svd_desc(S.copy())
    assert np.array_equal(a.left, b.left) and np.array_equal(a.right, b.right)
    C = S @ S.T
    assert np.array_equal(sym_eig_desc(C).basis, sym_eig_desc(C.copy()).basis)
