"""Invariants checked over randomly drawn ensembles and operators."""
import numpy as np
from hypothesis import assume, given
from hypothesis import strategies as st

from enkflab.filters import Ensemble, InflationScheme, eakf_analysis, etkf_analysis, kalman_posterior_cov
from enkflab.numerics import psd_order, svd_desc, sym_eig_desc
from enkflab.observations import condition_number, whiten_and_reduce
from enkflab.perturbation import construct_M0

dims = st.integers(1, 6)
sizes = st.integers(2, 9)
seeds = st.integers(0, 2 ** 32 - 1)
square_root = st.sampled_from([etkf_analysis, eakf_analysis])


def draw(seed, K, d, q, scale=1.0):
    rng = np.random.default_rng(seed)
    members = scale * rng.standard_normal((K, d)) + rng.standard_normal(d)
    return rng, Ensemble(members), rng.standard_normal((q, d)), rng.standard_normal(q)


@given(seeds, sizes, dims, dims, square_root)
def test_square_root_posterior_matches_kalman(seed, K, d, q, update):
    _, ens, H, z = draw(seed, K, d, q)
    post = update(ens, z, H)
    target = kalman_posterior_cov(ens.covariance, H)
    assert np.allclose(post.covariance, target, atol=1e-9 * (1 + np.abs(target).max()))


@given(seeds, sizes, dims, dims, square_root, st.floats(0.0, 2.0))
def test_posterior_spread_columns_sum_to_zero(seed, K, d, q, update, lam):
    _, ens, H, z = draw(seed, K, d, q)
    post = update(ens, z, H, InflationScheme.uniform(lam))
    scale = 1 + np.abs(ens.spread).max()
    assert np.allclose(post.spread.sum(axis=1), 0.0, atol=1e-10 * scale * K)


@given(seeds, sizes, dims, dims, square_root)
def test_observable_covariance_contracts(seed, K, d, q, update):
    _, ens, H, z = draw(seed, K, d, q, scale=5.0)
    post = update(ens, z, H)
    HCH = H @ post.covariance @ H.T
    assert psd_order(HCH, np.eye(q), tol=1e-9)
    # and never exceeds the forecast in the observed directions
    assert psd_order(HCH, H @ ens.covariance @ H.T, tol=1e-8 * (1 + np.abs(HCH).max()))


@given(seeds, sizes, dims, dims, square_root)
def test_posterior_mean_matches_kalman(seed, K, d, q, update):
    _, ens, H, z = draw(seed, K, d, q)
    C = ens.covariance
    gain = C @ H.T @ np.linalg.inv(np.eye(q) + H @ C @ H.T)
    expected = ens.mean + gain @ (z - H @ ens.mean)
    assert np.allclose(update(ens, z, H).mean, expected, atol=1e-9 * (1 + np.abs(expected).max()))


@given(seeds, st.integers(1, 7), st.integers(1, 7))
def test_svd_invariants(seed, d, K):
    S = np.random.default_rng(seed).standard_normal((d, K))
    dec = svd_desc(S)
    assert np.allclose(dec.reconstruct(), S, atol=1e-10)
    assert np.allclose(dec.left @ dec.left.T, np.eye(d), atol=1e-10)
    assert np.allclose(dec.right @ dec.right.T, np.eye(K), atol=1e-10)
    assert np.all(np.diff(dec.sigma) <= 1e-14)
    # sign rule: the first significant entry of every row of the right factor is positive
    R = dec.right
    big = np.abs(R) > 1e-12 * np.abs(R).max(axis=1, keepdims=True)
    first = np.argmax(big, axis=1)
    assert np.all(R[np.arange(K), first] > 0)


@given(seeds, st.integers(1, 7))
def test_sym_eig_invariants(seed, n):
    A = np.random.default_rng(seed).standard_normal((n, n))
    A = A + A.T
    eig = sym_eig_desc(A)
    assert np.allclose(eig.reconstruct(), A, atol=1e-10)
    assert np.allclose(eig.basis @ eig.basis.T, np.eye(n), atol=1e-10)
    assert np.all(np.diff(eig.values) <= 1e-14)
    idx = np.argmax(np.abs(eig.basis), axis=1)
    assert np.all(eig.basis[np.arange(n), idx] > 0)


@given(seeds, st.integers(1, 6), st.integers(1, 6))
def test_psd_ordering_preserved_by_congruence(seed, n, m):
    rng = np.random.default_rng(seed)
    B = rng.standard_normal((n, n))
    A = B @ B.T
    P = rng.standard_normal((n, n))
    larger = A + P @ P.T
    X = rng.standard_normal((m, n))
    assert psd_order(A, larger)
    assert psd_order(X @ A @ X.T, X @ larger @ X.T, tol=1e-9 * (1 + np.abs(larger).max() * np.abs(X).max() ** 2))


@given(seeds, st.integers(1, 5), st.floats(0.01, 100.0))
def test_condition_number_scale_invariant(seed, n, c):
    H = np.random.default_rng(seed).standard_normal((n, n))
    assume(np.linalg.cond(H) < 1e8)
    assert np.isclose(condition_number(c * H), condition_number(H), rtol=1e-8)
    assert condition_number(H) >= 1.0


@given(seeds, st.integers(1, 5), st.integers(1, 5))
def test_whitening_diagonalizes(seed, q, d):
    rng = np.random.default_rng(seed)
    H = rng.standard_normal((q, d))
    L = rng.standard_normal((q, q))
    Gamma = L @ L.T + 0.5 * np.eye(q)
    ch = whiten_and_reduce(H, Gamma)
    reduced = ch.obs_map @ H @ ch.state_map.T
    assert np.allclose(reduced, ch.reduced_H, atol=1e-8 * (1 + np.abs(reduced).max()))
    assert np.allclose(ch.obs_map @ Gamma @ ch.obs_map.T, np.eye(ch.singular_values.size), atol=1e-8)


@given(st.integers(1, 8), st.integers(2, 10))
def test_M0_structure(d, K):
    M = construct_M0(d, K)
    r = min(K - 1, d)
    assert np.allclose(M.sum(axis=1), 0.0)
    assert np.linalg.matrix_rank(M) == r
    G = M @ M.T
    expected = np.zeros(d)
    expected[:r] = [(r - i) * (r - i + 1) for i in range(r)]
    assert np.allclose(G, np.diag(expected))
