"""Dense linear-algebra kernel with fixed ordering and sign conventions.

Every decomposition here returns descending spectra and a deterministic sign
choice for the vectors, so that filter output is reproducible bit for bit.
"""
from dataclasses import dataclass

import numpy as np

from .errors import InvalidInput, NotPSD

EPS_REC = 1e-10
EPS_ORTH = 1e-10
EPS_RANK = 1e-12


def psd_tolerance(C):
    """Negative-eigenvalue slack accepted before a matrix counts as not PSD."""
    return 1e-12 * (1.0 + np.linalg.norm(C, 2))


def _as_finite_matrix(A, name="matrix"):
    A = np.asarray(A, dtype=float)
    if A.ndim != 2:
        raise InvalidInput(f"{name} must be two-dimensional, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise InvalidInput(f"{name} has non-finite entries")
    return A


@dataclass(frozen=True, eq=False)
class SymEig:
    """``A = basis.T @ diag(values) @ basis``; rows of ``basis`` are eigenvectors."""

    basis: np.ndarray
    values: np.ndarray

    def reconstruct(self):
        return (self.basis.T * self.values) @ self.basis


@dataclass(frozen=True, eq=False)
class Svd:
    """``S = left @ values @ right`` with ``values`` the d x K diagonal-rectangular factor."""

    left: np.ndarray
    values: np.ndarray
    right: np.ndarray
    rank: int

    @property
    def sigma(self):
        return np.diagonal(self.values).copy()

    def reconstruct(self):
        return self.left @ self.values @ self.right


def _dominant_sign(rows):
    # sign of the largest-magnitude entry per row; first one wins on exact ties
    idx = np.argmax(np.abs(rows), axis=1)
    s = np.sign(rows[np.arange(rows.shape[0]), idx])
    s[s == 0] = 1.0
    return s


def _first_significant_sign(rows, tol):
    if rows.size == 0:
        return np.ones(rows.shape[0])
    mag = np.abs(rows)
    big = mag > tol * np.maximum(mag.max(axis=1, keepdims=True), 1e-300)
    first = np.argmax(big, axis=1)
    lead = rows[np.arange(rows.shape[0]), first]
    return np.where(big.any(axis=1) & (lead < 0), -1.0, 1.0)


def sym_eig_desc(A):
    """Symmetric eigendecomposition with eigenvalues in descending order.

    The input is symmetrized first. Each eigenvector (row of ``basis``) is
    oriented so that its largest-magnitude entry is positive.
    """
    A = _as_finite_matrix(A)
    if A.shape[0] != A.shape[1]:
        raise InvalidInput(f"expected a square matrix, got shape {A.shape}")
    A = 0.5 * (A + A.T)
    w, v = np.linalg.eigh(A)
    order = np.argsort(-w, kind="stable")
    values = w[order]
    basis = v[:, order].T
    basis = basis * _dominant_sign(basis)[:, None]
    return SymEig(basis=np.ascontiguousarray(basis), values=values)


def svd_desc(S, rank_tol=EPS_RANK, full=True):
    """SVD ``S = Q Lambda R`` with descending singular values.

    ``rank`` counts singular values above ``rank_tol * sigma_max``. For each
    row of ``R`` the first entry exceeding ``rank_tol`` (relative to the row
    maximum) is made positive, flipping the matching column of ``Q`` along
    with it. Columns of ``Q`` without a partner row follow the same rule.
    With ``full=False`` only the first ``min(d, K)`` columns of ``Q`` are
    kept and ``values`` has ``min(d, K)`` rows.
    """
    S = _as_finite_matrix(S)
    d, K = S.shape
    Q, sig, R = np.linalg.svd(S, full_matrices=True)
    p = sig.size
    if not full:
        Q = Q[:, :p]
        d = p
    signs = _first_significant_sign(R, rank_tol)
    R = R * signs[:, None]
    Q = Q.copy()
    Q[:, :p] *= signs[:p]
    if d > p:
        Q[:, p:] *= _first_significant_sign(Q[:, p:].T, rank_tol)
    smax = sig[0] if p else 0.0
    rank = int(np.count_nonzero(sig > rank_tol * smax)) if smax > 0 else 0
    values = np.zeros((d, K))
    values[np.arange(p), np.arange(p)] = sig
    return Svd(left=Q, values=values, right=R, rank=rank)


def shifted_eig(C):
    """Eigendecomposition of PSD ``C`` with round-off negatives clamped to zero.

    Raises NotPSD when an eigenvalue falls below ``-psd_tolerance(C)``.
    """
    C = _as_finite_matrix(C)
    eig = sym_eig_desc(C)
    # spectral norm of a symmetric matrix is its largest |eigenvalue|
    tol = 1e-12 * (1.0 + (np.abs(eig.values).max() if eig.values.size else 0.0))
    if eig.values.size and eig.values[-1] < -tol:
        raise NotPSD(f"minimum eigenvalue {eig.values[-1]:.3e} below -{tol:.1e}")
    return SymEig(basis=eig.basis, values=np.clip(eig.values, 0.0, None))


def inv_sqrt_shifted(C):
    """Return ``(I + C)^(-1/2)`` for symmetric positive semi-definite ``C``."""
    eig = shifted_eig(C)
    G = eig.basis
    return (G.T * (1.0 / np.sqrt(1.0 + eig.values))) @ G


def psd_order(A, B, tol=1e-12):
    """True iff ``A <= B`` in the Loewner order, up to ``tol`` on the eigenvalues of ``B - A``."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.atleast_2d(np.asarray(B, dtype=float))
    if A.shape != B.shape or A.shape[0] != A.shape[1]:
        raise InvalidInput(f"shape mismatch {A.shape} vs {B.shape}")
    D = B - A
    D = 0.5 * (D + D.T)
    return bool(np.linalg.eigvalsh(D)[0] >= -tol)


def min_eig(A):
    A = np.asarray(A, dtype=float)
    return float(np.linalg.eigvalsh(0.5 * (A + A.T))[0])
