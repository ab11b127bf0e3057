"""Numerical audits run from the command line."""
from dataclasses import dataclass

import numpy as np

from ..diagnostics import RANK_DEFICIENT_SPREAD
from ..errors import AuditFailed, DegenerateEigenvalue, InvalidInput
from ..filters import Ensemble, eakf_analysis, eakf_spread, eakf_spread_with_basis
from ..numerics import svd_desc, sym_eig_desc
from ..perturbation import (
    QUANTITIES,
    analytic_derivative,
    central_difference,
    construct_M0,
    convergence_slope,
    extended_precision_errors,
    random_direction,
    random_simple_spectrum,
)

JACOBIAN_FLOOR = 1e-6


def rank_deficient_basis_demo():
    """Rank-deficient spread with no observation: the rank-aware adjustment keeps
    the spread, the orthogonal basis ``G = R^T`` shrinks it."""
    S_hat = RANK_DEFICIENT_SPREAD
    H = np.zeros((2, 2))
    K = S_hat.shape[1]
    prior = S_hat @ S_hat.T / (K - 1)
    correct = eakf_spread(S_hat, H)
    wrong = eakf_spread_with_basis(S_hat, H, svd_desc(S_hat).right.T)
    return {
        "spread": S_hat,
        "correct": correct,
        "wrong": wrong,
        "correct_residual": float(np.linalg.norm(correct @ correct.T / (K - 1) - prior)),
        "wrong_residual": float(np.linalg.norm(wrong @ wrong.T / (K - 1) - prior)),
        "wrong_ratio": float(np.trace(wrong @ wrong.T) / np.trace(S_hat @ S_hat.T)),
    }


def descending_diagonal_obs(d, q):
    """``q x d`` matrix with ``q, q-1, ..., 1`` on the diagonal."""
    H = np.zeros((q, d))
    m = min(q, d)
    H[np.arange(m), np.arange(m)] = np.arange(q, q - m, -1, dtype=float)
    return H


@dataclass
class JacobianReport:
    d: int
    K: int
    q: int
    min_singular: float
    max_singular: float
    reduced_spectrum: np.ndarray
    floor: float
    offset: float = 0.0

    @property
    def passed(self):
        return self.min_singular > self.floor


def _eakf_map(y, d, K, H, z):
    signal = y[:d]
    members = y[d:].reshape(K, d)
    post = eakf_analysis(Ensemble(members), z, H)
    return np.concatenate([signal, post.members.ravel()])


def eakf_jacobian_audit(d, K, q, floor=JACOBIAN_FLOOR, eps=1e-6, offset=0.0, rng=None):
    """Smallest singular value of the central-difference Jacobian of the EAKF
    update at the point whose forecast members are the columns of ``M0`` and
    whose signal is zero. ``offset`` moves the base point by that multiple of
    a random unit-variance direction."""
    if d < 1 or K < 2 or q < 1:
        raise InvalidInput(f"need d >= 1, K >= 2, q >= 1; got d={d}, K={K}, q={q}")
    M0 = construct_M0(d, K)
    H = descending_diagonal_obs(d, q)
    z = np.zeros(q)
    y0 = np.concatenate([np.zeros(d), M0.T.ravel()])
    if offset:
        rng = np.random.default_rng(0) if rng is None else rng
        y0 = y0 + offset * rng.standard_normal(y0.size)
    # the reduced matrix must already be diagonal with a simple nonzero spectrum
    reduced = sym_eig_desc(M0.T @ H.T @ H @ M0 / (K - 1)).values
    nonzero = reduced[reduced > 1e-10 * max(1.0, reduced[0])]
    if np.any(np.diff(nonzero) >= -1e-10 * max(1.0, reduced[0])):
        raise DegenerateEigenvalue(f"repeated nonzero eigenvalue at the base point: {nonzero}")
    n = y0.size
    J = np.empty((n, n))
    for j in range(n):
        e = np.zeros(n)
        e[j] = eps
        J[:, j] = (_eakf_map(y0 + e, d, K, H, z) - _eakf_map(y0 - e, d, K, H, z)) / (2.0 * eps)
    if not np.all(np.isfinite(J)):
        raise AuditFailed("finite-difference Jacobian has non-finite entries")
    sv = np.linalg.svd(J, compute_uv=False)
    return JacobianReport(d, K, q, float(sv[-1]), float(sv[0]), reduced, floor, offset)


@dataclass
class PerturbationReport:
    instances: int
    max_error: dict
    slopes: dict
    tolerance: float

    @property
    def passed(self):
        return all(e < self.tolerance for e in self.max_error.values()) and \
            all(abs(s - 2.0) <= 0.5 for s in self.slopes.values())


def perturbation_audit(count, rng, n=4, eps=1e-6, tolerance=1e-4, slope_eps=(1e-4, 1e-5, 1e-6)):
    """Worst central-difference error over ``count`` random instances and the
    convergence slope of each quantity on the first instance."""
    worst = {q: 0.0 for q in QUANTITIES}
    slopes = {}
    for i in range(count):
        C = random_simple_spectrum(rng, n)
        dC = random_direction(rng, n)
        for qty in QUANTITIES:
            fd = central_difference(C, dC, qty, eps)
            an = analytic_derivative(C, dC, qty)
            worst[qty] = max(worst[qty], float(np.max(np.abs(fd - an))))
            if i == 0:
                errs, _ = extended_precision_errors(C, dC, qty, slope_eps)
                slopes[qty] = convergence_slope(slope_eps, errs)
    return PerturbationReport(count, worst, slopes, tolerance)
