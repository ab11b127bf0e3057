"""First-order perturbation of symmetric eigenstructure.

Eigenvalues are grouped into clusters (descending, 0-based index) that are
equal within ``1e-8 (1 + spectral radius)``. Projections are spectral sums
of eigenvector outer products.
"""
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateEigenvalue, InvalidInput
from .numerics import sym_eig_desc

CLUSTER_REL = 1e-8


@dataclass(frozen=True, eq=False)
class Eigenprojection:
    value: float
    projector: np.ndarray
    multiplicity: int


def _symmetric(C, name="matrix"):
    C = np.atleast_2d(np.asarray(C, dtype=float))
    if C.ndim != 2 or C.shape[0] != C.shape[1] or not np.all(np.isfinite(C)):
        raise InvalidInput(f"{name} must be a finite square matrix")
    if not np.allclose(C, C.T, atol=1e-12 * (1 + np.abs(C).max())):
        raise InvalidInput(f"{name} must be symmetric")
    return 0.5 * (C + C.T)


def spectral_clusters(C):
    """``(eig, groups)``: descending eigendecomposition and lists of row indices
    of ``eig.basis`` belonging to each eigenvalue cluster."""
    eig = sym_eig_desc(_symmetric(C))
    lam = eig.values
    tol = CLUSTER_REL * (1.0 + (np.abs(lam).max() if lam.size else 0.0))
    groups = []
    for i in range(lam.size):
        if groups and lam[groups[-1][-1]] - lam[i] <= tol:
            groups[-1].append(i)
        else:
            groups.append([i])
    return eig, groups


def _projector(eig, idx):
    B = eig.basis[idx]
    return B.T @ B


def eigenprojection(C, index):
    """Projection onto the eigenspace of the ``index``-th distinct eigenvalue (descending)."""
    eig, groups = spectral_clusters(C)
    if not 0 <= index < len(groups):
        raise InvalidInput(f"eigenvalue index {index} out of range [0, {len(groups)})")
    idx = groups[index]
    return Eigenprojection(float(eig.values[idx].mean()), _projector(eig, idx), len(idx))


def _reduced_resolvent(eig, groups, g):
    """``sum_{eta != lambda} (lambda - eta)^-1 P_eta`` for cluster ``g``."""
    lam = eig.values[groups[g]].mean()
    out = np.zeros((eig.basis.shape[1],) * 2)
    for h, idx in enumerate(groups):
        if h != g:
            out += _projector(eig, idx) / (lam - eig.values[idx].mean())
    return out


def _require_simple(groups, g):
    if len(groups[g]) != 1:
        raise DegenerateEigenvalue(f"eigenvalue {g} has multiplicity {len(groups[g])}")


def _direction(dC, n):
    dC = _symmetric(dC, "direction")
    if dC.shape != (n, n):
        raise InvalidInput(f"direction must be {n}x{n}, got {dC.shape}")
    return dC


def eigenprojection_derivative(C, dC, index):
    """Directional derivative of the eigenprojection of a simple eigenvalue."""
    eig, groups = spectral_clusters(C)
    if not 0 <= index < len(groups):
        raise InvalidInput(f"eigenvalue index {index} out of range [0, {len(groups)})")
    _require_simple(groups, index)
    dC = _direction(dC, eig.basis.shape[0])
    P = _projector(eig, groups[index])
    R = _reduced_resolvent(eig, groups, index)
    return P @ dC @ R + R @ dC @ P


def transformation_derivative(C, dC):
    """Derivative at the base point of the orthogonal map carrying eigenvectors
    of ``C`` to those of the perturbed matrix; antisymmetric."""
    eig, groups = spectral_clusters(C)
    for g in range(len(groups)):
        _require_simple(groups, g)
    dC = _direction(dC, eig.basis.shape[0])
    out = np.zeros_like(dC)
    for g, idx in enumerate(groups):
        P = _projector(eig, idx)
        R = _reduced_resolvent(eig, groups, g)
        out += (P @ dC @ R + R @ dC @ P) @ P
    return out


def eigenvector_derivative(C, dC, i):
    """Row-vector derivative of the ``i``-th eigenvector (descending order)."""
    eig, groups = spectral_clusters(C)
    n = eig.values.size
    if not 0 <= i < n:
        raise InvalidInput(f"eigenvector index {i} out of range [0, {n})")
    g = next(k for k, idx in enumerate(groups) if i in idx)
    _require_simple(groups, g)
    dC = _direction(dC, n)
    R = _reduced_resolvent(eig, groups, g)
    return eig.basis[i] @ dC @ R


def transformation_by_ode(C, dC, steps=10_000):
    """Integrate ``U' = sum_lambda P_lambda' P_lambda U`` along ``C + x dC`` for
    ``x`` in ``[0, 1]`` with explicit Euler; a cross-check, not a production path."""
    C = _symmetric(C)
    dC = _direction(dC, C.shape[0])
    U = np.eye(C.shape[0])
    dx = 1.0 / steps
    for s in range(steps):
        Cx = C + (s * dx) * dC
        eig, groups = spectral_clusters(Cx)
        rate = np.zeros_like(C)
        for g, idx in enumerate(groups):
            _require_simple(groups, g)
            P = _projector(eig, idx)
            R = _reduced_resolvent(eig, groups, g)
            rate += (P @ dC @ R + R @ dC @ P) @ P
        U = U + dx * rate @ U
    return U


def aligned_eigenvectors(C, reference):
    """Descending eigenvectors of ``C`` (rows) with signs matched to ``reference`` rows."""
    B = sym_eig_desc(_symmetric(C)).basis
    s = np.sign(np.sum(B * reference, axis=1))
    s[s == 0] = 1.0
    return B * s[:, None]


def transformation_matrix(C, C_new):
    """``U = sum_i v_i(C_new) v_i(C)^T`` with sign-aligned unit eigenvectors."""
    ref = sym_eig_desc(_symmetric(C)).basis
    new = aligned_eigenvectors(C_new, ref)
    return new.T @ ref


def construct_M0(d, K):
    """``d x K`` matrix with zero row sums, rank ``r = min(K - 1, d)`` and
    orthogonal rows of squared norms ``r(r+1), ..., 6, 2``."""
    if d < 1 or K < 2:
        raise InvalidInput(f"need d >= 1 and K >= 2, got d={d}, K={K}")
    r = min(K - 1, d)
    M = np.zeros((d, K))
    for i in range(r):
        m = r - 1 - i
        M[i, 0] = 1.0
        M[i, 1:m + 1] = 1.0
        M[i, m + 1] = -(m + 1.0)
    return M


# -- finite-difference audits -------------------------------------------------

QUANTITIES = ("projection", "transformation", "eigenvector")


def central_difference(C, dC, quantity, eps, index=0):
    """Float64 central difference of the chosen quantity along ``dC``."""
    C = _symmetric(C)
    dC = _direction(dC, C.shape[0])
    ref = sym_eig_desc(C).basis
    if quantity == "projection":
        f = lambda A: eigenprojection(A, index).projector  # noqa: E731
    elif quantity == "transformation":
        f = lambda A: transformation_matrix(C, A)  # noqa: E731
    elif quantity == "eigenvector":
        f = lambda A: aligned_eigenvectors(A, ref)[index]  # noqa: E731
    else:
        raise InvalidInput(f"unknown quantity {quantity!r}")
    return (f(C + eps * dC) - f(C - eps * dC)) / (2.0 * eps)


def analytic_derivative(C, dC, quantity, index=0):
    if quantity == "projection":
        return eigenprojection_derivative(C, dC, index)
    if quantity == "transformation":
        return transformation_derivative(C, dC)
    if quantity == "eigenvector":
        return eigenvector_derivative(C, dC, index)
    raise InvalidInput(f"unknown quantity {quantity!r}")


def _mp_eigvecs(A, mp):
    E, Q = mp.eigsy(A)
    n = A.rows
    order = sorted(range(n), key=lambda j: -E[j])
    return [[Q[r, j] for r in range(n)] for j in order]


def _mp_quantity(C, dC, t, quantity, index, ref, mp):
    n = C.shape[0]
    A = mp.matrix(n, n)
    for a in range(n):
        for b in range(n):
            A[a, b] = mp.mpf(C[a, b]) + t * mp.mpf(dC[a, b])
    vecs = _mp_eigvecs(A, mp)
    aligned = []
    for v, r in zip(vecs, ref):
        s = 1 if sum(x * mp.mpf(y) for x, y in zip(v, r)) >= 0 else -1
        aligned.append([s * x for x in v])
    if quantity == "eigenvector":
        return mp.matrix([aligned[index]])
    if quantity == "projection":
        v = aligned[index]
        return mp.matrix([[v[a] * v[b] for b in range(n)] for a in range(n)])
    # transformation: sum_i v_i(new) ref_i^T
    return mp.matrix([[sum(aligned[i][a] * mp.mpf(ref[i][b]) for i in range(n)) for b in range(n)]
                      for a in range(n)])


def extended_precision_errors(C, dC, quantity, eps_list=(1e-4, 1e-5, 1e-6), index=0, dps=60):
    """Max-abs central-difference error at each step size, with the perturbed
    eigenproblems solved at ``dps`` digits so rounding stays far below ``eps^2``.
    The reference derivative is evaluated at the same precision by a much
    smaller step."""
    import mpmath

    C = _symmetric(C)
    dC = _direction(dC, C.shape[0])
    ref = sym_eig_desc(C).basis
    errs = []
    with mpmath.workdps(dps):
        mp = mpmath.mp
        exact = None
        tiny = mp.mpf(10) ** (-(dps // 3))
        hi = _mp_quantity(C, dC, tiny, quantity, index, ref, mp)
        lo = _mp_quantity(C, dC, -tiny, quantity, index, ref, mp)
        exact = (hi - lo) / (2 * tiny)
        for eps in eps_list:
            e = mp.mpf(eps)
            fd = (_mp_quantity(C, dC, e, quantity, index, ref, mp)
                  - _mp_quantity(C, dC, -e, quantity, index, ref, mp)) / (2 * e)
            diff = fd - exact
            errs.append(float(max(abs(x) for x in diff)))
        # the closed-form derivative should match the extended-precision one
        analytic = np.atleast_2d(analytic_derivative(C, dC, quantity, index))
        ex = np.array([[float(exact[a, b]) for b in range(exact.cols)] for a in range(exact.rows)])
        mismatch = float(np.max(np.abs(analytic - ex)))
    return np.array(errs), mismatch


def convergence_slope(eps_list, errors):
    """Slope of ``log(error)`` against ``log(eps)``."""
    return float(np.polyfit(np.log(np.asarray(eps_list)), np.log(np.asarray(errors)), 1)[0])


def random_simple_spectrum(rng, n, gap=0.5):
    """Random symmetric matrix whose eigenvalues are separated by at least ``gap``."""
    Q, _ = np.linalg.qr(rng.standard_normal((n, n)))
    lam = np.cumsum(gap + rng.random(n))
    return (Q * lam) @ Q.T


def random_direction(rng, n):
    A = rng.standard_normal((n, n))
    return 0.5 * (A + A.T)
