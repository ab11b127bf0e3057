"""Ensemble analysis updates: EnKF with perturbed observations, ETKF, EAKF."""
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .errors import InvalidInput, NumericalBlowup, TooFewMembers, UnsupportedInflation
from .models import forecast, forecast_ensemble
from .numerics import inv_sqrt_shifted, psd_tolerance, shifted_eig, svd_desc, sym_eig_desc
from .observations import ObservationOperator, observe

KINDS = ("enkf", "etkf", "eakf")


class Ensemble:
    """K members in R^d stored as rows of a ``(K, d)`` array.

    ``spread`` is the d x K matrix of centered members (one column per
    member); ``covariance`` uses the ``1/(K-1)`` normalization.
    """

    def __init__(self, members):
        X = np.array(members, dtype=float, ndmin=2)
        if X.ndim != 2:
            raise InvalidInput(f"members must form a (K, d) array, got {X.shape}")
        if X.shape[0] < 2:
            raise TooFewMembers(f"need at least 2 members, got {X.shape[0]}")
        if not np.all(np.isfinite(X)):
            raise InvalidInput("ensemble has non-finite entries")
        X.setflags(write=False)
        self.members = X

    @property
    def size(self):
        return self.members.shape[0]

    @property
    def dim(self):
        return self.members.shape[1]

    @cached_property
    def mean(self):
        return self.members.mean(axis=0)

    @cached_property
    def spread(self):
        return (self.members - self.mean).T

    @cached_property
    def covariance(self):
        S = self.spread
        return (S @ S.T) / (self.size - 1)

    @classmethod
    def from_mean_spread(cls, mean, spread):
        return cls(np.asarray(mean)[None, :] + np.asarray(spread).T)

    def __repr__(self):
        return f"Ensemble(K={self.size}, d={self.dim})"


def ensemble_moments(members):
    """Return ``(mean, spread, covariance)``."""
    ens = members if isinstance(members, Ensemble) else Ensemble(members)
    return ens.mean, ens.spread, ens.covariance


@dataclass(frozen=True)
class InflationScheme:
    kind: str = "none"
    lam: float = 0.0

    def __post_init__(self):
        if self.kind not in ("none", "additive", "uniform"):
            raise InvalidInput(f"unknown inflation kind {self.kind!r}")
        if not (self.lam >= 0.0 and np.isfinite(self.lam)):
            raise InvalidInput(f"inflation parameter must be finite and >= 0, got {self.lam}")

    @classmethod
    def none(cls):
        return cls("none", 0.0)

    @classmethod
    def additive(cls, lam):
        return cls("additive", float(lam))

    @classmethod
    def uniform(cls, lam):
        return cls("uniform", float(lam))

    def check_for(self, kind):
        if self.kind == "additive" and kind != "enkf":
            raise UnsupportedInflation("additive inflation is only available for EnKF")


NO_INFLATION = InflationScheme.none()


def inflate(C, scheme, kind=None):
    """``C + lam I`` (additive) or ``(1 + lam) C`` (uniform)."""
    C = np.atleast_2d(np.asarray(C, dtype=float))
    if kind is not None:
        scheme.check_for(kind)
    if C.shape[0] != C.shape[1] or not np.all(np.isfinite(C)):
        raise InvalidInput("covariance must be a finite square matrix")
    if np.linalg.eigvalsh(0.5 * (C + C.T))[0] < -psd_tolerance(C):
        raise InvalidInput("covariance is not positive semi-definite")
    if scheme.kind == "additive":
        return C + scheme.lam * np.eye(C.shape[0])
    if scheme.kind == "uniform":
        return (1.0 + scheme.lam) * C
    return C.copy()


def _obs_matrix(op, d):
    H = op.H if isinstance(op, ObservationOperator) else np.atleast_2d(np.asarray(op, dtype=float))
    if H.shape[1] != d or not np.all(np.isfinite(H)):
        raise InvalidInput(f"observation matrix must be finite with {d} columns, got {H.shape}")
    return H


def _as_ensemble(x):
    return x if isinstance(x, Ensemble) else Ensemble(x)


def _check_obs(z, q):
    z = np.asarray(z, dtype=float).reshape(-1)
    if z.size != q or not np.all(np.isfinite(z)):
        raise InvalidInput(f"observation must be finite of length {q}")
    return z


def _gain_correction(C, H, innov):
    """Rows of ``innov @ (I + H C H^T)^-1 @ H C`` via a Cholesky solve."""
    HC = H @ C
    S = HC @ H.T
    S[np.diag_indices_from(S)] += 1.0
    fac = cho_factor(S, lower=True, check_finite=False)
    return cho_solve(fac, innov.T, check_finite=False).T @ HC


def kalman_posterior_cov(C, H):
    """``C - C H^T (H C H^T + I)^-1 H C``."""
    C = np.atleast_2d(np.asarray(C, dtype=float))
    H = np.atleast_2d(np.asarray(H, dtype=float))
    if H.shape[0] == 0:
        return C.copy()
    HC = H @ C
    return C - _gain_correction(C, H, HC.T)


def enkf_analysis(ens, z, H, rng, scheme=NO_INFLATION):
    """Perturbed-observation update; member ``k`` uses the ``k``-th noise draw."""
    ens = _as_ensemble(ens)
    scheme.check_for("enkf")
    H = _obs_matrix(H, ens.dim)
    z = _check_obs(z, H.shape[0])
    if H.shape[0] == 0:
        return ens
    C = inflate(ens.covariance, scheme) if scheme.kind != "none" else ens.covariance
    Zk = z + rng.standard_normal((ens.size, H.shape[0]))
    innov = ens.members @ H.T - Zk
    return _posterior(ens.members - _gain_correction(C, H, innov))


def _posterior(X):
    if not np.all(np.isfinite(X)) or np.max(np.abs(X)) > 1e15:
        raise NumericalBlowup("analysis left the finite range")
    return Ensemble(X)


def _inflated_spread(ens, scheme, kind):
    scheme.check_for(kind)
    S = ens.spread
    if scheme.kind == "uniform" and scheme.lam:
        S = np.sqrt(1.0 + scheme.lam) * S
    return S


def etkf_transform(S, H):
    """Symmetric ``T = (I_K + S^T H^T H S / (K - 1))^(-1/2)``."""
    HS = H @ S
    return inv_sqrt_shifted((HS.T @ HS) / (S.shape[1] - 1))


def _ensemble_space_increment(B, HB, eig, innov, K):
    """``C H^T (I + H C H^T)^-1 innov`` for ``C = B B^T / (K - 1)`` where ``eig``
    diagonalizes ``(HB)^T HB / (K - 1)``; the Woodbury form of the gain."""
    G = eig.basis
    w = (G @ (HB.T @ innov)) / (1.0 + eig.values)
    return B @ (G.T @ w) / (K - 1)


def etkf_analysis(ens, z, H, scheme=NO_INFLATION):
    """Mean by the Kalman update, spread by the symmetric square-root transform.

    The mean increment reuses the eigendecomposition behind the transform.
    """
    ens = _as_ensemble(ens)
    H = _obs_matrix(H, ens.dim)
    z = _check_obs(z, H.shape[0])
    S = _inflated_spread(ens, scheme, "etkf")
    K = ens.size
    HS = H @ S
    eig = shifted_eig((HS.T @ HS) / (K - 1))
    G = eig.basis
    T = (G.T / np.sqrt(1.0 + eig.values)) @ G
    mean = ens.mean - _ensemble_space_increment(S, HS, eig, H @ ens.mean - z, K)
    return _posterior(mean[None, :] + (S @ T).T)


def _eakf_factors(S, H):
    d, K = S.shape
    dec = svd_desc(S, full=False)
    k = dec.rank
    if k == 0:
        return None
    Q1 = dec.left[:, :k]
    L1 = dec.sigma[:k]
    R1 = dec.right[:k]
    QL = Q1 * L1
    HQL = H @ QL
    eig = shifted_eig((HQL.T @ HQL) / (K - 1))
    return QL, HQL, R1, eig


def eakf_spread(S, H, _factors=None):
    """Posterior spread on the numerical range of ``S``.

    With ``S = Q Lam R`` truncated to rank k and ``G1^T D1 G1`` the
    eigendecomposition of ``Lam1 Q1^T H^T H Q1 Lam1 / (K - 1)``, returns
    ``Q1 Lam1 G1^T (I + D1)^(-1/2) R1``. Zero spread maps to zero.
    """
    f = _eakf_factors(S, H) if _factors is None else _factors
    if f is None:
        return np.zeros_like(S)
    QL, _, R1, eig = f
    return (QL @ (eig.basis.T / np.sqrt(1.0 + eig.values))) @ R1


def eakf_analysis(ens, z, H, scheme=NO_INFLATION):
    """Mean by the Kalman update, spread by the rank-aware adjustment of :func:`eakf_spread`."""
    ens = _as_ensemble(ens)
    H = _obs_matrix(H, ens.dim)
    z = _check_obs(z, H.shape[0])
    S = _inflated_spread(ens, scheme, "eakf")
    K = ens.size
    f = _eakf_factors(S, H)
    if f is None:
        return _posterior(np.broadcast_to(ens.mean, (K, ens.dim)).copy())
    QL, HQL, _, eig = f
    mean = ens.mean - _ensemble_space_increment(QL, HQL, eig, H @ ens.mean - z, K)
    return _posterior(mean[None, :] + eakf_spread(S, H, f).T)


def eakf_spread_with_basis(S, H, basis):
    """Full-matrix adjustment ``Q Lam G^T (I + D)^(-1/2) Lam^+ Q^T S`` for a caller-chosen
    eigenbasis ``G`` of ``Lam^T Q^T H^T H Q Lam / (K - 1)`` (rows are eigenvectors).

    Any valid ``G`` satisfies the eigen-equation, but only the block choice
    used by :func:`eakf_spread` reproduces the posterior covariance when
    ``S`` is rank deficient.
    """
    S = np.asarray(S, dtype=float)
    H = np.atleast_2d(np.asarray(H, dtype=float))
    G = np.asarray(basis, dtype=float)
    d, K = S.shape
    dec = svd_desc(S)
    Lam = dec.values
    QL = dec.left @ Lam
    A = (QL.T @ H.T @ H @ QL) / (K - 1)
    D = G @ A @ G.T
    if not np.allclose(G @ G.T, np.eye(K), atol=1e-10) or not np.allclose(D, np.diag(np.diag(D)), atol=1e-10):
        raise InvalidInput("basis must be orthogonal and diagonalize the reduced matrix")
    Lpinv = np.zeros((K, d))
    nz = dec.sigma > 0
    idx = np.flatnonzero(nz)
    Lpinv[idx, idx] = 1.0 / dec.sigma[idx]
    mid = G.T / np.sqrt(1.0 + np.clip(np.diag(D), 0.0, None))
    return QL @ mid @ Lpinv @ dec.left.T @ S


ANALYSES = {"etkf": etkf_analysis, "eakf": eakf_analysis}


def analysis(kind, ens, z, H, rng=None, scheme=NO_INFLATION):
    if kind == "enkf":
        return enkf_analysis(ens, z, H, rng, scheme)
    try:
        return ANALYSES[kind](ens, z, H, scheme)
    except KeyError:
        raise InvalidInput(f"unknown filter kind {kind!r}") from None


def filter_step(kind, model, op, ens, signal, streams, step, scheme=NO_INFLATION, obs=None):
    """One forecast-observe-analyse cycle.

    Returns ``(ensemble, signal, z)``. Every draw comes from ``streams`` keyed
    on ``step``; ``obs`` overrides the observation when given.
    """
    if kind not in KINDS:
        raise InvalidInput(f"unknown filter kind {kind!r}")
    scheme.check_for(kind)
    ens = _as_ensemble(ens)
    signal = forecast(model, signal, streams.rng("signal", step))
    fc = Ensemble(forecast_ensemble(model, ens.members, streams.rng("forecast", step)))
    if obs is None:
        H = op if isinstance(op, ObservationOperator) else ObservationOperator(op)
        z = observe(H, signal, streams.rng("obs", step))
    else:
        z = np.asarray(obs, dtype=float)
    post = analysis(kind, fc, z, op, streams.rng("perturb", step) if kind == "enkf" else None, scheme)
    return post, signal, z
