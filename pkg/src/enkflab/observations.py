"""Linear observations ``Z = H U + xi`` with standard-normal noise."""
from dataclasses import dataclass

import numpy as np

from .errors import InvalidInput, RankDeficient, SingularObservationNoise
from .numerics import EPS_RANK, psd_tolerance, svd_desc, sym_eig_desc


@dataclass(frozen=True, eq=False)
class ObservationOperator:
    """Observation matrix ``H`` (q x d) with independent rows.

    All-zero rows carry no information and are dropped at construction, so
    ``diag(0, 1, 1)`` becomes the 2 x 3 operator picking ``(y, z)``.
    """

    H: np.ndarray

    def __post_init__(self):
        H = np.atleast_2d(np.asarray(self.H, dtype=float))
        if H.ndim != 2 or not np.all(np.isfinite(H)):
            raise InvalidInput("observation matrix must be a finite 2-D array")
        H = H[np.any(H != 0.0, axis=1)]
        if H.shape[0]:
            rank = svd_desc(H).rank
            if rank < H.shape[0]:
                raise RankDeficient(f"observation rows are dependent (rank {rank} < {H.shape[0]})")
        object.__setattr__(self, "H", H)

    @property
    def q(self):
        return self.H.shape[0]

    @property
    def d(self):
        return self.H.shape[1]

    @property
    def full_rank(self):
        return self.q == self.d

    def apply(self, u):
        u = np.asarray(u, dtype=float)
        if u.shape[-1] != self.d:
            raise InvalidInput(f"state dimension {u.shape[-1]} != {self.d}")
        return u @ self.H.T


def observe(op, u, rng, noise_free=False):
    """``H u + xi`` with ``xi ~ N(0, I_q)``; ``noise_free`` forces ``xi = 0``."""
    Hu = op.apply(u)
    if noise_free:
        return Hu
    return Hu + rng.standard_normal(Hu.shape)


@dataclass(frozen=True, eq=False)
class CoordinateChange:
    """Orthogonal state rotation and whitening observation map that make the
    reduced observation matrix diagonal with unit-covariance noise.

    ``reduced_H`` keeps only the rows with nonzero singular value.
    """

    state_map: np.ndarray
    obs_map: np.ndarray
    singular_values: np.ndarray

    @property
    def reduced_H(self):
        r = self.singular_values.size
        d = self.state_map.shape[0]
        Lam = np.zeros((r, d))
        Lam[np.arange(r), np.arange(r)] = self.singular_values
        return Lam

    def state_to_reduced(self, u):
        return np.asarray(u, dtype=float) @ self.state_map.T

    def state_from_reduced(self, v):
        return np.asarray(v, dtype=float) @ self.state_map

    def obs_to_reduced(self, z):
        return np.asarray(z, dtype=float) @ self.obs_map.T

    def cov_from_reduced(self, C):
        return self.state_map.T @ C @ self.state_map


def whiten_and_reduce(H_raw, Gamma):
    """Build the maps from the SVD of ``Gamma^(-1/2) H_raw``."""
    H = np.atleast_2d(np.asarray(H_raw, dtype=float))
    G = np.atleast_2d(np.asarray(Gamma, dtype=float))
    q = H.shape[0]
    if G.shape != (q, q) or not np.all(np.isfinite(G)) or not np.all(np.isfinite(H)):
        raise InvalidInput(f"noise covariance must be finite {q}x{q}, got {G.shape}")
    if not np.allclose(G, G.T, atol=psd_tolerance(G)):
        raise InvalidInput("noise covariance must be symmetric")
    eig = sym_eig_desc(G)
    lam = eig.values
    if lam[-1] <= psd_tolerance(G) * max(lam[0], 1.0):
        raise SingularObservationNoise(f"noise covariance has eigenvalue {lam[-1]:.3e}")
    inv_sqrt = (eig.basis.T / np.sqrt(lam)) @ eig.basis
    # Gamma^(-1/2) H = Phi Lam Psi^T; svd_desc returns Psi^T as ``right``
    dec = svd_desc(inv_sqrt @ H, EPS_RANK)
    r = dec.rank
    return CoordinateChange(
        state_map=dec.right,
        obs_map=(dec.left.T @ inv_sqrt)[:r],
        singular_values=dec.sigma[:r],
    )


def condition_number(op):
    """``sigma_max(H) / sigma_min(H)``."""
    H = op.H if isinstance(op, ObservationOperator) else np.atleast_2d(np.asarray(op, dtype=float))
    dec = svd_desc(H)
    if H.shape[0] == 0 or dec.rank < min(H.shape):
        raise RankDeficient("condition number needs a full-rank observation matrix")
    s = dec.sigma
    return float(s[0] / s[min(H.shape) - 1])


def full_rank_sufficiency(beta_h, cond):
    """True when ``(1 - beta_h) * cond^2 < 1``."""
    if not 0.0 < beta_h < 1.0:
        raise InvalidInput(f"beta_h must lie in (0, 1), got {beta_h}")
    if not cond >= 1.0:
        raise InvalidInput(f"condition number must be >= 1, got {cond}")
    return bool((1.0 - beta_h) * cond ** 2 < 1.0)
