"""Signal models and their energy functionals.

A model supplies the one-step forecast map plus system noise. SDE models
``du = psi(u) dt + Sigma dW`` are integrated over one observation interval
``h`` with ``n_sub`` Euler-Maruyama substeps; the linear contraction model is
an exact discrete-time map ``u -> A u + zeta``.
"""
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import kernels
from .errors import InvalidInput, NumericalBlowup

BLOWUP = 1e15
DEFAULT_SUBSTEP = 1e-3


@dataclass(frozen=True, eq=False)
class EnergyFunctional:
    """Shifted quadratic form ``E(u) = (u - shift)^T weight (u - shift)``."""

    weight: np.ndarray
    shift: np.ndarray

    def __post_init__(self):
        W = np.atleast_2d(np.asarray(self.weight, dtype=float))
        c = np.asarray(self.shift, dtype=float).reshape(-1)
        if W.shape != (c.size, c.size):
            raise InvalidInput(f"weight {W.shape} does not match shift of length {c.size}")
        if not np.allclose(W, W.T) or np.linalg.eigvalsh(0.5 * (W + W.T))[0] < -1e-12 * (1 + np.abs(W).max()):
            raise InvalidInput("energy weight must be symmetric positive semi-definite")
        object.__setattr__(self, "weight", W)
        object.__setattr__(self, "shift", c)

    @property
    def dim(self):
        return self.shift.size

    @classmethod
    def quadratic(cls, weight, shift=None):
        W = np.atleast_2d(np.asarray(weight, dtype=float))
        return cls(W, np.zeros(W.shape[0]) if shift is None else shift)

    @classmethod
    def kinetic(cls, d):
        return cls(np.eye(d), np.zeros(d))

    @classmethod
    def observed(cls, H):
        """``|H u|^2`` as a functional on the state space."""
        H = np.atleast_2d(np.asarray(H, dtype=float))
        return cls(H.T @ H, np.zeros(H.shape[1]))

    def __call__(self, u):
        return eval_energy(self, u)

    def gradient(self, u):
        return 2.0 * (np.asarray(u, dtype=float) - self.shift) @ self.weight


def eval_energy(f, u):
    """Evaluate ``f`` at a state (returns float) or at each row of a batch."""
    u = np.asarray(u, dtype=float)
    if u.shape[-1] != f.dim:
        raise InvalidInput(f"state dimension {u.shape[-1]} != energy dimension {f.dim}")
    x = u - f.shift
    val = np.einsum("...i,ij,...j->...", x, f.weight, x)
    return float(val) if val.ndim == 0 else val


@dataclass(frozen=True, eq=False)
class ModelSpec:
    """A signal model.

    ``noise_factor`` is a ``d x m`` matrix, a scalar ``s`` meaning ``s * I``,
    or a callable mapping a ``(K, d)`` batch to ``(K, d, m)`` factors for
    state-dependent noise. ``drift`` acts on arrays of shape ``(..., d)``.
    """

    name: str
    dim: int
    h: float
    drift: Optional[Callable] = None
    noise_factor: object = 0.0
    n_sub: int = 1
    linear_map: Optional[np.ndarray] = None
    kernel: Optional[str] = None
    params: dict = field(default_factory=dict)
    energies: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.h > 0:
            raise InvalidInput(f"step h must be positive, got {self.h}")
        if int(self.n_sub) < 1:
            raise InvalidInput(f"substep count must be >= 1, got {self.n_sub}")
        object.__setattr__(self, "n_sub", int(self.n_sub))
        if self.drift is None and self.linear_map is None:
            raise InvalidInput("model needs a drift or a linear map")
        nf = self.noise_factor
        if not callable(nf):
            if np.ndim(nf) == 0:
                s = float(nf)
                nf = s * np.eye(self.dim)
            nf = np.atleast_2d(np.asarray(nf, dtype=float))
            if nf.shape[0] != self.dim or not np.all(np.isfinite(nf)):
                raise InvalidInput(f"noise factor must be finite with {self.dim} rows, got {nf.shape}")
            object.__setattr__(self, "noise_factor", nf)
        object.__setattr__(self, "_scale", _identity_multiple(nf))

    @property
    def noise_scale(self):
        """``s`` when the noise factor is ``s * I``, else None."""
        return self._scale

    @property
    def dt(self):
        return self.h / self.n_sub

    @property
    def state_dependent_noise(self):
        return callable(self.noise_factor)

    @property
    def deterministic(self):
        return not self.state_dependent_noise and not np.any(self.noise_factor)

    def noise_cov(self):
        """Covariance of the one-step system noise ``zeta`` for constant noise (exact for
        the linear map, the Euler-Maruyama accumulation ``h Sigma Sigma^T`` otherwise)."""
        S = self.noise_factor
        if self.linear_map is not None:
            return S @ S.T
        return self.h * (S @ S.T)


def _identity_multiple(S):
    if callable(S) or S.shape[0] != S.shape[1]:
        return None
    s = S[0, 0]
    return float(s) if np.array_equal(S, s * np.eye(S.shape[0])) else None


def _check_batch(model, states):
    X = np.asarray(states, dtype=float)
    if X.ndim != 2 or X.shape[1] != model.dim:
        raise InvalidInput(f"expected states of shape (K, {model.dim}), got {X.shape}")
    if not np.all(np.isfinite(X)):
        raise InvalidInput("state has non-finite entries")
    return np.ascontiguousarray(X)


def _blowup(out, k, single):
    raise NumericalBlowup(
        "trajectory left the finite range" + ("" if single else f" (member {k})"),
        last_state=out[k].copy(),
        member=None if single else k,
    )


def forecast_ensemble(model, states, rng, _single=False):
    """Advance each row of ``states`` by one observation interval.

    Noise is drawn as one block ``(K, n_sub, m)`` (``(K, m)`` for the linear
    map); member ``k`` consumes slice ``k``, so a given member's trajectory is
    fixed by the stream and its position.
    """
    X = _check_batch(model, states)
    K, d = X.shape
    if model.linear_map is not None:
        out = X @ model.linear_map.T
        if not model.deterministic:
            xi = rng.standard_normal((K, model.noise_factor.shape[1]))
            out = out + xi @ model.noise_factor.T
        with np.errstate(invalid="ignore"):
            bad = ~np.all(np.isfinite(out) & (np.abs(out) <= BLOWUP), axis=1)
        if bad.any():
            k = int(np.flatnonzero(bad)[0])
            out[k] = X[k]
            _blowup(out, k, _single)
        return out

    dt = model.dt
    if model.state_dependent_noise:
        return _em_generic(model, X, rng, _single)
    if model.deterministic:
        incr = np.zeros((K, model.n_sub, d))
    else:
        S = model.noise_factor
        xi = rng.standard_normal((K, model.n_sub, S.shape[1]))
        s = model.noise_scale
        if s is not None:
            xi *= np.sqrt(dt) * s
            incr = xi
        else:
            incr = np.ascontiguousarray(xi @ (np.sqrt(dt) * S).T)
    p = model.params
    if model.kernel == "lorenz96":
        out, k = kernels.em_lorenz96(X, incr, float(p["F"]), dt)
    elif model.kernel == "lorenz63":
        out, k = kernels.em_lorenz63(X, incr, float(p["sigma"]), float(p["r"]), float(p["b"]), dt)
    else:
        out, k = _em_loop(model.drift, X, incr, dt)
    if k >= 0:
        _blowup(out, k, _single)
    return out


def _em_loop(drift, X, incr, dt):
    u0 = X.copy()
    u = X.copy()
    alive = np.ones(u.shape[0], dtype=bool)
    for j in range(incr.shape[1]):
        with np.errstate(over="ignore", invalid="ignore"):
            new = u + dt * drift(u) + incr[:, j]
            bad = ~np.all(np.isfinite(new) & (np.abs(new) <= BLOWUP), axis=1) & alive
        alive &= ~bad
        u[alive] = new[alive]
    if alive.all():
        return u, -1
    k = int(np.flatnonzero(~alive)[0])
    u[k + 1:] = u0[k + 1:]
    return u, k


def _em_generic(model, X, rng, single):
    K, d = X.shape
    dt = model.dt
    probe = np.asarray(model.noise_factor(X[:1]))
    m = probe.shape[-1]
    xi = rng.standard_normal((K, model.n_sub, m))
    u0 = X.copy()
    u = X.copy()
    alive = np.ones(K, dtype=bool)
    sq = np.sqrt(dt)
    for j in range(model.n_sub):
        with np.errstate(over="ignore", invalid="ignore"):
            Sig = np.asarray(model.noise_factor(u))
            new = u + dt * model.drift(u) + sq * np.einsum("kij,kj->ki", Sig, xi[:, j])
            bad = ~np.all(np.isfinite(new) & (np.abs(new) <= BLOWUP), axis=1) & alive
        alive &= ~bad
        u[alive] = new[alive]
    if not alive.all():
        k = int(np.flatnonzero(~alive)[0])
        u[k + 1:] = u0[k + 1:]
        _blowup(u, k, single)
    return u


def forecast(model, state, rng):
    """One realization of ``Psi_h(state) + zeta``; deterministic given the stream state."""
    u = np.asarray(state, dtype=float).reshape(1, -1)
    return forecast_ensemble(model, u, rng, _single=True)[0]


def energy_generator(model, energy, u):
    """Continuous-time generator ``L E(u) = grad E . psi(u) + tr(Sigma^T W Sigma)``."""
    u = np.asarray(u, dtype=float)
    g = energy.gradient(u)
    val = np.sum(g * model.drift(u), axis=-1)
    if not model.state_dependent_noise:
        S = model.noise_factor
        val = val + np.trace(S.T @ energy.weight @ S)
    return val


# -- drifts -----------------------------------------------------------------

def lorenz63_drift(u, sigma=10.0, r=28.0, b=8.0 / 3.0):
    u = np.asarray(u, dtype=float)
    x, y, z = u[..., 0], u[..., 1], u[..., 2]
    return np.stack([sigma * (y - x), x * (r - z) - y, x * y - b * z], axis=-1)


def lorenz96_drift(u, F=8.0):
    u = np.asarray(u, dtype=float)
    if u.shape[-1] < 4:
        raise InvalidInput(f"Lorenz 96 needs N >= 4, got {u.shape[-1]}")
    adv = (np.roll(u, -1, axis=-1) - np.roll(u, 2, axis=-1)) * np.roll(u, 1, axis=-1)
    return adv - u + F


def linear_contraction_step(A, u, rng, R=None):
    """``A u + zeta`` with ``zeta ~ N(0, R)``."""
    A = _check_contraction(A)
    u = np.asarray(u, dtype=float)
    out = A @ u
    if R is not None and np.any(R):
        out = out + _psd_sqrt(R) @ rng.standard_normal(A.shape[0])
    return out


def _check_contraction(A, beta=None):
    A = np.atleast_2d(np.asarray(A, dtype=float))
    if A.shape[0] != A.shape[1] or not np.all(np.isfinite(A)):
        raise InvalidInput(f"contraction must be a finite square matrix, got {A.shape}")
    norm = np.linalg.norm(A, 2)
    if norm >= 1.0:
        raise InvalidInput(f"operator norm {norm:.6g} is not a contraction")
    if beta is not None:
        if not 0.0 < beta < 1.0:
            raise InvalidInput(f"beta must lie in (0, 1), got {beta}")
        if norm > 1.0 - beta + 1e-12:
            raise InvalidInput(f"operator norm {norm:.6g} exceeds 1 - beta = {1 - beta:.6g}")
    return A


def _psd_sqrt(R):
    R = np.atleast_2d(np.asarray(R, dtype=float))
    w, v = np.linalg.eigh(0.5 * (R + R.T))
    if w[0] < -1e-12 * (1 + abs(w[-1])):
        raise InvalidInput("noise covariance is not positive semi-definite")
    return (v * np.sqrt(np.clip(w, 0.0, None))) @ v.T


# -- model factories --------------------------------------------------------

def _substeps(h, n_sub):
    return max(1, int(round(h / DEFAULT_SUBSTEP))) if n_sub is None else int(n_sub)


def lorenz63(sigma=10.0, r=28.0, b=8.0 / 3.0, h=0.05, n_sub=None, noise=0.0):
    energies = {
        "kinetic": EnergyFunctional.kinetic(3),
        "lorenz": EnergyFunctional(np.diag([r, sigma, sigma]), [0.0, 0.0, 2.0 * r]),
        "observed_yz": EnergyFunctional(np.diag([0.0, 1.0, 1.0]), [0.0, 0.0, r]),
    }
    return ModelSpec(
        name="lorenz63", dim=3, h=h, n_sub=_substeps(h, n_sub),
        drift=lambda u: lorenz63_drift(u, sigma, r, b), noise_factor=noise,
        kernel="lorenz63", params={"sigma": sigma, "r": r, "b": b}, energies=energies,
    )


def lorenz96(N=40, F=8.0, h=0.05, n_sub=None, noise=0.0):
    if N < 4:
        raise InvalidInput(f"Lorenz 96 needs N >= 4, got {N}")
    return ModelSpec(
        name="lorenz96", dim=N, h=h, n_sub=_substeps(h, n_sub),
        drift=lambda u: lorenz96_drift(u, F), noise_factor=noise,
        kernel="lorenz96", params={"F": F, "N": N},
        energies={"kinetic": EnergyFunctional.kinetic(N)},
    )


def linear_contraction(A, R=None, beta=None, h=1.0):
    """Exact linear model ``U_n = A U_{n-1} + zeta_n`` with ``zeta ~ N(0, R)``."""
    A = _check_contraction(A, beta)
    d = A.shape[0]
    if R is None:
        R = np.zeros((d, d))
    elif np.ndim(R) == 0:
        R = float(R) * np.eye(d)
    R = np.atleast_2d(np.asarray(R, dtype=float))
    if R.shape != (d, d):
        raise InvalidInput(f"noise covariance must be {d}x{d}, got {R.shape}")
    return ModelSpec(
        name="linear", dim=d, h=h, linear_map=A, noise_factor=_psd_sqrt(R),
        params={"A": A, "R": R}, energies={"kinetic": EnergyFunctional.kinetic(d)},
    )
