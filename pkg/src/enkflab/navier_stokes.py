"""Spectrally truncated 2D stochastic Navier-Stokes in vorticity form.

Only the half-lattice ``I = {k : 0 < |k| <= N, arg(k) in [0, pi)}`` is
stored; the conjugate modes ``v_{-k} = conj(v_k)`` are rebuilt on demand.
Quadratic products are truncated back to ``J = I u (-I)`` so the discrete
nonlinearity conserves ``sum |v_k|^2`` exactly.
"""
from dataclasses import dataclass

import numpy as np

from .errors import InvalidInput
from .models import EnergyFunctional, ModelSpec


def half_lattice(N):
    """Modes of ``I`` sorted by ``(|k|^2, k1, k2)``."""
    if N < 1:
        raise InvalidInput(f"truncation radius must be >= 1, got {N}")
    n = int(np.floor(N))
    pts = [
        (a, b)
        for a in range(-n, n + 1)
        for b in range(0, n + 1)
        if 0 < a * a + b * b <= N * N and (b > 0 or a > 0)
    ]
    pts.sort(key=lambda k: (k[0] ** 2 + k[1] ** 2, k[0], k[1]))
    return np.array(pts, dtype=int)


@dataclass(frozen=True, eq=False)
class Triads:
    """Interaction list ``k <- (p, q)`` with ``p + q = k``, all in ``J``, target ``k`` in ``I``."""

    modes: np.ndarray
    target: np.ndarray
    left: np.ndarray
    right: np.ndarray
    coef: np.ndarray
    gather: np.ndarray

    @property
    def n_modes(self):
        return self.modes.shape[0]


def build_triads(modes):
    modes = np.asarray(modes, dtype=int)
    if modes.ndim != 2 or modes.shape[1] != 2:
        raise InvalidInput(f"modes must have shape (n, 2), got {modes.shape}")
    if np.any(np.all(modes == 0, axis=1)):
        raise InvalidInput("the zero mode is not allowed")
    full = np.vstack([modes, -modes])
    index = {tuple(k): j for j, k in enumerate(full)}
    if len(index) != full.shape[0]:
        raise InvalidInput("modes must be distinct and contain no conjugate pairs")
    target, left, right, coef = [], [], [], []
    for t, k in enumerate(modes):
        for j, p in enumerate(full):
            q = tuple(k - p)
            if q not in index:
                continue
            qq = np.array(q)
            # p_perp = (-p2, p1); the Biot-Savart kernel carries 1/|p|^2
            c = (-p[1] * qq[0] + p[0] * qq[1]) / float(p @ p)
            if c != 0.0:
                target.append(t)
                left.append(j)
                right.append(index[q])
                coef.append(c)
    target = np.array(target, dtype=int)
    gather = np.zeros((len(target), modes.shape[0]))
    gather[np.arange(len(target)), target] = 1.0
    return Triads(modes, target, np.array(left, dtype=int), np.array(right, dtype=int),
                  np.array(coef, dtype=float), gather)


def nonlinear_term(v, triads):
    """``P_k B(K v, v)`` for each ``k`` in ``I``; ``v`` has shape ``(..., n)`` complex."""
    v = np.asarray(v, dtype=complex)
    vJ = np.concatenate([v, np.conj(v)], axis=-1)
    prod = triads.coef * vJ[..., triads.left] * vJ[..., triads.right]
    return -(prod @ triads.gather)


def truncated_ns_drift(v, modes_or_triads, nu):
    """Deterministic part of ``dv_k = -nu |k|^2 v_k dt - P_k B(K v, v) dt + sigma_k dW_k``."""
    tri = modes_or_triads if isinstance(modes_or_triads, Triads) else build_triads(modes_or_triads)
    v = np.asarray(v, dtype=complex)
    if v.shape[-1] != tri.n_modes:
        raise InvalidInput(f"expected {tri.n_modes} coefficients, got {v.shape[-1]}")
    k2 = np.sum(tri.modes ** 2, axis=1)
    return -nu * k2 * v - nonlinear_term(v, tri)


def energy_flux(v, triads):
    """``<v, B(K v, v)>`` summed over ``J``; zero up to rounding."""
    B = nonlinear_term(v, triads)
    return 2.0 * float(np.real(np.sum(np.conj(v) * B)))


def pack(v):
    """Complex ``(..., n)`` to real ``(..., 2n)`` with interleaved (Re, Im)."""
    v = np.asarray(v, dtype=complex)
    out = np.empty(v.shape[:-1] + (2 * v.shape[-1],))
    out[..., 0::2] = v.real
    out[..., 1::2] = v.imag
    return out


def unpack(x):
    x = np.asarray(x, dtype=float)
    if x.shape[-1] % 2:
        raise InvalidInput("packed state must have even length")
    return x[..., 0::2] + 1j * x[..., 1::2]


def truncated_navier_stokes(N=4, nu=1.0, forcing=1.0, h=0.01, n_sub=None):
    """Model on the packed real state; ``forcing`` is a scalar or one ``sigma_k`` per mode.

    Complex white noise ``dW_k`` has ``E|dW_k|^2 = dt``, so each real component
    carries ``sigma_k / sqrt(2)``.
    """
    tri = build_triads(half_lattice(N))
    n = tri.n_modes
    sig = np.broadcast_to(np.asarray(forcing, dtype=float), (n,)).copy()
    if not np.all(np.isfinite(sig)):
        raise InvalidInput("forcing amplitudes must be finite")
    Sigma = np.diag(np.repeat(sig / np.sqrt(2.0), 2))
    if n_sub is None:
        # explicit stability for the stiffest viscous mode
        kmax = float(np.max(np.sum(tri.modes ** 2, axis=1)))
        n_sub = max(1, int(np.ceil(h * nu * kmax / 0.5)), int(round(h / 1e-3)))

    def drift(x):
        return pack(truncated_ns_drift(unpack(x), tri, nu))

    return ModelSpec(
        name="navier_stokes", dim=2 * n, h=h, n_sub=n_sub, drift=drift,
        noise_factor=Sigma, params={"N": N, "nu": nu, "sigma": sig, "triads": tri},
        energies={"kinetic": EnergyFunctional.kinetic(2 * n)},
    )
