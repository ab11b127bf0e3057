"""Empirical checks of the dissipation assumptions and the boundedness guarantees.

* ``estimate_criterion`` fits ``E[energy(next)] <= (1 - beta) energy(u) + K``
  to Monte Carlo conditional means at sampled states.
* ``boundedness_trial`` tracks the signal-ensemble Lyapunov functional along
  a filter run.
* ``memory_loss_trial`` couples two filter runs that differ only in their
  initial ensembles and measures how fast their moments merge.
* ``covariance_identity_audit`` compares posterior covariances with the
  Kalman update on random instances.
"""
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linprog

from .errors import InvalidInput, NumericalBlowup
from .filters import (
    NO_INFLATION,
    Ensemble,
    analysis,
    inflate,
    kalman_posterior_cov,
)
from .models import eval_energy, forecast, forecast_ensemble
from .observations import ObservationOperator, observe
from .seeding import Streams

MIN_SAMPLES = 100


# -- energy criterion -------------------------------------------------------

@dataclass(frozen=True)
class DissipationEstimate:
    beta: float
    K: float
    residual: float
    n_samples: int
    beta_halfwidth: float
    K_halfwidth: float
    max_violation: float

    @property
    def admissible(self):
        """A strictly positive contraction rate was found."""
        return self.beta > 0.0

    @property
    def violation(self):
        return not self.admissible

    def as_dict(self):
        return {
            "beta": self.beta, "K": self.K, "residual": self.residual,
            "n_samples": self.n_samples, "beta_halfwidth": self.beta_halfwidth,
            "K_halfwidth": self.K_halfwidth, "max_violation": self.max_violation,
            "admissible": self.admissible,
        }


class _Antithetic:
    """Generator stand-in whose normal draws come in (xi, -xi) pairs along axis 0."""

    def __init__(self, rng):
        self._rng = rng

    def standard_normal(self, shape):
        shape = tuple(np.atleast_1d(shape))
        half = (shape[0] + 1) // 2
        xi = self._rng.standard_normal((half,) + shape[1:])
        return np.concatenate([xi, -xi])[: shape[0]]


def sample_states(model, rng, n_cloud=200, n_shell=100, spinup=200, shell_factor=3.0, init_scale=1.0):
    """Attractor cloud from ``n_cloud`` spun-up trajectories plus a shell of
    states at 1 to ``shell_factor`` times the cloud radius."""
    d = model.dim
    cloud = init_scale * rng.standard_normal((n_cloud, d))
    for _ in range(spinup):
        cloud = forecast_ensemble(model, cloud, rng)
    center = cloud.mean(axis=0)
    radius = float(np.max(np.linalg.norm(cloud - center, axis=1)))
    dirs = rng.standard_normal((n_shell, d))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    radii = radius * (1.0 + (shell_factor - 1.0) * rng.random(n_shell))
    return np.vstack([cloud, center + dirs * radii[:, None]])


def conditional_energy_means(model, energy, states, draws, rng):
    """Monte Carlo ``E[energy(Psi_h(u) + zeta)]`` and its standard error per state.

    Every state reuses the same antithetic noise block (common random
    numbers), so differences between states carry little sampling noise.
    """
    states = np.asarray(states, dtype=float)
    if draws < 2:
        raise InvalidInput("need at least two draws per state")
    seed_state = rng.bit_generator.state
    means = np.empty(len(states))
    ses = np.empty(len(states))
    for i, u in enumerate(states):
        rng.bit_generator.state = seed_state
        batch = np.broadcast_to(u, (draws, u.size))
        nxt = forecast_ensemble(model, batch, _Antithetic(rng))
        e = eval_energy(energy, nxt)
        # pair averages are independent across pairs
        pairs = 0.5 * (e[: draws // 2] + e[draws // 2: 2 * (draws // 2)])
        means[i] = e.mean()
        ses[i] = pairs.std(ddof=1) / np.sqrt(pairs.size) if pairs.size > 1 else np.inf
    return means, ses


def fit_criterion(E, m):
    """Tightest ``(beta, K)`` with ``m_i <= (1 - beta) E_i + K`` for all samples.

    Minimizes the mean slack of the bound over the samples, a linear program
    in ``(beta, K)`` with ``beta <= 1`` and ``K >= 0``. Returns
    ``(beta, K, mean_slack)``.
    """
    E = np.asarray(E, dtype=float)
    m = np.asarray(m, dtype=float)
    n = E.size
    c = np.array([-E.sum(), float(n)])
    A = np.column_stack([E, -np.ones(n)])
    b = E - m
    scale = max(1.0, float(np.max(np.abs(E))), float(np.max(np.abs(m))))
    res = linprog(c / scale, A_ub=A / scale, b_ub=b / scale,
                  bounds=[(None, 1.0), (0.0, None)], method="highs")
    if res.status != 0:
        raise InvalidInput(f"criterion fit failed: {res.message}")
    beta, K = res.x
    slack = (1.0 - beta) * E + K - m
    return float(beta), float(K), float(slack.mean())


def estimate_criterion(model, energy, states, draws, rng):
    """Fit the dissipation pair; half-widths come from refitting at ``m +- 1.96 se``."""
    states = np.asarray(states, dtype=float)
    if len(states) < MIN_SAMPLES:
        raise InvalidInput(f"need at least {MIN_SAMPLES} sample states, got {len(states)}")
    E = eval_energy(energy, states)
    m, se = conditional_energy_means(model, energy, states, draws, rng)
    beta, K, slack = fit_criterion(E, m)
    betas, Ks = [beta], [K]
    for sgn in (-1.0, 1.0):
        b2, k2, _ = fit_criterion(E, m + sgn * 1.96 * se)
        betas.append(b2)
        Ks.append(k2)
    worst = float(np.max(m - ((1.0 - beta) * E + K)))
    return DissipationEstimate(
        beta=beta, K=K, residual=slack, n_samples=len(states),
        beta_halfwidth=float(np.max(np.abs(np.array(betas) - beta))),
        K_halfwidth=float(np.max(np.abs(np.array(Ks) - K))),
        max_violation=max(worst, 0.0),
    )


def discretize_rate(beta, K, h):
    """Continuous-time ``(beta, K)`` to the one-step pair ``(1 - exp(-beta h), K h)``."""
    return 1.0 - np.exp(-beta * h), K * h


# -- Lyapunov functional ----------------------------------------------------

@dataclass(frozen=True)
class LyapunovConstants:
    """Contraction ``beta`` and offset ``K`` of the signal-ensemble functional,
    built from a one-step observable pair ``(beta_h, K_h)``."""

    M: float
    beta: float
    K: float
    D: float


def default_weight(beta_h):
    """Signal weight with ``beta_h M / 2 = 2 + 4 / beta_h``."""
    if not 0.0 < beta_h < 1.0:
        raise InvalidInput(f"beta_h must lie in (0, 1), got {beta_h}")
    return 2.0 * (2.0 + 4.0 / beta_h) / beta_h


def lyapunov_constants(kind, beta_h, K_h, K, q, M=None):
    """Constants for ``sum_k |H V_k|^2 + K M |H U|^2`` for each filter family.

    EnKF: each member satisfies a one-step bound with rate ``beta_h / 2``.
    ESRF: the mean gets rate ``beta_h / 2`` and the spread is bounded by
    ``(K - 1) q``, which combine with rate ``beta_h / 4``.
    """
    M = default_weight(beta_h) if M is None else float(M)
    b = beta_h
    if kind == "enkf":
        D = (1 + b / 2) * K_h + 2 * (1 + 2 / b) * (K_h + 2 * q) + M * K_h
        return LyapunovConstants(M=M, beta=b / 2, K=K * D, D=D)
    if kind in ("etkf", "eakf"):
        D = (1 + b / 2) * (K_h + q) + 2 * (1 + 2 / b) * (K_h + 2 * q) + M * K_h
        Kens = (1 + b / 4) * K * D + (1 + 4 / b) * (K - 1) * q
        return LyapunovConstants(M=M, beta=b / 4, K=Kens, D=D)
    raise InvalidInput(f"unknown filter kind {kind!r}")


def gronwall_ceiling(consts, E0, n):
    n = np.asarray(n, dtype=float)
    return (1.0 - consts.beta) ** n * E0 + consts.K / consts.beta


def lyapunov_functional(H, members, signal, M, center=None):
    """``sum_k |H (V_k - c)|^2 + K M |H (U - c)|^2`` with ``c = center`` (default 0)."""
    c = 0.0 if center is None else np.asarray(center, dtype=float)
    HV = (members - c) @ H.T
    K = members.shape[0]
    HU = H @ (signal - c)
    return float(np.sum(HV * HV) + K * M * (HU @ HU))


# -- trials -----------------------------------------------------------------

@dataclass
class TrialRecord:
    seed: int
    signal_energy: np.ndarray
    ensemble_energy: np.ndarray
    observable_energy: np.ndarray
    diverged: bool = False
    diverged_member: int = None
    contraction_margin: np.ndarray = None
    horizon: int = 0

    @property
    def running_max(self):
        return np.maximum.accumulate(self.ensemble_energy) if self.ensemble_energy.size else self.ensemble_energy

    @property
    def steps(self):
        return np.arange(1, self.ensemble_energy.size + 1)

    @property
    def worst_margin(self):
        if self.contraction_margin is None or not self.contraction_margin.size:
            return None
        return float(np.min(self.contraction_margin))


def initial_ensemble(model, K, streams, mean=None, spread=1.0, signal_scale=1.0, offset=None):
    """Signal ``U_0`` and members ``V_0^k`` drawn from the ``init`` stream.

    Members are centred on ``mean`` (default ``U_0``) plus ``offset``.
    """
    rng = streams.rng("init")
    d = model.dim
    U0 = signal_scale * rng.standard_normal(d)
    center = U0 if mean is None else np.broadcast_to(np.asarray(mean, dtype=float), (d,))
    V0 = center + spread * rng.standard_normal((K, d))
    if offset is not None:
        V0 = V0 + np.asarray(offset, dtype=float)
    return U0, V0


def contraction_margin(H, C):
    """Smallest eigenvalue of ``I - H C H^T``."""
    HCH = H @ C @ H.T
    return float(np.linalg.eigvalsh(np.eye(H.shape[0]) - 0.5 * (HCH + HCH.T))[0])


def spread_contraction_margin(H, S):
    """``contraction_margin(H, S S^T / (K - 1))`` through the smaller Gram matrix."""
    HS = H @ S
    q, K = HS.shape
    G = (HS.T @ HS if K < q else HS @ HS.T) / (K - 1)
    top = float(np.linalg.eigvalsh(G)[-1]) if G.size else 0.0
    return 1.0 - top


def boundedness_trial(kind, model, op, K, horizon, streams, scheme=NO_INFLATION, M=None,
                      init=None, check_contraction=None, center=None):
    """Run the filter for ``horizon`` steps and record the Lyapunov functional,
    measured about ``center`` when the energy criterion holds for a translated state.

    Divergence (numerical blow-up in the signal or any member) ends the run
    and is returned as data.
    """
    if horizon < 1 or K < 2:
        raise InvalidInput("horizon must be >= 1 and K >= 2")
    op = op if isinstance(op, ObservationOperator) else ObservationOperator(op)
    H = op.H
    if check_contraction is None:
        check_contraction = kind in ("etkf", "eakf")
    M = 1.0 if M is None else float(M)
    Hc = np.zeros(H.shape[0]) if center is None else H @ np.asarray(center, dtype=float)
    U, V = init if init is not None else initial_ensemble(model, K, streams)
    U = np.asarray(U, dtype=float)
    members = np.asarray(V, dtype=float)
    sig_e = np.empty(horizon)
    ens_e = np.empty(horizon)
    obs_e = np.empty(horizon)
    margins = np.empty(horizon) if check_contraction else None
    diverged, bad_member = False, None
    n = 0
    try:
        for n in range(horizon):
            U = forecast(model, U, streams.rng("signal", n))
            fc = Ensemble(forecast_ensemble(model, members, streams.rng("forecast", n)))
            z = observe(op, U, streams.rng("obs", n))
            post = analysis(kind, fc, z, H, streams.rng("perturb", n) if kind == "enkf" else None, scheme)
            members = post.members
            HV = members @ H.T - Hc
            HU = H @ U - Hc
            obs_sum = float(np.sum(HV * HV))
            sig_e[n] = float(U @ U)
            obs_e[n] = obs_sum / K
            ens_e[n] = obs_sum + K * M * float(HU @ HU)
            if check_contraction:
                margins[n] = spread_contraction_margin(H, post.spread)
        n = horizon
    except NumericalBlowup as exc:
        diverged, bad_member = True, exc.member
    except np.linalg.LinAlgError:
        diverged = True
    return TrialRecord(
        seed=streams.seed, signal_energy=sig_e[:n], ensemble_energy=ens_e[:n],
        observable_energy=obs_e[:n], diverged=diverged, diverged_member=bad_member,
        contraction_margin=None if margins is None else margins[:n], horizon=horizon,
    )


@dataclass
class MemoryLossRecord:
    seed: int
    distance: np.ndarray
    gamma: float
    r_squared: float
    window: int
    diverged: bool
    tv_final: float = float("nan")
    extras: dict = field(default_factory=dict)


def moment_distance(a, b):
    """``|mean_a - mean_b| + ||C_a - C_b||_F``."""
    return float(np.linalg.norm(a.mean - b.mean) + np.linalg.norm(a.covariance - b.covariance))


def fit_decay(distance, floor_ratio=1e-9):
    """Log-linear fit ``log D_n ~ a + n log gamma`` over the steps before ``D``
    first drops below ``floor_ratio * max(D)``. Returns ``(gamma, r2, window)``."""
    D = np.asarray(distance, dtype=float)
    if D.size < 3 or not np.any(D > 0):
        return float("nan"), float("nan"), 0
    floor = floor_ratio * D.max()
    below = np.flatnonzero(D <= floor)
    window = int(below[0]) if below.size else D.size
    if window < 3:
        return float("nan"), float("nan"), window
    n = np.arange(window, dtype=float)
    y = np.log(D[:window])
    slope, icpt = np.polyfit(n, y, 1)
    fitted = icpt + slope * n
    ss_res = float(np.sum((y - fitted) ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return float(np.exp(slope)), r2, window


def histogram_tv(a, b):
    """Total-variation distance between two samples on a shared
    Freedman-Diaconis histogram."""
    a = np.asarray(a, dtype=float).ravel()
    b = np.asarray(b, dtype=float).ravel()
    both = np.concatenate([a, b])
    edges = np.histogram_bin_edges(both, bins="fd")
    pa, _ = np.histogram(a, bins=edges)
    pb, _ = np.histogram(b, bins=edges)
    return 0.5 * float(np.sum(np.abs(pa / a.size - pb / b.size)))


def memory_loss_trial(kind, model, op, K, horizon, streams, init_a, init_b, scheme=NO_INFLATION,
                      floor_ratio=1e-9):
    """Coupled pair of filter runs sharing the signal, the observations and
    every member-indexed noise draw; only the initial ensembles differ."""
    op = op if isinstance(op, ObservationOperator) else ObservationOperator(op)
    H = op.H
    U = np.asarray(init_a[0], dtype=float)
    Va = np.asarray(init_a[1], dtype=float)
    Vb = np.asarray(init_b[1], dtype=float)
    dist = np.empty(horizon)
    diverged = False
    n = 0
    a = b = None
    try:
        for n in range(horizon):
            U = forecast(model, U, streams.rng("signal", n))
            z = observe(op, U, streams.rng("obs", n))
            out = []
            for V in (Va, Vb):
                fc = Ensemble(forecast_ensemble(model, V, streams.rng("forecast", n)))
                rng = streams.rng("perturb", n) if kind == "enkf" else None
                out.append(analysis(kind, fc, z, H, rng, scheme))
            a, b = out
            Va, Vb = a.members, b.members
            dist[n] = moment_distance(a, b)
        n = horizon
    except (NumericalBlowup, np.linalg.LinAlgError):
        diverged = True
    dist = dist[:n]
    gamma, r2, window = fit_decay(dist, floor_ratio)
    tv = histogram_tv(Va[:, 0], Vb[:, 0]) if a is not None else float("nan")
    return MemoryLossRecord(seed=streams.seed, distance=dist, gamma=gamma, r_squared=r2,
                            window=window, diverged=diverged, tv_final=tv)


# -- covariance identity audit ---------------------------------------------

def random_instance(rng, i=0):
    """Random ``(members, H, z)`` cycling through ``K < d``, ``K = d``, ``K > d``
    and full, diagonal, rank-deficient and zero observation matrices."""
    d = int(rng.integers(1, 9))
    shape_case = i % 3
    if shape_case == 0:
        K = int(rng.integers(2, max(3, d + 1))) if d > 2 else 2
    elif shape_case == 1:
        K = max(d, 2)
    else:
        K = d + int(rng.integers(1, 6))
    q = int(rng.integers(1, d + 2))
    h_case = (i // 3) % 4
    if h_case == 0:
        H = rng.standard_normal((q, d))
    elif h_case == 1:
        H = np.zeros((q, d))
        k = min(q, d)
        H[np.arange(k), np.arange(k)] = np.sort(rng.uniform(0.1, 3.0, k))[::-1]
    elif h_case == 2:
        B = rng.standard_normal((max(1, min(q, d) - 1), d))
        H = rng.standard_normal((q, B.shape[0])) @ B
    else:
        H = np.zeros((q, d))
    scale = rng.uniform(0.2, 3.0)
    members = scale * rng.standard_normal((K, d)) + rng.standard_normal(d)
    z = rng.standard_normal(q)
    return members, H, z


RANK_DEFICIENT_SPREAD = np.array([[1.0, -1.0], [0.0, 0.0]])


@dataclass(frozen=True)
class AuditResult:
    kind: str
    count: int
    max_residual: float
    threshold: float
    min_margin: float = float("nan")
    mc_standard_error: float = float("nan")

    @property
    def passed(self):
        return self.max_residual < self.threshold


def covariance_identity_audit(kind, count, rng, scheme=NO_INFLATION, draws=10_000, threshold=1e-9):
    """Maximum Frobenius distance between the posterior ensemble covariance
    and the Kalman update of the (inflated) forecast covariance.

    For EnKF the posterior covariance is averaged over ``draws`` perturbed
    observations on one fixed instance and the threshold becomes three
    Monte Carlo standard errors of that average.
    """
    if kind == "enkf":
        return _enkf_averaged_audit(rng, draws, scheme)
    worst, margin = 0.0, np.inf
    for i in range(count):
        if i == 0:
            members, H, z = RANK_DEFICIENT_SPREAD.T.copy(), np.zeros((2, 2)), np.zeros(2)
        else:
            members, H, z = random_instance(rng, i)
        fc = Ensemble(members)
        post = analysis(kind, fc, z, H, None, scheme)
        ref = kalman_posterior_cov(inflate(fc.covariance, scheme, kind), H)
        worst = max(worst, float(np.linalg.norm(post.covariance - ref)))
        margin = min(margin, contraction_margin(H, post.covariance))
    return AuditResult(kind=kind, count=count, max_residual=worst, threshold=threshold, min_margin=margin)


def _enkf_averaged_audit(rng, draws, scheme):
    members = np.array([[1.0, 0.5, -0.3], [-0.4, 1.2, 0.8], [0.3, -0.9, 0.1], [-0.9, -0.8, -0.6]])
    H = np.array([[1.0, 0.0, 0.5], [0.0, 2.0, 0.0]])
    z = np.array([0.2, -0.1])
    fc = Ensemble(members)
    ref = kalman_posterior_cov(inflate(fc.covariance, scheme, "enkf"), H)
    acc = np.zeros_like(ref)
    acc2 = np.zeros_like(ref)
    for _ in range(draws):
        C = analysis("enkf", fc, z, H, rng, scheme).covariance
        acc += C
        acc2 += C * C
    mean = acc / draws
    var = np.maximum(acc2 / draws - mean * mean, 0.0)
    se = float(np.sqrt(np.sum(var / draws)))
    resid = float(np.linalg.norm(mean - ref))
    return AuditResult(kind="enkf", count=draws, max_residual=resid, threshold=3.0 * se, mc_standard_error=se)


__all__ = [
    "DissipationEstimate", "TrialRecord", "MemoryLossRecord", "LyapunovConstants", "AuditResult",
    "sample_states", "conditional_energy_means", "fit_criterion", "estimate_criterion",
    "discretize_rate", "default_weight", "lyapunov_constants", "gronwall_ceiling",
    "lyapunov_functional", "initial_ensemble", "contraction_margin", "boundedness_trial",
    "moment_distance", "fit_decay", "histogram_tv", "memory_loss_trial", "random_instance",
    "covariance_identity_audit",
]
