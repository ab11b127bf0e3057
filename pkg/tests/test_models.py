import numpy as np
import pytest
from scipy.integrate import solve_ivp

from enkflab.errors import InvalidInput, NumericalBlowup
from enkflab.models import (
    EnergyFunctional,
    ModelSpec,
    energy_generator,
    eval_energy,
    forecast,
    forecast_ensemble,
    linear_contraction,
    linear_contraction_step,
    lorenz63,
    lorenz63_drift,
    lorenz96,
    lorenz96_drift,
)

SIGMA, R, B = 10.0, 28.0, 8.0 / 3.0


def test_linear_map_is_exact():
    m = linear_contraction(0.5 * np.eye(2))
    out = forecast(m, [2.0, 2.0], np.random.default_rng(0))
    np.testing.assert_array_equal(out, [1.0, 1.0])
    np.testing.assert_array_equal(linear_contraction_step(0.5 * np.eye(2), [4.0, -2.0], None), [2.0, -1.0])


def test_linear_rejects_noncontraction():
    with pytest.raises(InvalidInput):
        linear_contraction(np.eye(2))


def test_lorenz63_matches_tight_ode_solution():
    u0 = np.array([1.0, 2.0, 20.0])
    m = lorenz63(h=0.01, n_sub=100)
    em = forecast(m, u0, np.random.default_rng(0))
    ref = solve_ivp(lambda t, u: lorenz63_drift(u), (0, 0.01), u0, method="DOP853",
                    rtol=1e-13, atol=1e-13).y[:, -1]
    assert np.max(np.abs(em - ref) / np.abs(ref)) < 1e-4


def test_lorenz96_equilibrium():
    m = lorenz96(N=40, F=8.0, h=0.05)
    u = 8.0 * np.ones(40)
    np.testing.assert_allclose(forecast(m, u, np.random.default_rng(0)), u, atol=1e-12)


def test_lorenz63_drift_values():
    np.testing.assert_array_equal(lorenz63_drift([0.0, 0.0, 0.0]), [0.0, 0.0, 0.0])
    np.testing.assert_allclose(lorenz63_drift([1.0, 1.0, 1.0]), [0.0, 26.0, 1.0 - 8.0 / 3.0])


def test_lorenz96_drift_values():
    np.testing.assert_array_equal(lorenz96_drift(np.zeros(5), F=8.0), 8.0 * np.ones(5))
    with pytest.raises(InvalidInput):
        lorenz96_drift(np.zeros(3))


def test_lorenz96_drift_matches_index_loop(rng):
    u = rng.standard_normal(6)
    F = 0.7
    loop = np.array([(u[(i + 1) % 6] - u[i - 2]) * u[i - 1] - u[i] + F for i in range(6)])
    np.testing.assert_allclose(lorenz96_drift(u, F), loop, atol=1e-14)
    np.testing.assert_allclose(lorenz96_drift([1.0, 0.0, 0.0, 0.0], 0.0), [-1.0, 0.0, 0.0, 0.0])


def test_lorenz63_energy_dissipation(rng):
    m = lorenz63()
    E = m.energies["lorenz"]
    beta, K = min(2.0, 2 * SIGMA, B), 4 * B * SIGMA * R ** 2
    u = rng.uniform(-60, 60, size=(10_000, 3))
    gen = energy_generator(m, E, u)
    assert np.all(gen <= -beta * eval_energy(E, u) + K + 1e-9 * (1 + np.abs(gen)))


def test_lorenz96_energy_dissipation(rng):
    m = lorenz96(N=40, F=8.0)
    u = rng.uniform(-20, 20, size=(10_000, 40))
    gen = energy_generator(m, EnergyFunctional.kinetic(40), u)
    assert np.all(gen <= -np.sum(u * u, axis=1) + 40 * 64.0 + 1e-9)


def test_partial_lorenz63_energy(rng):
    m = lorenz63()
    E = m.energies["observed_yz"]
    gamma = min(2.0, B)
    # with w = z - r the generator is -2y^2 - 2b w^2 - 2b r w; completing the
    # square gives the additive constant b^2 r^2 / (2b - gamma)
    const = B ** 2 * R ** 2 / (2 * B - gamma)
    u = rng.uniform(-60, 60, size=(10_000, 3))
    gen = energy_generator(m, E, u)
    assert np.all(gen <= -gamma * eval_energy(E, u) + const + 1e-9 * (1 + np.abs(gen)))


def test_partial_lorenz63_constant_r_squared_is_too_small():
    m = lorenz63()
    E = m.energies["observed_yz"]
    gamma = min(2.0, B)
    u = np.array([0.0, 0.0, R - B * R / (2 * B - gamma)])
    excess = energy_generator(m, E, u) + gamma * eval_energy(E, u)
    assert excess == pytest.approx(B ** 2 * R ** 2 / (2 * B - gamma))
    assert excess > R ** 2


def test_energy_functional_examples():
    assert eval_energy(EnergyFunctional.kinetic(2), [3.0, 4.0]) == 25.0
    assert eval_energy(lorenz63().energies["lorenz"], [1.0, 1.0, 1.0]) == pytest.approx(30288.0)
    with pytest.raises(InvalidInput):
        eval_energy(EnergyFunctional.kinetic(2), [1.0, 2.0, 3.0])


def test_energy_weight_must_be_psd():
    with pytest.raises(InvalidInput):
        EnergyFunctional(np.diag([1.0, -1.0]), np.zeros(2))


def test_linear_commuting_observation_criterion():
    A, Rn = 0.5 * np.eye(2), 0.2 * np.eye(2)
    H = np.diag([1.0, 0.0])
    m = linear_contraction(A, Rn)
    u = np.array([3.0, -1.0])
    rng = np.random.default_rng(7)
    nxt = forecast_ensemble(m, np.broadcast_to(u, (10_000, 2)), rng)
    vals = np.sum((nxt @ H.T) ** 2, axis=1)
    bound = 0.25 * np.sum((H @ u) ** 2) + np.trace(H @ Rn @ H.T)
    assert vals.mean() <= bound + 3 * vals.std(ddof=1) / np.sqrt(vals.size)


def test_kinetic_energy_principle_lorenz96(rng):
    # one-step mean energy against the continuous bound mapped to the step
    m = lorenz96(N=40, F=8.0, h=0.05, n_sub=50, noise=1.0)
    beta_h, K_h = 1 - np.exp(-0.05), 40 * 64.0 * 0.05 + 40 * 0.05
    for scale in (3.0, 10.0):
        u = scale * rng.standard_normal(40)
        nxt = forecast_ensemble(m, np.broadcast_to(u, (400, 40)), rng)
        e = np.sum(nxt ** 2, axis=1)
        assert e.mean() <= (1 - beta_h) * u @ u + K_h + 3 * e.std(ddof=1) / np.sqrt(e.size)


def test_forecast_deterministic_per_seed():
    m = lorenz96(N=10, noise=1.0, n_sub=10)
    x = np.ones((3, 10))
    a = forecast_ensemble(m, x, np.random.default_rng(5))
    b = forecast_ensemble(m, x, np.random.default_rng(5))
    assert np.array_equal(a, b)


def test_forecast_rejects_nonfinite_state():
    with pytest.raises(InvalidInput):
        forecast(lorenz63(), [np.nan, 0.0, 0.0], np.random.default_rng(0))


def test_blowup_reports_last_state():
    m = ModelSpec(name="cubic", dim=1, h=1.0, n_sub=50, drift=lambda u: u ** 3)
    with pytest.raises(NumericalBlowup) as info:
        forecast_ensemble(m, np.array([[0.0], [5.0]]), np.random.default_rng(0))
    assert info.value.member == 1
    assert np.all(np.isfinite(info.value.last_state))


def test_modelspec_validation():
    with pytest.raises(InvalidInput):
        ModelSpec(name="x", dim=1, h=0.0, drift=lambda u: u)
    with pytest.raises(InvalidInput):
        ModelSpec(name="x", dim=1, h=1.0, n_sub=0, drift=lambda u: u)
    with pytest.raises(InvalidInput):
        ModelSpec(name="x", dim=2, h=1.0, drift=lambda u: u, noise_factor=np.ones((3, 1)))


def test_state_dependent_noise_callable():
    m = ModelSpec(name="mult", dim=2, h=0.1, n_sub=2, drift=lambda u: -u,
                  noise_factor=lambda X: X[:, :, None] * np.ones((1, 1, 1)))
    out = forecast_ensemble(m, np.zeros((4, 2)), np.random.default_rng(0))
    np.testing.assert_array_equal(out, 0.0)
