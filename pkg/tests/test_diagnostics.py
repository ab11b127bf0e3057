import numpy as np
import pytest

from enkflab import diagnostics as dg
from enkflab.errors import InvalidInput
from enkflab.filters import Ensemble, InflationScheme
from enkflab.models import EnergyFunctional, linear_contraction, lorenz63
from enkflab.observations import ObservationOperator
from enkflab.seeding import Streams


def test_fit_recovers_exact_affine_bound():
    E = np.linspace(1.0, 50.0, 120)
    beta, K, slack = dg.fit_criterion(E, 0.5 * E + 3.0)
    assert beta == pytest.approx(0.5, abs=1e-9)
    assert K == pytest.approx(3.0, abs=1e-7)
    assert slack == pytest.approx(0.0, abs=1e-7)


def test_fit_bound_covers_every_sample(rng):
    E = rng.uniform(0, 100, 200)
    m = 0.8 * E + 5 + rng.uniform(-3, 0, 200)
    beta, K, _ = dg.fit_criterion(E, m)
    assert np.all(m <= (1 - beta) * E + K + 1e-7)


def test_linear_model_criterion():
    model = linear_contraction(0.5 * np.eye(2))
    rng = np.random.default_rng(4)
    states = dg.sample_states(model, rng, n_cloud=60, n_shell=60, spinup=5, init_scale=5.0)
    est = dg.estimate_criterion(model, EnergyFunctional.kinetic(2), states, 20, rng)
    assert est.beta >= 0.75 - 1e-9
    assert est.K == pytest.approx(0.0, abs=1e-8)
    assert est.admissible


def test_lorenz63_criterion_positive():
    model = lorenz63(h=0.05, noise=1.0)
    rng = np.random.default_rng(8)
    states = dg.sample_states(model, rng, n_cloud=80, n_shell=60, spinup=60)
    est = dg.estimate_criterion(model, model.energies["lorenz"], states, 40, rng)
    assert est.beta > 0 and np.isfinite(est.K)
    assert est.beta <= 1 - np.exp(-min(2.0, 20.0, 8 / 3) * 0.05) + 0.1


def test_x_marginal_negative_control_runs():
    # recorded, not asserted: the x-marginal alone carries no dissipation guarantee
    model = lorenz63(h=0.05, noise=1.0)
    rng = np.random.default_rng(9)
    states = dg.sample_states(model, rng, n_cloud=60, n_shell=40, spinup=40)
    est = dg.estimate_criterion(model, EnergyFunctional.observed(np.diag([1.0, 0.0, 0.0])), states, 20, rng)
    assert np.isfinite(est.beta)


def test_criterion_needs_enough_samples():
    model = linear_contraction(0.5 * np.eye(2))
    with pytest.raises(InvalidInput):
        dg.estimate_criterion(model, EnergyFunctional.kinetic(2), np.ones((10, 2)), 10,
                              np.random.default_rng(0))


def test_discretize_rate():
    b, k = dg.discretize_rate(2.0, 3.0, 0.1)
    assert b == pytest.approx(1 - np.exp(-0.2))
    assert k == pytest.approx(0.3)


def test_lyapunov_constants_hand_values():
    assert dg.default_weight(0.5) == pytest.approx(40.0)
    c = dg.lyapunov_constants("enkf", 0.5, 1.0, 3, 2)
    # D = 1.25 * 1 + 2 * 5 * (1 + 4) + 40 * 1
    assert (c.M, c.beta, c.D, c.K) == pytest.approx((40.0, 0.25, 91.25, 273.75))
    s = dg.lyapunov_constants("etkf", 0.5, 1.0, 3, 2)
    # D = 1.25 * 3 + 50 + 40; K = 1.125 * 3 * D + 9 * 2 * 2
    assert (s.beta, s.D, s.K) == pytest.approx((0.125, 93.75, 1.125 * 3 * 93.75 + 36.0))


def test_gronwall_ceiling_arithmetic():
    c = dg.LyapunovConstants(M=1.0, beta=0.2, K=4.0, D=0.0)
    assert dg.gronwall_ceiling(c, 100.0, 0) == pytest.approx(120.0)
    assert dg.gronwall_ceiling(c, 100.0, 3) == pytest.approx(0.8 ** 3 * 100 + 20)


def test_lyapunov_functional_value():
    H = np.array([[1.0, 0.0]])
    V = np.array([[1.0, 5.0], [2.0, 5.0]])
    assert dg.lyapunov_functional(H, V, np.array([3.0, 0.0]), 2.0) == pytest.approx(1 + 4 + 2 * 2 * 9)
    assert dg.lyapunov_functional(H, V, np.array([3.0, 0.0]), 2.0, center=[1.0, 0.0]) == pytest.approx(1 + 16)


def test_contraction_margins_agree(rng):
    ens = Ensemble(rng.standard_normal((5, 7)))
    H = rng.standard_normal((3, 7))
    assert dg.spread_contraction_margin(H, ens.spread) == pytest.approx(
        dg.contraction_margin(H, ens.covariance), abs=1e-10)


def test_boundedness_linear_model():
    model = linear_contraction(0.5 * np.eye(3), 0.3)
    op = ObservationOperator(np.eye(3)[:2])
    rec = dg.boundedness_trial("etkf", model, op, 5, 300, Streams(1, "lin"))
    assert not rec.diverged and rec.steps.size == 300
    assert np.isfinite(rec.running_max[-1])
    assert rec.worst_margin >= -1e-9
    a, b = rec.ensemble_energy[100:200].mean(), rec.ensemble_energy[200:].mean()
    assert abs(a - b) < 0.5 * max(a, b)


def test_boundedness_records_divergence():
    from enkflab.models import ModelSpec
    model = ModelSpec(name="cubic", dim=1, h=1.0, n_sub=20, drift=lambda u: u ** 3)
    rec = dg.boundedness_trial("etkf", model, np.zeros((1, 1)), 3, 50, Streams(1, "c"),
                               init=(np.array([3.0]), np.array([[3.0], [3.1], [2.9]])))
    assert rec.diverged and rec.ensemble_energy.size < 50


def test_memory_loss_identical_is_exactly_zero():
    model = lorenz63(h=0.05, noise=1.0)
    s = Streams(2, "m")
    U, V = dg.initial_ensemble(model, 6, s)
    rec = dg.memory_loss_trial("etkf", model, np.eye(3), 6, 80, s, (U, V), (U, V.copy()))
    assert np.all(rec.distance == 0.0)


def test_memory_loss_linear_enkf_decays():
    model = linear_contraction(0.5 * np.eye(2), 0.2)
    s = Streams(3, "lin")
    U, V = dg.initial_ensemble(model, 8, s)
    rec = dg.memory_loss_trial("enkf", model, np.eye(2), 8, 60, s, (U, V), (U, V + 10.0))
    assert rec.distance[-1] < 1e-6
    assert rec.gamma < 1


def test_fit_decay_geometric_sequence():
    D = 3.0 * 0.7 ** np.arange(40)
    gamma, r2, window = dg.fit_decay(D)
    assert gamma == pytest.approx(0.7, rel=1e-10)
    assert r2 == pytest.approx(1.0)
    assert window == 40
    gamma, _, window = dg.fit_decay(np.r_[D, np.zeros(5)])
    assert window == 40 and gamma == pytest.approx(0.7)


def test_histogram_tv_bounds(rng):
    a = rng.standard_normal(500)
    assert dg.histogram_tv(a, a) == 0.0
    assert dg.histogram_tv(a, a + 100.0) == pytest.approx(1.0)


@pytest.mark.parametrize("kind", ["etkf", "eakf"])
def test_covariance_audit_square_root(kind):
    res = dg.covariance_identity_audit(kind, 120, np.random.default_rng(11))
    assert res.passed and res.min_margin >= -1e-9


def test_covariance_audit_with_uniform_inflation():
    res = dg.covariance_identity_audit("eakf", 60, np.random.default_rng(12), InflationScheme.uniform(0.5))
    assert res.passed


def test_covariance_audit_enkf_monte_carlo():
    res = dg.covariance_identity_audit("enkf", 0, np.random.default_rng(13), draws=2000)
    assert res.passed and res.mc_standard_error > 0


def test_random_instances_cover_all_cases():
    rng = np.random.default_rng(0)
    seen = set()
    for i in range(60):
        members, H, _ = dg.random_instance(rng, i)
        K, d = members.shape
        seen.add(("K<d" if K < d else "K=d" if K == d else "K>d"))
        if not np.any(H):
            seen.add("H=0")
    assert {"K<d", "K=d", "K>d", "H=0"} <= seen
