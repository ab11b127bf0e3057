import numpy as np
import pytest

from enkflab.errors import InvalidInput
from enkflab.seeding import Streams


def test_same_key_same_draws():
    a = Streams(7, "scen", 2).rng("forecast", step=11).standard_normal(5)
    b = Streams(7, "scen", 2).rng("forecast", step=11).standard_normal(5)
    assert np.array_equal(a, b)


@pytest.mark.parametrize("other", [
    dict(seed=8), dict(scenario="other"), dict(replicate=3), dict(role="obs"), dict(step=12),
])
def test_any_key_change_changes_draws(other):
    base = dict(seed=7, scenario="scen", replicate=2, role="forecast", step=11)
    def draw(p):
        return Streams(p["seed"], p["scenario"], p["replicate"]).rng(p["role"], step=p["step"]).standard_normal(4)
    assert not np.array_equal(draw(base), draw({**base, **other}))


def test_draws_independent_of_call_order():
    s = Streams(1, "x")
    late = s.rng("obs", step=50).standard_normal(3)
    for n in range(50):
        s.rng("obs", step=n).standard_normal(3)
    assert np.array_equal(late, Streams(1, "x").rng("obs", step=50).standard_normal(3))


def test_invalid_seed_and_role():
    with pytest.raises(InvalidInput):
        Streams(-1)
    with pytest.raises(InvalidInput):
        Streams(2 ** 64)
    with pytest.raises(InvalidInput):
        Streams(1).rng("nope")


def test_replicate_streams():
    s = Streams(5, "a", 0).replicate_streams(4)
    assert (s.seed, s.scenario, s.replicate) == (5, "a", 4)
