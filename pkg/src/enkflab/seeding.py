"""Counter-based random streams.

One master seed plus a scenario name and replicate index fix a Philox key;
the counter encodes ``(member, role, step)``. Any draw can therefore be
regenerated without replaying earlier ones, and serial and parallel runs
see identical numbers.
"""
import hashlib

import numpy as np

from .errors import InvalidInput

ROLES = {"init": 0, "signal": 1, "forecast": 2, "obs": 3, "perturb": 4, "criterion": 5}


def _scenario_word(name):
    return int.from_bytes(hashlib.sha256(name.encode("utf-8")).digest()[:8], "little")


class Streams:
    """Factory of independent generators keyed on ``(seed, scenario, replicate)``.

    Ensemble draws for one ``(role, step)`` come from a single generator, one
    member after another, so member ``k`` always reads the ``k``-th block.
    """

    def __init__(self, seed, scenario="", replicate=0):
        seed = int(seed)
        if not 0 <= seed < 2 ** 64:
            raise InvalidInput(f"seed must be an unsigned 64-bit integer, got {seed}")
        self.seed = seed
        self.scenario = scenario
        self.replicate = int(replicate)
        ss = np.random.SeedSequence([seed, _scenario_word(scenario), self.replicate])
        self._key = ss.generate_state(2, dtype=np.uint64)

    def rng(self, role, step=0, member=0):
        try:
            rid = ROLES[role]
        except KeyError:
            raise InvalidInput(f"unknown stream role {role!r}") from None
        counter = np.array([0, member, rid, step], dtype=np.uint64)
        return np.random.Generator(np.random.Philox(key=self._key, counter=counter))

    def replicate_streams(self, replicate):
        return Streams(self.seed, self.scenario, replicate)

    def __repr__(self):
        return f"Streams(seed={self.seed}, scenario={self.scenario!r}, replicate={self.replicate})"
