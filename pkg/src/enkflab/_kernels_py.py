"""NumPy twin of the compiled kernels (same operation order, same results).

On blow-up the return convention matches the compiled loop, which walks
members in order: members before the first bad one are fully advanced, the
bad one holds its last finite state, later members are left untouched.
"""
import numpy as np

BLOWUP = 1e15


def _bad_rows(u):
    with np.errstate(invalid="ignore"):
        return ~np.all(np.isfinite(u) & (np.abs(u) <= BLOWUP), axis=1)


def _run(states, incr, step):
    u0 = np.array(states, dtype=np.float64, copy=True)
    u = u0.copy()
    alive = np.ones(u.shape[0], dtype=bool)
    for j in range(incr.shape[1]):
        with np.errstate(over="ignore", invalid="ignore"):
            new = step(u, incr[:, j])
        bad = _bad_rows(new) & alive
        alive &= ~bad
        u[alive] = new[alive]
    if alive.all():
        return u, -1
    k = int(np.flatnonzero(~alive)[0])
    u[k + 1:] = u0[k + 1:]
    return u, k


def em_lorenz96(states, incr, F, dt):
    def step(u, inc):
        adv = (np.roll(u, -1, axis=1) - np.roll(u, 2, axis=1)) * np.roll(u, 1, axis=1)
        return u + dt * (adv - u + F) + inc

    return _run(states, incr, step)


def em_lorenz63(states, incr, sigma, r, b, dt):
    def step(u, inc):
        x, y, z = u[:, 0], u[:, 1], u[:, 2]
        new = np.empty_like(u)
        new[:, 0] = x + dt * (sigma * (y - x)) + inc[:, 0]
        new[:, 1] = y + dt * (x * (r - z) - y) + inc[:, 1]
        new[:, 2] = z + dt * (x * y - b * z) + inc[:, 2]
        return new

    return _run(states, incr, step)
