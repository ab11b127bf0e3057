# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled Euler-Maruyama loops for the Lorenz models.

Each function advances a batch of states through ``incr.shape[1]`` substeps,
``u <- u + dt * drift(u) + incr[k, j]``, using the same floating-point
operation order as ``enkflab._kernels_py``. A member whose state leaves the
finite range stops early; its row keeps the last finite state and its index
is returned (``-1`` when every member finished).
"""
import numpy as np

from libc.math cimport fabs, isfinite

cdef double BLOWUP = 1e15


cdef inline bint _bad(double x) nogil:
    return (not isfinite(x)) or fabs(x) > BLOWUP


def em_lorenz96(const double[:, ::1] states, const double[:, :, ::1] incr, double F, double dt):
    cdef Py_ssize_t K = states.shape[0], N = states.shape[1], nsub = incr.shape[1]
    cdef Py_ssize_t k, j, i
    cdef double v
    cdef bint bad
    out_arr = np.array(states, dtype=np.float64, copy=True)
    tmp_arr = np.empty(N, dtype=np.float64)
    cdef double[:, ::1] u = out_arr
    cdef double[::1] tmp = tmp_arr
    with nogil:
        for k in range(K):
            for j in range(nsub):
                bad = False
                # periodic neighbours handled by explicit edge terms
                for i in range(N):
                    if i == 0:
                        v = (u[k, 1] - u[k, N - 2]) * u[k, N - 1]
                    elif i == 1:
                        v = (u[k, 2] - u[k, N - 1]) * u[k, 0]
                    elif i == N - 1:
                        v = (u[k, 0] - u[k, N - 3]) * u[k, N - 2]
                    else:
                        v = (u[k, i + 1] - u[k, i - 2]) * u[k, i - 1]
                    v = u[k, i] + dt * (v - u[k, i] + F) + incr[k, j, i]
                    tmp[i] = v
                    if _bad(v):
                        bad = True
                if bad:
                    with gil:
                        return out_arr, k
                for i in range(N):
                    u[k, i] = tmp[i]
    return out_arr, -1


def em_lorenz63(const double[:, ::1] states, const double[:, :, ::1] incr,
                double sigma, double r, double b, double dt):
    cdef Py_ssize_t K = states.shape[0], nsub = incr.shape[1]
    cdef Py_ssize_t k, j
    cdef double x, y, z, nx, ny, nz
    out_arr = np.array(states, dtype=np.float64, copy=True)
    cdef double[:, ::1] u = out_arr
    with nogil:
        for k in range(K):
            x = u[k, 0]
            y = u[k, 1]
            z = u[k, 2]
            for j in range(nsub):
                nx = x + dt * (sigma * (y - x)) + incr[k, j, 0]
                ny = y + dt * (x * (r - z) - y) + incr[k, j, 1]
                nz = z + dt * (x * y - b * z) + incr[k, j, 2]
                if _bad(nx) or _bad(ny) or _bad(nz):
                    u[k, 0] = x
                    u[k, 1] = y
                    u[k, 2] = z
                    with gil:
                        return out_arr, k
                x = nx
                y = ny
                z = nz
            u[k, 0] = x
            u[k, 1] = y
            u[k, 2] = z
    return out_arr, -1
