# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled Viterbi add-compare-select loop; same contract as ``_viterbi_py``."""

import numpy as np
cimport numpy as cnp
from libc.math cimport INFINITY

cnp.import_array()


def viterbi_path(metrics, long order, long memory, init_cost=None):
    cdef double[:, ::1] met = np.ascontiguousarray(metrics, dtype=np.float64)
    cdef Py_ssize_t n_steps = met.shape[0]
    cdef long n_states = order ** (memory - 1)
    if met.shape[1] != n_states * order:
        raise ValueError("metric width must be order**memory")
    cdef double[::1] cost = (np.zeros(n_states) if init_cost is None
                             else np.array(init_cost, dtype=np.float64))
    cdef double[::1] nxt = np.empty(n_states)
    cdef cnp.int64_t[:, ::1] back = np.empty((n_steps, n_states), dtype=np.int64)
    cdef cnp.ndarray[cnp.int64_t, ndim=1] out = np.empty(n_steps, dtype=np.int64)
    cdef Py_ssize_t i
    cdef long ns, t, lab, best_t
    cdef double best, c
    cdef double[::1] tmp
    for i in range(n_steps):
        for ns in range(n_states):
            best = INFINITY
            best_t = 0
            for t in range(order):
                lab = ns + n_states * t
                c = cost[lab // order] + met[i, lab]
                if c < best:
                    best = c
                    best_t = t
            nxt[ns] = best
            back[i, ns] = best_t
        tmp = cost
        cost = nxt
        nxt = tmp
    if n_steps == 0:
        return out
    ns = 0
    best = cost[0]
    for t in range(1, n_states):
        if cost[t] < best:
            best = cost[t]
            ns = t
    for i in range(n_steps - 1, -1, -1):
        lab = ns + n_states * back[i, ns]
        out[i] = lab % order
        ns = lab // order
    return out
