# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels: PPR power series and induced-subgraph gathering.

Mirrors ``_fallback`` exactly; keep both in sync.
"""

import numpy as np

cimport numpy as cnp

cnp.import_array()


def ppr_scores(cnp.int64_t[::1] indptr, cnp.int64_t[::1] indices,
               double[::1] data, Py_ssize_t n, Py_ssize_t seed,
               double zeta, double tol, int max_iter):
    """Truncated power series of the personalized-PageRank resolvent.

    Same contract as the fallback: returns (scores, terms_used, residual)
    where residual is the L1 norm of the last added series term.
    """
    s_arr = np.zeros(n)
    term_arr = np.zeros(n)
    next_arr = np.zeros(n)
    cdef double[::1] s = s_arr
    cdef double[::1] term = term_arr
    cdef double[::1] nxt = next_arr
    cdef double[::1] tmp

    term[seed] = zeta
    s[seed] = zeta
    cdef double resid = zeta
    cdef double decay = 1.0 - zeta
    cdef double acc
    cdef Py_ssize_t i, k
    cdef int it = 0

    while it < max_iter and resid >= tol:
        resid = 0.0
        for i in range(n):
            acc = 0.0
            for k in range(indptr[i], indptr[i + 1]):
                acc += data[k] * term[indices[k]]
            acc *= decay
            nxt[i] = acc
            s[i] += acc
            resid += acc if acc >= 0.0 else -acc
        tmp = term
        term = nxt
        nxt = tmp
        it += 1
    return s_arr, it, resid


def induced_block(cnp.int64_t[::1] indptr, cnp.int64_t[::1] indices,
                  double[::1] data, cnp.int64_t[::1] nodes,
                  double[:, ::1] out):
    """Write the dense adjacency block among ``nodes`` into ``out`` (m x m)."""
    cdef Py_ssize_t m = nodes.shape[0]
    order_arr = np.argsort(np.asarray(nodes), kind="stable").astype(np.int64)
    sorted_arr = np.asarray(nodes)[order_arr].copy()
    cdef cnp.int64_t[::1] order = order_arr
    cdef cnp.int64_t[::1] snodes = sorted_arr
    cdef Py_ssize_t i, k, lo, hi, mid
    cdef cnp.int64_t row, col

    out[:, :] = 0.0
    for i in range(m):
        row = nodes[i]
        for k in range(indptr[row], indptr[row + 1]):
            col = indices[k]
            lo = 0
            hi = m
            while lo < hi:
                mid = (lo + hi) >> 1
                if snodes[mid] < col:
                    lo = mid + 1
                else:
                    hi = mid
            if lo < m and snodes[lo] == col:
                out[i, order[lo]] = data[k]
