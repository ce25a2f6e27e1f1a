"""Pure NumPy/SciPy implementations of the compiled kernels.

Semantics must match ``_core.pyx`` exactly; the equivalence is asserted in
the test suite.
"""

import numpy as np
import scipy.sparse as sp


def ppr_scores(indptr, indices, data, n, seed, zeta, tol, max_iter):
    """Truncated power series of the personalized-PageRank resolvent.

    Accumulates s = zeta * sum_k (1-zeta)^k M^k e_seed where M is the
    column-stochastic adjacency given in CSR arrays. Stops once the L1 norm
    of the last added term drops below ``tol`` or after ``max_iter`` terms.

    Returns (scores, terms_used, residual).
    """
    mat = sp.csr_matrix((data, indices, indptr), shape=(n, n))
    s = np.zeros(n)
    term = np.zeros(n)
    term[seed] = zeta
    s[seed] = zeta
    resid = zeta
    decay = 1.0 - zeta
    it = 0
    while it < max_iter and resid >= tol:
        term = decay * (mat @ term)
        s += term
        resid = float(np.abs(term).sum())
        it += 1
    return s, it, resid


def induced_block(indptr, indices, data, nodes, out):
    """Write the dense adjacency block among ``nodes`` into ``out`` (m x m)."""
    mat = sp.csr_matrix((data, indices, indptr), shape=(len(indptr) - 1,) * 2)
    out[:, :] = mat[np.ix_(nodes, nodes)].toarray()
