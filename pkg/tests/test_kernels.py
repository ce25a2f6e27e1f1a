"""Compiled kernels against their pure-NumPy twins."""

import numpy as np
import pytest
import scipy.sparse as sp

from cosmic import _kernels
from cosmic._kernels import _fallback


def random_csr(rng, n, density=0.2):
    raw = rng.random((n, n)) < density
    a = np.triu(raw, 1).astype(float) * rng.random((n, n))
    a = a + a.T
    m = sp.csr_matrix(a)
    # column-normalize so the PPR iteration contracts
    deg = np.asarray(m.sum(axis=0)).ravel()
    inv = np.divide(1.0, deg, out=np.zeros_like(deg), where=deg > 0)
    m = (m @ sp.diags(inv)).tocsr()
    m.sort_indices()
    return m


def as_int64(m):
    return m.indptr.astype(np.int64), m.indices.astype(np.int64), m.data


@pytest.mark.skipif(not _kernels.USING_EXT, reason="extension not built")
def test_ppr_scores_ext_matches_fallback():
    rng = np.random.default_rng(0)
    for trial in range(20):
        n = int(rng.integers(3, 40))
        m = random_csr(rng, n)
        indptr, indices, data = as_int64(m)
        seed = int(rng.integers(n))
        s_ext, it_ext, r_ext = _kernels.ppr_scores(
            indptr, indices, data, n, seed, 0.15, 1e-10, 1000)
        s_py, it_py, r_py = _fallback.ppr_scores(
            indptr, indices, data, n, seed, 0.15, 1e-10, 1000)
        assert it_ext == it_py
        assert abs(r_ext - r_py) < 1e-14
        assert np.max(np.abs(s_ext - s_py)) < 1e-12


@pytest.mark.skipif(not _kernels.USING_EXT, reason="extension not built")
def test_induced_block_ext_matches_fallback():
    rng = np.random.default_rng(1)
    for trial in range(20):
        n = int(rng.integers(4, 40))
        m = random_csr(rng, n)
        indptr, indices, data = as_int64(m)
        k = int(rng.integers(1, n + 1))
        nodes = rng.choice(n, size=k, replace=False).astype(np.int64)
        out_ext = np.zeros((k, k))
        out_py = np.zeros((k, k))
        _kernels.induced_block(indptr, indices, data, nodes, out_ext)
        _fallback.induced_block(indptr, indices, data, nodes, out_py)
        assert np.array_equal(out_ext, out_py)


def test_induced_block_matches_dense_gather():
    rng = np.random.default_rng(2)
    m = random_csr(rng, 15)
    indptr, indices, data = as_int64(m)
    nodes = np.array([3, 0, 7, 11], dtype=np.int64)
    out = np.zeros((4, 4))
    _fallback.induced_block(indptr, indices, data, nodes, out)
    want = m.toarray()[np.ix_(nodes, nodes)]
    assert np.array_equal(out, want)


def test_fallback_ppr_isolated_node():
    """No outgoing mass: the score vector is just the restart weight."""
    m = sp.csr_matrix((3, 3))
    indptr, indices, data = as_int64(m)
    s, it, resid = _fallback.ppr_scores(indptr, indices, data, 3, 1,
                                        0.15, 1e-8, 1000)
    want = np.zeros(3)
    want[1] = 0.15
    assert np.array_equal(s, want)
    assert resid < 1e-8


def test_env_selector_rejects_garbage(monkeypatch):
    import importlib

    monkeypatch.setenv("COSMIC_KERNELS", "nonsense")
    with pytest.raises(ValueError, match="COSMIC_KERNELS"):
        importlib.reload(_kernels)
    monkeypatch.undo()
    importlib.reload(_kernels)
