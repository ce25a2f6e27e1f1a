"""Personalized-PageRank importance scores and fixed-size subgraph extraction.

A node's importance vector is the column of zeta * (I - (1-zeta) * M)^{-1}
for the column-stochastic adjacency M, evaluated lazily per node by a
truncated power series. Each node is then represented by the subgraph induced
on itself plus its top-K_s most important neighbors, padded with phantom
zero-feature slots so every subgraph has exactly K_s + 1 slots.
"""

from __future__ import annotations

import threading
from collections import OrderedDict
from dataclasses import dataclass

import numpy as np

from ._kernels import induced_block, ppr_scores
from .errors import ConvergenceError
from .graph import Graph, column_normalize


class PPRIndex:
    """Lazy per-node PPR score vectors over a fixed graph.

    Score vectors are computed on first request and kept in a bounded
    cache; the cache is safe under concurrent readers.
    """

    def __init__(self, graph: Graph, zeta: float = 0.15, tol: float = 1e-8,
                 max_iter: int = 1000, cache_size: int = 4096):
        if not 0.0 < zeta <= 1.0:
            raise ValueError(f"zeta must be in (0, 1], got {zeta}")
        self.graph = graph
        self.zeta = float(zeta)
        self.tol = float(tol)
        self.max_iter = int(max_iter)
        mat = column_normalize(graph)
        self._indptr = mat.indptr.astype(np.int64)
        self._indices = mat.indices.astype(np.int64)
        self._data = mat.data.astype(np.float64)
        self._cache: OrderedDict[int, np.ndarray] = OrderedDict()
        self._cache_size = int(cache_size)
        self._lock = threading.Lock()

    def scores(self, node: int) -> np.ndarray:
        """Importance score vector of ``node`` over all nodes (read-only).

        Entries are non-negative and sum to ~1 when the node has positive
        degree (to zeta when it is isolated).
        """
        node = int(node)
        with self._lock:
            hit = self._cache.get(node)
            if hit is not None:
                self._cache.move_to_end(node)
                return hit
        s, _, resid = ppr_scores(
            self._indptr, self._indices, self._data,
            self.graph.num_nodes, node, self.zeta, self.tol, self.max_iter,
        )
        if resid >= self.tol:
            raise ConvergenceError(
                f"PPR for node {node} did not reach tol={self.tol} within "
                f"{self.max_iter} terms (residual {resid:.3e})"
            )
        s.flags.writeable = False
        with self._lock:
            self._cache[node] = s
            self._cache.move_to_end(node)
            while len(self._cache) > self._cache_size:
                self._cache.popitem(last=False)
        return s


def compute_ppr(graph: Graph, zeta: float = 0.15, tol: float = 1e-8,
                max_iter: int = 1000) -> PPRIndex:
    """Importance scoring for ``graph``; vectors are computed lazily per node."""
    return PPRIndex(graph, zeta=zeta, tol=tol, max_iter=max_iter)


@dataclass(frozen=True, eq=False)
class Subgraph:
    """Fixed-size node neighborhood: central node at slot 0.

    ``nodes`` lists original node ids (-1 for padded slots); slots 1.. hold
    the neighbors by descending importance, ties by ascending id. The dense
    ``adjacency`` carries the original edge weights among the selected
    nodes; padded slots have zero features and no incident weight.
    """

    nodes: np.ndarray        # (K_s+1,) int, -1 = padding
    adjacency: np.ndarray    # (K_s+1, K_s+1) float, symmetric
    features: np.ndarray     # (K_s+1, d) float
    mask: np.ndarray         # (K_s+1,) bool, True = real slot

    @property
    def center(self) -> int:
        return int(self.nodes[0])

    @property
    def num_real(self) -> int:
        return int(self.mask.sum())

    def edge_list_text(self) -> str:
        """Edge-list block for debugging: ``slot_u slot_v weight`` lines."""
        lines = [f"# center={self.center} slots={len(self.nodes)}"]
        iu, iv = np.nonzero(np.triu(self.adjacency))
        for u, v in zip(iu, iv):
            lines.append(f"{u} {v} {self.adjacency[u, v]:g}")
        return "\n".join(lines)


def extract_neighborhood(scores: np.ndarray, node: int, k_s: int) -> np.ndarray:
    """Top-``k_s`` nodes by importance score, the query node excluded.

    Only nodes with strictly positive score qualify; if fewer than ``k_s``
    qualify, all of them are returned (the caller pads the deficit). Ties
    break by ascending node id.
    """
    scores = np.asarray(scores)
    candidates = np.flatnonzero(scores > 0)
    candidates = candidates[candidates != node]
    if candidates.size == 0:
        return candidates
    # primary: descending score; secondary: ascending id (lexsort is stable)
    order = np.lexsort((candidates, -scores[candidates]))
    return candidates[order[:k_s]]


def induce_subgraph(graph: Graph, node: int, neighbors: np.ndarray, k_s: int) -> Subgraph:
    """Subgraph on [node] + neighbors, padded to exactly ``k_s + 1`` slots."""
    neighbors = np.asarray(neighbors, dtype=np.int64)
    if neighbors.size > k_s:
        raise ValueError(f"{neighbors.size} neighbors exceed k_s={k_s}")
    selected = np.concatenate([[int(node)], neighbors]).astype(np.int64)
    m = selected.size
    size = k_s + 1

    nodes = np.full(size, -1, dtype=np.int64)
    nodes[:m] = selected
    adjacency = np.zeros((size, size))
    block = np.zeros((m, m))
    adj = graph.adjacency
    induced_block(adj.indptr.astype(np.int64), adj.indices.astype(np.int64),
                  adj.data.astype(np.float64), selected, block)
    adjacency[:m, :m] = block
    features = np.zeros((size, graph.feat_dim))
    features[:m] = graph.features[selected]
    mask = np.zeros(size, dtype=bool)
    mask[:m] = True

    for a in (nodes, adjacency, features, mask):
        a.flags.writeable = False
    return Subgraph(nodes=nodes, adjacency=adjacency, features=features, mask=mask)


class SubgraphExtractor:
    """PPR-ranked subgraph per node, with a bounded cache.

    Subgraphs are pure functions of (graph, zeta, k_s); repeated queries for
    the same node return the cached instance.
    """

    def __init__(self, graph: Graph, ppr: PPRIndex, k_s: int, cache_size: int = 4096):
        if k_s < 1:
            raise ValueError("subgraph size must be at least 1")
        self.graph = graph
        self.ppr = ppr
        self.k_s = int(k_s)
        self._cache: OrderedDict[int, Subgraph] = OrderedDict()
        self._cache_size = int(cache_size)
        self._lock = threading.Lock()

    def subgraph(self, node: int) -> Subgraph:
        node = int(node)
        with self._lock:
            hit = self._cache.get(node)
            if hit is not None:
                self._cache.move_to_end(node)
                return hit
        neighbors = extract_neighborhood(self.ppr.scores(node), node, self.k_s)
        sub = induce_subgraph(self.graph, node, neighbors, self.k_s)
        with self._lock:
            self._cache[node] = sub
            self._cache.move_to_end(node)
            while len(self._cache) > self._cache_size:
                self._cache.popitem(last=False)
        return sub
