"""Similarity-sensitive subgraph mix-up.

Each support node is paired with a uniformly drawn partner node and their
subgraphs are blended entrywise through Beta-distributed ratio matrices.
The Beta shape alpha is steered by how similar the two nodes' importance
distributions are (Bhattacharyya coefficient): similar pairs get alpha near
C/2 (balanced blending), dissimilar pairs get alpha near C, which skews the
ratios toward the support node and keeps the mixed sample close to it.

Mixed subgraphs form N extra classes that only ever feed the contrastive
loss; they never receive cross-entropy labels.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

log = logging.getLogger(__name__)

_COEF_FLOOR = 1e-12


@dataclass(frozen=True)
class MixupConfig:
    enabled: bool = True
    beta: float = 5.0       # Beta distribution's second shape parameter
    magnitude: float = 10.0  # C, the alpha scale

    def __post_init__(self):
        if self.beta <= 0 or self.magnitude <= 0:
            raise ValueError("beta and magnitude must be positive")


@dataclass(frozen=True, eq=False)
class MixedSubgraph:
    """Blend of a support subgraph with a partner subgraph.

    Carries the same slot layout as its sources; the mask is the union of
    the source masks, so a slot is real when either side had a node there.
    """

    adjacency: np.ndarray
    features: np.ndarray
    mask: np.ndarray
    center_node: int     # the support node this blend belongs to
    partner_node: int
    alpha: float

    def __post_init__(self):
        for a in (self.adjacency, self.features, self.mask):
            a.flags.writeable = False


def bhattacharyya_alpha(s_a: np.ndarray, s_b: np.ndarray, c: float) -> float:
    """Beta shape alpha from two importance score vectors.

    alpha = sigmoid(-ln(coef)) * c with coef the Bhattacharyya coefficient
    of the (normalized) score vectors, clamped to [1e-12, 1]. Identical
    distributions give exactly c/2. A zero-sum vector has no distribution
    to compare, so it maps to the maximal-dissimilarity value c.
    """
    s_a = np.asarray(s_a, dtype=np.float64)
    s_b = np.asarray(s_b, dtype=np.float64)
    if s_a.shape != s_b.shape:
        raise ValueError("score vectors must cover the same node universe")
    if np.any(s_a < 0) or np.any(s_b < 0):
        raise ValueError("importance scores must be non-negative")
    ta, tb = s_a.sum(), s_b.sum()
    if ta == 0.0 or tb == 0.0:
        log.warning("zero-sum importance vector in mix-up; using alpha = C")
        return float(c)
    coef = np.sqrt(s_a * s_b).sum() / np.sqrt(ta * tb)
    coef = min(max(float(coef), _COEF_FLOOR), 1.0)
    # sigmoid(-ln(coef)) == 1 / (1 + coef)
    return float(c / (1.0 + coef))


def sample_ratio_matrices(alpha: float, beta: float, shape_a, shape_x,
                          rng: np.random.Generator):
    """Entrywise-independent Beta(alpha, beta) ratio matrices."""
    if alpha <= 0 or beta <= 0:
        raise ValueError("Beta shapes must be positive")
    lam_a = rng.beta(alpha, beta, size=shape_a)
    lam_x = rng.beta(alpha, beta, size=shape_x)
    return lam_a, lam_x


def mix_subgraphs(sub_a, sub_b, lam_a: np.ndarray, lam_x: np.ndarray,
                  alpha: float = float("nan"),
                  partner_node: int = -1) -> MixedSubgraph:
    """Entrywise convex blend of two equally-shaped subgraphs.

    The blended adjacency is re-symmetrized by averaging with its
    transpose, since independent ratio entries break the symmetry the
    normalized graph operator relies on. Features blend as-is.
    """
    if sub_a.adjacency.shape != sub_b.adjacency.shape:
        raise ValueError("adjacency shapes differ")
    if sub_a.features.shape != sub_b.features.shape:
        raise ValueError("feature shapes differ")
    if lam_a.shape != sub_a.adjacency.shape:
        raise ValueError("adjacency ratio matrix has the wrong shape")
    if lam_x.shape != sub_a.features.shape:
        raise ValueError("feature ratio matrix has the wrong shape")

    adj = lam_a * sub_a.adjacency + (1.0 - lam_a) * sub_b.adjacency
    adj = (adj + adj.T) / 2.0
    feats = lam_x * sub_a.features + (1.0 - lam_x) * sub_b.features
    mask = sub_a.mask | sub_b.mask
    return MixedSubgraph(
        adjacency=adj, features=feats, mask=mask,
        center_node=int(sub_a.nodes[0]), partner_node=int(partner_node),
        alpha=float(alpha),
    )


def build_mixed_classes(task, support_subgraphs, extractor, cfg: MixupConfig,
                        rng: np.random.Generator):
    """One mixed subgraph per support node, grouped like the support set.

    ``support_subgraphs`` is the (N, K) nested list of support Subgraphs;
    the return value mirrors that layout. Partner nodes are drawn
    uniformly over the whole graph (labels of the partners are never
    consulted).
    """
    if not cfg.enabled:
        raise ValueError("mix-up is disabled in this config")
    num_nodes = extractor.graph.num_nodes
    mixed = []
    for i in range(task.n_way):
        row = []
        for j in range(task.k_shot):
            sub = support_subgraphs[i][j]
            partner = int(rng.integers(num_nodes))
            partner_sub = extractor.subgraph(partner)
            alpha = bhattacharyya_alpha(
                extractor.ppr.scores(sub.nodes[0]),
                extractor.ppr.scores(partner),
                cfg.magnitude,
            )
            lam_a, lam_x = sample_ratio_matrices(
                alpha, cfg.beta, sub.adjacency.shape, sub.features.shape, rng,
            )
            row.append(mix_subgraphs(sub, partner_sub, lam_a, lam_x,
                                     alpha=alpha, partner_node=partner))
        mixed.append(row)
    return mixed
