"""Mutual-information contrastive loss over episode view banks.

Every support node contributes two views (central and mean-pooled). The MI
score between an anchor node and a class sums exp(dot/tau) over all view
pairs against that class's members; when the target class is the anchor's
own class (same pool), the anchor's self-similarities are subtracted so the
score reflects agreement with *other* members. The per-anchor loss is the
negative log ratio of own-class MI to the summed MI against the remaining
classes, and the episode loss averages this over anchors.

When mixed classes are present they join every denominator and contribute
their own anchor sum, so the episode loss becomes two averaged sums (one
over original anchors, one over mixed anchors).

The self-correction subtracts the V same-view self-pairs by default; set
``self_correction="all_pairs"`` to subtract all V*V self-pairs instead
(that variant needs K >= 2, otherwise the own-class score is empty).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NonFiniteError

_MODES = ("same_view", "all_pairs")


@dataclass(frozen=True, eq=False)
class ClassBank:
    """View embeddings of one episode, grouped by class.

    ``views`` has shape (N, K, 2, d): class, member, view, feature. The
    optional ``mixed`` array holds the mixed-class views with the same
    shape. Mixed class i is the contrastive-only companion of class i.
    """

    views: np.ndarray
    mixed: np.ndarray | None
    tau: float
    self_correction: str = "same_view"

    def __post_init__(self):
        if self.views.ndim != 4 or self.views.shape[2] != 2:
            raise ValueError("views must have shape (N, K, 2, d)")
        if self.mixed is not None and self.mixed.shape != self.views.shape:
            raise ValueError("mixed views must mirror the original shape")
        if not self.tau > 0:
            raise ValueError("temperature must be positive")
        if self.self_correction not in _MODES:
            raise ValueError(f"self_correction must be one of {_MODES}")
        if self.self_correction == "all_pairs" and self.views.shape[1] == 1:
            raise ValueError(
                "all_pairs self-correction empties the own-class score at "
                "K=1; use same_view or K >= 2"
            )

    @property
    def n_way(self) -> int:
        return int(self.views.shape[0])

    @property
    def k_shot(self) -> int:
        return int(self.views.shape[1])


def bank_from_view_pairs(pairs, mixed_pairs=None, tau: float = 0.5,
                         self_correction: str = "same_view") -> ClassBank:
    """Assemble a ClassBank from nested [class][member] ViewPair lists."""

    def stack(nested):
        return np.array([[np.stack([vp.v1, vp.v2]) for vp in row]
                         for row in nested])

    views = stack(pairs)
    mixed = stack(mixed_pairs) if mixed_pairs is not None else None
    return ClassBank(views=views, mixed=mixed, tau=tau,
                     self_correction=self_correction)


def _self_correction(anchor: np.ndarray, tau: float, mode: str) -> float:
    if mode == "same_view":
        return float(np.exp((anchor * anchor).sum(axis=1) / tau).sum())
    return float(np.exp(anchor @ anchor.T / tau).sum())


def mi_term(bank: ClassBank, i: int, j: int, k: int,
            target_mixed: bool = False, anchor_mixed: bool = False) -> float:
    """MI score of anchor (i, j) against class k of the chosen pool.

    Direct unshifted evaluation; the vectorized episode loss uses a
    stabilized equivalent.
    """
    src = bank.mixed if anchor_mixed else bank.views
    dst = bank.mixed if target_mixed else bank.views
    if src is None or dst is None:
        raise ValueError("bank has no mixed views")
    anchor = src[i, j]                       # (2, d)
    targets = dst[k].reshape(-1, src.shape[-1])  # (K*2, d)
    total = float(np.exp(anchor @ targets.T / bank.tau).sum())
    if k == i and target_mixed == anchor_mixed:
        total -= _self_correction(anchor, bank.tau, bank.self_correction)
    return total


def node_loss(bank: ClassBank, i: int, j: int,
              anchor_mixed: bool = False) -> float:
    """-log(own-class MI / other-class MI sum) for one anchor."""
    n = bank.n_way
    has_mixed = bank.mixed is not None
    num = mi_term(bank, i, j, i, target_mixed=anchor_mixed,
                  anchor_mixed=anchor_mixed)
    assert num > 0, "own-class MI must stay positive"
    den = 0.0
    if anchor_mixed:
        # mixed anchors contrast against every original class and the
        # other mixed classes
        for k in range(n):
            den += mi_term(bank, i, j, k, target_mixed=False, anchor_mixed=True)
        for k in range(n):
            if k != i:
                den += mi_term(bank, i, j, k, target_mixed=True,
                               anchor_mixed=True)
    else:
        for k in range(n):
            if k != i:
                den += mi_term(bank, i, j, k, target_mixed=False)
        if has_mixed:
            for k in range(n):
                den += mi_term(bank, i, j, k, target_mixed=True)
    return float(np.log(den) - np.log(num))


@dataclass(frozen=True, eq=False)
class ViewGradients:
    """Loss gradients per view embedding, same layout as the bank."""

    original: np.ndarray           # (N, K, 2, d)
    mixed: np.ndarray | None       # (N, K, 2, d)


def contrastive_loss(bank: ClassBank):
    """Episode contrastive loss and its view gradients.

    Returns (loss, ViewGradients). The loss averages the per-anchor terms
    with one 1/(NK) factor per pool; anchors run over the original views
    and, when present, the mixed views. Each anchor's ratio is computed
    with its largest participating dot product factored out, which leaves
    the value unchanged but keeps exp() in range at small tau.
    """
    n, k, v, d = bank.views.shape
    has_mixed = bank.mixed is not None
    pools = 2 if has_mixed else 1
    block = n * k * v

    u = bank.views.reshape(block, d)
    if has_mixed:
        u = np.concatenate([u, bank.mixed.reshape(block, d)], axis=0)
    p_total = u.shape[0]
    with np.errstate(over="ignore"):
        dots = u @ u.T
    if not np.all(np.isfinite(dots)):
        raise NonFiniteError("non-finite view similarities in the "
                             "contrastive bank")

    # column masks per (pool, class)
    class_cols = np.zeros((pools, n, p_total), dtype=bool)
    for pool in range(pools):
        for i in range(n):
            lo = pool * block + i * k * v
            class_cols[pool, i, lo:lo + k * v] = True

    scale = 1.0 / (n * k)
    inv_tau = 1.0 / bank.tau
    loss = 0.0
    grad = np.zeros_like(u)

    for pool in range(pools):
        for i in range(n):
            for j in range(k):
                rows = pool * block + (i * k + j) * v + np.arange(v)

                num_mask = np.repeat(class_cols[pool, i][None, :], v, axis=0)
                if bank.self_correction == "same_view":
                    num_mask[np.arange(v), rows] = False
                else:
                    num_mask[:, rows] = False

                den_mask = np.zeros(p_total, dtype=bool)
                if pool == 0:
                    for kk in range(n):
                        if kk != i:
                            den_mask |= class_cols[0, kk]
                    if has_mixed:
                        den_mask |= class_cols[1].any(axis=0)
                else:
                    den_mask |= class_cols[0].any(axis=0)
                    for kk in range(n):
                        if kk != i:
                            den_mask |= class_cols[1, kk]
                den_mask = np.repeat(den_mask[None, :], v, axis=0)

                # each group gets its own max shift so neither sum can
                # underflow, however lopsided the dot products are
                da = dots[rows]
                m_num = da[num_mask].max()
                m_den = da[den_mask].max()
                en = np.exp(np.where(num_mask, (da - m_num) * inv_tau,
                                     -np.inf))
                ed = np.exp(np.where(den_mask, (da - m_den) * inv_tau,
                                     -np.inf))
                num_s = en.sum()
                den_s = ed.sum()
                assert num_s > 0, "own-class MI must stay positive"
                loss += scale * ((m_den - m_num) * inv_tau
                                 + np.log(den_s) - np.log(num_s))

                coef = ed / den_s - en / num_s      # (v, p_total)
                w = scale * inv_tau
                grad[rows] += w * (coef @ u)
                grad += w * (coef.T @ u[rows])

    g_orig = grad[:block].reshape(n, k, v, d)
    g_mixed = grad[block:].reshape(n, k, v, d) if has_mixed else None
    return float(loss), ViewGradients(original=g_orig, mixed=g_mixed)
