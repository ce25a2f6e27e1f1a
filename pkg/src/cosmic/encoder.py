"""One-layer graph convolution encoder with analytic gradients.

Forward pass over one subgraph: H = relu(A_hat X W), where A_hat is the
symmetric degree-normalized adjacency with self-loops. Two views are read
off H: the central-node row and the mean over real (non-padded) rows. The
backward pass is hand-derived so the whole pipeline stays autodiff-free.
"""

from __future__ import annotations

import threading
import weakref
from dataclasses import dataclass, field

import numpy as np

from .errors import NonFiniteError
from .graph import gcn_normalize


@dataclass(frozen=True, eq=False)
class ModelParams:
    """Encoder weights plus the N-way classification head."""

    w: np.ndarray        # (feat_dim, hidden_dim)
    head_w: np.ndarray   # (hidden_dim, n_way)
    head_b: np.ndarray   # (n_way,)

    def __post_init__(self):
        if self.w.ndim != 2 or self.head_w.ndim != 2 or self.head_b.ndim != 1:
            raise ValueError("bad parameter ranks")
        if self.head_w.shape[0] != self.w.shape[1]:
            raise ValueError("head input width must equal hidden size")
        if self.head_w.shape[1] != self.head_b.shape[0]:
            raise ValueError("head weight/bias class counts differ")
        for a in (self.w, self.head_w, self.head_b):
            if not np.all(np.isfinite(a)):
                raise NonFiniteError("non-finite model parameter")
            a.flags.writeable = False

    @property
    def hidden_dim(self) -> int:
        return int(self.w.shape[1])

    @property
    def n_way(self) -> int:
        return int(self.head_b.shape[0])

    @property
    def dtype(self):
        return self.w.dtype


def init_params(feat_dim: int, hidden_dim: int, n_way: int,
                rng: np.random.Generator, dtype=np.float64) -> ModelParams:
    """Glorot-uniform encoder weights, zero classification head."""
    limit = np.sqrt(6.0 / (feat_dim + hidden_dim))
    w = rng.uniform(-limit, limit, size=(feat_dim, hidden_dim)).astype(dtype)
    head_w = np.zeros((hidden_dim, n_way), dtype=dtype)
    head_b = np.zeros(n_way, dtype=dtype)
    return ModelParams(w=w, head_w=head_w, head_b=head_b)


def replace_w(params: ModelParams, w: np.ndarray) -> ModelParams:
    return ModelParams(w=np.array(w, dtype=params.dtype),
                       head_w=params.head_w, head_b=params.head_b)


def replace_head(params: ModelParams, head_w: np.ndarray,
                 head_b: np.ndarray) -> ModelParams:
    return ModelParams(w=params.w,
                       head_w=np.array(head_w, dtype=params.dtype),
                       head_b=np.array(head_b, dtype=params.dtype))


def reset_head(params: ModelParams, n_way: int) -> ModelParams:
    """Fresh zero head for a new class count; encoder weights untouched."""
    return ModelParams(
        w=params.w,
        head_w=np.zeros((params.hidden_dim, n_way), dtype=params.dtype),
        head_b=np.zeros(n_way, dtype=params.dtype),
    )


# A subgraph's propagated features A_hat @ X depend only on the subgraph,
# not on the weights, so they are worth caching across episodes. Keys are
# held weakly so transient (mixed) subgraphs do not accumulate.
_PROP_CACHE: "weakref.WeakKeyDictionary" = weakref.WeakKeyDictionary()
_PROP_LOCK = threading.Lock()


def propagated_features(sub) -> np.ndarray:
    """A_hat @ X for one subgraph, cached on the subgraph instance."""
    with _PROP_LOCK:
        hit = _PROP_CACHE.get(sub)
    if hit is not None:
        return hit
    ax = gcn_normalize(sub.adjacency) @ sub.features
    ax.flags.writeable = False
    with _PROP_LOCK:
        _PROP_CACHE[sub] = ax
    return ax


@dataclass(frozen=True, eq=False)
class ForwardCache:
    """Activations kept from a forward pass for the backward pass."""

    ax: np.ndarray     # A_hat @ X, (K_s+1, feat_dim)
    z: np.ndarray      # pre-activation, (K_s+1, hidden_dim)
    h: np.ndarray      # relu(z)
    mask: np.ndarray   # (K_s+1,) bool


def gcn_forward(sub, params: ModelParams):
    """Node embeddings H = relu(A_hat X W); returns (H, cache).

    Padded slots come out as zero rows: their features are zero and the
    self-loop is their only incident edge.
    """
    ax = propagated_features(sub)
    if ax.shape[1] != params.w.shape[0]:
        raise ValueError(
            f"feature width {ax.shape[1]} does not match encoder input "
            f"{params.w.shape[0]}"
        )
    z = ax.astype(params.dtype, copy=False) @ params.w
    h = np.maximum(z, 0.0)
    return h, ForwardCache(ax=ax, z=z, h=h, mask=sub.mask)


@dataclass(frozen=True, eq=False)
class ViewPair:
    """The two embeddings read off one subgraph: central row and mean pool."""

    v1: np.ndarray
    v2: np.ndarray


def views(sub, params: ModelParams) -> ViewPair:
    pair, _ = encode_views(sub, params)
    return pair


def encode_views(sub, params: ModelParams):
    """(ViewPair, ForwardCache) for one subgraph."""
    h, cache = gcn_forward(sub, params)
    v1 = h[0]
    v2 = h[cache.mask].mean(axis=0)
    return ViewPair(v1=v1, v2=v2), cache


def encoder_backward(cache: ForwardCache, grad_h: np.ndarray) -> np.ndarray:
    """dL/dW from an upstream dL/dH, chained through the ReLU."""
    gz = np.where(cache.z > 0, grad_h, 0.0)
    return cache.ax.T @ gz


def backward_from_views(cache: ForwardCache, g1, g2) -> np.ndarray:
    """dL/dW when the loss touches H only through the two views.

    Either gradient may be None when the loss ignores that view.
    """
    grad_h = np.zeros_like(cache.h)
    if g1 is not None:
        grad_h[0] += g1
    if g2 is not None:
        grad_h[cache.mask] += np.asarray(g2) / cache.mask.sum()
    return encoder_backward(cache, grad_h)


@dataclass
class AdamState:
    """First/second moment accumulators, one pair per parameter array."""

    m: list = field(default_factory=list)
    v: list = field(default_factory=list)
    t: int = 0

    @classmethod
    def like(cls, arrays) -> "AdamState":
        return cls(m=[np.zeros_like(a) for a in arrays],
                   v=[np.zeros_like(a) for a in arrays])


def adam_step(arrays, grads, state: AdamState, lr: float,
              beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
    """One Adam update with bias correction; returns the new arrays.

    The state is mutated in place; input arrays are left untouched.
    """
    if len(arrays) != len(grads) or len(arrays) != len(state.m):
        raise ValueError("parameter/gradient/state length mismatch")
    for g in grads:
        if not np.all(np.isfinite(g)):
            raise NonFiniteError("non-finite gradient in optimizer step")
    state.t += 1
    bc1 = 1.0 - beta1 ** state.t
    bc2 = 1.0 - beta2 ** state.t
    out = []
    for a, g, m, v in zip(arrays, grads, state.m, state.v):
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * np.square(g)
        m_hat = m / bc1
        v_hat = v / bc2
        out.append(a - lr * m_hat / (np.sqrt(v_hat) + eps))
    return out


def finite_diff_check(loss_fn, array: np.ndarray, h: float = 1e-6,
                      max_coords: int | None = None,
                      rng: np.random.Generator | None = None):
    """Compare loss_fn's analytic gradient to central differences.

    loss_fn maps an array to (loss, grad). Returns (max_rel_err, worst
    coordinate index). Coordinates where both gradients are below 1e-10
    in magnitude are treated as exact. When ``max_coords`` is given, a
    random subset of coordinates is probed instead of all of them.
    """
    base = np.array(array, dtype=np.float64)
    _, analytic = loss_fn(base)
    analytic = np.asarray(analytic, dtype=np.float64)
    if analytic.shape != base.shape:
        raise ValueError("gradient shape does not match parameter shape")

    flat = base.ravel()
    coords = np.arange(flat.size)
    if max_coords is not None and flat.size > max_coords:
        if rng is None:
            rng = np.random.default_rng(0)
        coords = rng.choice(flat.size, size=max_coords, replace=False)

    worst = 0.0
    worst_idx = -1
    for idx in coords:
        probe = flat.copy()
        probe[idx] += h
        up, _ = loss_fn(probe.reshape(base.shape))
        probe[idx] -= 2 * h
        down, _ = loss_fn(probe.reshape(base.shape))
        numeric = (up - down) / (2 * h)
        a = analytic.ravel()[idx]
        denom = max(abs(a), abs(numeric))
        if denom < 1e-10:
            continue
        rel = abs(a - numeric) / denom
        if rel > worst:
            worst = rel
            worst_idx = int(idx)
    return worst, worst_idx
