"""Episodic two-step meta-training.

Each episode samples a task, extracts PPR subgraphs for its support and
query nodes, and applies two updates: a single plain gradient step on the
contrastive loss over the support views (the fast adaptation), then an
Adam step on the query cross-entropy evaluated at the adapted weights.
The adaptation is first order: the cross-entropy gradient is taken at the
adapted weights without differentiating through the first step.
"""

from __future__ import annotations

import csv
import time
from dataclasses import dataclass, field

import numpy as np

from .checkpoint import save_checkpoint
from .contrastive import bank_from_view_pairs, contrastive_loss
from .encoder import (AdamState, ModelParams, adam_step, backward_from_views,
                      encode_views, init_params, replace_w, reset_head)
from .episodes import MetaTask, sample_meta_task
from .errors import NonFiniteError
from .graph import ClassSplit, Graph
from .mixup import MixupConfig, build_mixed_classes
from .ppr import PPRIndex, SubgraphExtractor
from .seeding import substream

_DTYPES = {"f32": np.float32, "f64": np.float64}


@dataclass(frozen=True)
class TrainConfig:
    episodes: int = 1000
    n_way: int = 2
    k_shot: int = 1
    q_per_task: int = 10
    lr_mc: float = 0.001
    lr_ce: float = 0.001
    tau: float = 0.5
    zeta: float = 0.15
    subgraph_size: int = 10
    hidden_dim: int = 1024
    mixup: MixupConfig = field(default_factory=MixupConfig)
    seed: int = 0
    checkpoint_every: int = 0       # 0 = final checkpoint only
    use_contrastive: bool = True
    self_correction: str = "same_view"
    inner_optimizer: str = "sgd"    # "sgd" (default) or "adam"
    second_order: bool = False      # reserved; only first-order implemented
    precision: str = "f64"
    ppr_tol: float = 1e-8
    ppr_max_iter: int = 1000

    def __post_init__(self):
        if self.episodes < 1:
            raise ValueError("need at least one episode")
        if self.lr_mc < 0 or self.lr_ce <= 0:
            raise ValueError("learning rates must be positive")
        if self.precision not in _DTYPES:
            raise ValueError("precision must be f32 or f64")
        if self.inner_optimizer not in ("sgd", "adam"):
            raise ValueError("inner_optimizer must be sgd or adam")
        if self.second_order:
            raise NotImplementedError(
                "second-order adaptation is reserved but not implemented"
            )

    @property
    def dtype(self):
        return _DTYPES[self.precision]


@dataclass(frozen=True)
class EpisodeReport:
    episode: int
    loss_mc: float
    loss_ce: float
    grad_norm: float
    ms: float


@dataclass(frozen=True, eq=False)
class EpisodeBatch:
    """One episode's task with all subgraphs already extracted."""

    task: MetaTask
    support: list            # N lists of K Subgraphs
    query: list              # Subgraphs parallel to task.query_nodes
    mixed: list | None       # N lists of K MixedSubgraphs, or None


def build_episode(extractor: SubgraphExtractor, task: MetaTask,
                  mixup_cfg: MixupConfig,
                  rng_mixup: np.random.Generator | None) -> EpisodeBatch:
    support = [[extractor.subgraph(v) for v in row]
               for row in task.support_nodes]
    query = [extractor.subgraph(v) for v in task.query_nodes]
    mixed = None
    if mixup_cfg.enabled:
        if rng_mixup is None:
            raise ValueError("mix-up needs its RNG stream")
        mixed = build_mixed_classes(task, support, extractor, mixup_cfg,
                                    rng_mixup)
    return EpisodeBatch(task=task, support=support, query=query, mixed=mixed)


def ce_loss(head_w: np.ndarray, head_b: np.ndarray, views: np.ndarray,
            labels: np.ndarray):
    """Mean cross-entropy of an N-way linear head over pooled views.

    Returns (loss, grad_head_w, grad_head_b, grad_views).
    """
    views = np.atleast_2d(views)
    labels = np.asarray(labels)
    n_way = head_b.shape[0]
    if labels.size and (labels.min() < 0 or labels.max() >= n_way):
        raise ValueError(f"labels must lie in [0, {n_way})")
    q = views.shape[0]
    logits = views @ head_w + head_b
    shifted = logits - logits.max(axis=1, keepdims=True)
    expz = np.exp(shifted)
    probs = expz / expz.sum(axis=1, keepdims=True)
    idx = np.arange(q)
    loss = float(-np.log(probs[idx, labels]).mean())
    dlogits = probs.copy()
    dlogits[idx, labels] -= 1.0
    dlogits /= q
    grad_head_w = views.T @ dlogits
    grad_head_b = dlogits.sum(axis=0)
    grad_views = dlogits @ head_w.T
    return loss, grad_head_w, grad_head_b, grad_views


def mc_loss_and_grad(params: ModelParams, batch: EpisodeBatch, tau: float,
                     self_correction: str = "same_view"):
    """Episode contrastive loss and its gradient w.r.t. encoder weights."""
    pairs, caches = [], []
    for row in batch.support:
        vp_row, cache_row = [], []
        for sub in row:
            vp, cache = encode_views(sub, params)
            vp_row.append(vp)
            cache_row.append(cache)
        pairs.append(vp_row)
        caches.append(cache_row)
    mixed_pairs = mixed_caches = None
    if batch.mixed is not None:
        mixed_pairs, mixed_caches = [], []
        for row in batch.mixed:
            vp_row, cache_row = [], []
            for sub in row:
                vp, cache = encode_views(sub, params)
                vp_row.append(vp)
                cache_row.append(cache)
            mixed_pairs.append(vp_row)
            mixed_caches.append(cache_row)

    bank = bank_from_view_pairs(pairs, mixed_pairs, tau=tau,
                                self_correction=self_correction)
    loss, vg = contrastive_loss(bank)

    grad_w = np.zeros_like(params.w)
    for i in range(bank.n_way):
        for j in range(bank.k_shot):
            grad_w += backward_from_views(
                caches[i][j], vg.original[i, j, 0], vg.original[i, j, 1])
    if mixed_caches is not None:
        for i in range(bank.n_way):
            for j in range(bank.k_shot):
                grad_w += backward_from_views(
                    mixed_caches[i][j], vg.mixed[i, j, 0], vg.mixed[i, j, 1])
    return loss, grad_w


def ce_loss_and_grad(params: ModelParams, batch: EpisodeBatch):
    """Query cross-entropy and gradients w.r.t. (w, head_w, head_b)."""
    caches = []
    rows = []
    for sub in batch.query:
        vp, cache = encode_views(sub, params)
        rows.append(vp.v2)
        caches.append(cache)
    views = np.stack(rows)
    loss, g_hw, g_hb, g_views = ce_loss(params.head_w, params.head_b, views,
                                        batch.task.query_labels)
    grad_w = np.zeros_like(params.w)
    for cache, gv in zip(caches, g_views):
        grad_w += backward_from_views(cache, None, gv)
    return loss, grad_w, g_hw, g_hb


def inner_update(params: ModelParams, batch: EpisodeBatch | None,
                 cfg: TrainConfig, loss_fn=None):
    """One fast-adaptation step on the contrastive loss.

    Plain gradient descent by default; the "adam" variant applies a
    single fresh-moment Adam step (the adaptation is one step from the
    current weights, so there is no running state to carry). Only the
    encoder weights move; the head never enters the contrastive loss.
    Returns (adapted params, loss value, gradient norm). ``loss_fn`` may
    replace the contrastive objective (maps w to (loss, grad_w)).
    """
    if loss_fn is not None:
        loss, grad_w = loss_fn(params.w)
    else:
        loss, grad_w = mc_loss_and_grad(params, batch, cfg.tau,
                                        cfg.self_correction)
    if not np.isfinite(loss) or not np.all(np.isfinite(grad_w)):
        raise NonFiniteError(f"non-finite contrastive loss/gradient "
                             f"(loss={loss})")
    if cfg.inner_optimizer == "adam":
        step = grad_w / (np.abs(grad_w) + 1e-8)
    else:
        step = grad_w
    new_w = params.w - cfg.lr_mc * step
    return replace_w(params, new_w), float(loss), float(np.linalg.norm(grad_w))


def outer_update(params: ModelParams, batch: EpisodeBatch | None,
                 cfg: TrainConfig, adam: AdamState, loss_fn=None):
    """Adam step on the query cross-entropy at the adapted weights.

    Encoder and head update jointly. ``loss_fn`` may replace the CE
    objective (maps params to (loss, (grad_w, grad_head_w, grad_head_b))).
    Returns (new params, loss value, gradient norm).
    """
    if loss_fn is not None:
        loss, (grad_w, g_hw, g_hb) = loss_fn(params)
    else:
        loss, grad_w, g_hw, g_hb = ce_loss_and_grad(params, batch)
    if not np.isfinite(loss):
        raise NonFiniteError(f"non-finite cross-entropy loss ({loss})")
    grads = [grad_w, g_hw, g_hb]
    new_w, new_hw, new_hb = adam_step(
        [params.w, params.head_w, params.head_b], grads, adam, cfg.lr_ce)
    norm = float(np.sqrt(sum(float(np.square(g).sum()) for g in grads)))
    out = ModelParams(w=new_w.astype(params.dtype, copy=False),
                      head_w=new_hw.astype(params.dtype, copy=False),
                      head_b=new_hb.astype(params.dtype, copy=False))
    return out, float(loss), norm


def train(graph: Graph, split: ClassSplit, cfg: TrainConfig,
          log_path=None, checkpoint_path=None,
          start_params: ModelParams | None = None, callback=None):
    """Run the full episodic loop; returns (params, reports).

    Deterministic for a fixed seed in single-threaded float64 mode: all
    randomness flows through named substreams of cfg.seed. When
    ``log_path`` is set, one CSV row per episode is appended as
    ``episode,loss_mc,loss_ce,grad_norm,ms``. ``checkpoint_path`` gets
    the final parameters, plus periodic snapshots at
    ``cfg.checkpoint_every`` when that is positive.
    """
    split.validate_against(graph)
    if start_params is None:
        params = init_params(graph.feat_dim, cfg.hidden_dim, cfg.n_way,
                             substream(cfg.seed, "init"), dtype=cfg.dtype)
    elif start_params.n_way != cfg.n_way:
        params = reset_head(start_params, cfg.n_way)
    else:
        params = start_params

    ppr = PPRIndex(graph, zeta=cfg.zeta, tol=cfg.ppr_tol,
                   max_iter=cfg.ppr_max_iter)
    extractor = SubgraphExtractor(graph, ppr, cfg.subgraph_size)
    adam = AdamState.like([params.w, params.head_w, params.head_b])

    reports = []
    writer = fh = None
    if log_path is not None:
        fh = open(log_path, "w", newline="")
        writer = csv.writer(fh)
        writer.writerow(["episode", "loss_mc", "loss_ce", "grad_norm", "ms"])
    try:
        for t in range(cfg.episodes):
            t0 = time.perf_counter()
            task = sample_meta_task(
                graph, split.train, cfg.n_way, cfg.k_shot, cfg.q_per_task,
                substream(cfg.seed, "sampler", t))
            rng_mix = (substream(cfg.seed, "mixup", t)
                       if cfg.mixup.enabled else None)
            try:
                batch = build_episode(extractor, task, cfg.mixup, rng_mix)
                if cfg.use_contrastive:
                    adapted, loss_mc, _ = inner_update(params, batch, cfg)
                else:
                    adapted, loss_mc = params, 0.0
                params, loss_ce, grad_norm = outer_update(adapted, batch,
                                                          cfg, adam)
            except NonFiniteError as exc:
                raise NonFiniteError(
                    f"episode {t}: {exc}; classes={task.class_ids} "
                    f"support={task.support_nodes.tolist()}"
                ) from exc
            ms = (time.perf_counter() - t0) * 1000.0
            report = EpisodeReport(episode=t, loss_mc=loss_mc,
                                   loss_ce=loss_ce, grad_norm=grad_norm,
                                   ms=ms)
            reports.append(report)
            if writer is not None:
                writer.writerow([t, repr(loss_mc), repr(loss_ce),
                                 repr(grad_norm), f"{ms:.3f}"])
            if callback is not None:
                callback(report, params)
            if (checkpoint_path is not None and cfg.checkpoint_every > 0
                    and (t + 1) % cfg.checkpoint_every == 0
                    and t + 1 < cfg.episodes):
                save_checkpoint(checkpoint_path, params, cfg.seed, t + 1)
    finally:
        if fh is not None:
            fh.close()

    if checkpoint_path is not None:
        save_checkpoint(checkpoint_path, params, cfg.seed, cfg.episodes)
    return params, reports
