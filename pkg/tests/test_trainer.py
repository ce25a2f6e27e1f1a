"""Two-step episodic optimization: losses, updates, and the full loop."""

import csv
import math

import numpy as np
import pytest

from cosmic.encoder import (AdamState, ModelParams, finite_diff_check,
                            init_params, replace_w)
from cosmic.episodes import sample_meta_task
from cosmic.errors import NonFiniteError
from cosmic.graph import ClassSplit, generate_planted_partition
from cosmic.mixup import MixupConfig
from cosmic.ppr import PPRIndex, SubgraphExtractor
from cosmic.seeding import substream
from cosmic.trainer import (TrainConfig, build_episode, ce_loss,
                            ce_loss_and_grad, inner_update, mc_loss_and_grad,
                            outer_update, train)


def small_problem(seed=0, hidden=8):
    g = generate_planted_partition(5, 14, 0.35, 0.04, 6, 0.3, seed=seed)
    split = ClassSplit.contiguous(5, 3, 1, 1)
    ppr = PPRIndex(g)
    ex = SubgraphExtractor(g, ppr, 6)
    params = init_params(g.feat_dim, hidden, 2, substream(seed, "init"))
    return g, split, ex, params


def episode_batch(g, split, ex, seed=0, n_way=2, k_shot=2, q=4, mixup=True):
    task = sample_meta_task(g, split.train, n_way, k_shot, q,
                            substream(seed, "sampler", 0))
    cfg = MixupConfig(enabled=mixup)
    rng = substream(seed, "mixup", 0) if mixup else None
    return build_episode(ex, task, cfg, rng)


# ---------------------------------------------------------------------------
# cross-entropy head


def test_ce_uniform_at_zero_head():
    rng = np.random.default_rng(0)
    views = rng.normal(size=(7, 5))
    labels = rng.integers(0, 3, size=7)
    loss, g_hw, g_hb, g_v = ce_loss(np.zeros((5, 3)), np.zeros(3), views,
                                    labels)
    assert loss == pytest.approx(math.log(3), rel=1e-12)
    # zero head weights mean logits ignore views entirely
    assert np.allclose(g_v, 0.0)
    counts = np.bincount(labels, minlength=3) / 7
    assert np.allclose(g_hb, 1.0 / 3.0 - counts)


def test_ce_confident_head_loss_vanishes():
    views = np.array([[1.0, 0.0], [0.0, 1.0]])
    head_w = 50.0 * np.eye(2)
    loss, _, _, _ = ce_loss(head_w, np.zeros(2), views, np.array([0, 1]))
    assert loss < 1e-4


def test_ce_gradients_match_finite_differences():
    rng = np.random.default_rng(1)
    views = rng.normal(size=(6, 4))
    labels = rng.integers(0, 3, size=6)
    hw = rng.normal(size=(4, 3))
    hb = rng.normal(size=3)

    rel, _ = finite_diff_check(
        lambda a: ce_loss(a, hb, views, labels)[:2], hw)
    assert rel < 1e-6
    rel, _ = finite_diff_check(
        lambda a: (ce_loss(hw, a, views, labels)[0],
                   ce_loss(hw, a, views, labels)[2]), hb)
    assert rel < 1e-6
    rel, _ = finite_diff_check(
        lambda a: (ce_loss(hw, hb, a, labels)[0],
                   ce_loss(hw, hb, a, labels)[3]), views)
    assert rel < 1e-6


def test_ce_label_out_of_range():
    with pytest.raises(ValueError, match="labels"):
        ce_loss(np.zeros((2, 2)), np.zeros(2), np.ones((1, 2)), np.array([2]))


def test_ce_shift_invariance():
    """Adding a constant to every bias leaves the loss unchanged."""
    rng = np.random.default_rng(2)
    views = rng.normal(size=(5, 3))
    labels = rng.integers(0, 4, size=5)
    hw = rng.normal(size=(3, 4))
    hb = rng.normal(size=4)
    l1, *_ = ce_loss(hw, hb, views, labels)
    l2, *_ = ce_loss(hw, hb + 1000.0, views, labels)
    assert l1 == pytest.approx(l2, rel=1e-9)


# ---------------------------------------------------------------------------
# episode losses through the encoder


def test_mc_gradient_matches_finite_differences():
    g, split, ex, params = small_problem()
    batch = episode_batch(g, split, ex)

    def loss_fn(w):
        p = replace_w(params, w)
        return mc_loss_and_grad(p, batch, 0.5)

    rel, _ = finite_diff_check(loss_fn, params.w, h=1e-6, max_coords=24,
                               rng=np.random.default_rng(3))
    assert rel < 1e-4


def test_mc_without_mixed_classes():
    g, split, ex, params = small_problem()
    plain = episode_batch(g, split, ex, mixup=False)
    loss, grad = mc_loss_and_grad(params, plain, 0.5)
    assert np.isfinite(loss)
    assert grad.shape == params.w.shape
    with_mix = episode_batch(g, split, ex, mixup=True)
    loss_mix, _ = mc_loss_and_grad(params, with_mix, 0.5)
    assert loss_mix > loss   # extra negatives only ever grow the objective


def test_ce_episode_gradient_matches_finite_differences():
    g, split, ex, params = small_problem()
    batch = episode_batch(g, split, ex, mixup=False)

    def loss_fn(w):
        p = replace_w(params, w)
        loss, grad_w, _, _ = ce_loss_and_grad(p, batch)
        return loss, grad_w

    # zero head means zero encoder gradient, so give the head some signal
    rng = np.random.default_rng(4)
    params = ModelParams(w=params.w,
                         head_w=rng.normal(size=params.head_w.shape),
                         head_b=rng.normal(size=params.head_b.shape))
    rel, _ = finite_diff_check(loss_fn, params.w, h=1e-6, max_coords=24,
                               rng=np.random.default_rng(5))
    assert rel < 1e-4


# ---------------------------------------------------------------------------
# single updates


def test_inner_update_quadratic_surrogate():
    """Plain gradient descent: w' = w - lr * (w - target)."""
    g, split, ex, params = small_problem()
    cfg = TrainConfig(lr_mc=0.1, episodes=1)
    target = np.ones_like(params.w)

    def loss_fn(w):
        return 0.5 * float(np.square(w - target).sum()), w - target

    adapted, loss, gnorm = inner_update(params, None, cfg, loss_fn=loss_fn)
    want = params.w - 0.1 * (params.w - target)
    assert np.allclose(adapted.w, want, atol=1e-15)
    assert loss == pytest.approx(0.5 * np.square(params.w - target).sum())
    assert gnorm == pytest.approx(np.linalg.norm(params.w - target))
    # head is untouched by the fast step
    assert adapted.head_w is params.head_w


def test_inner_update_zero_lr_keeps_weights():
    g, split, ex, params = small_problem()
    batch = episode_batch(g, split, ex)
    cfg = TrainConfig(lr_mc=0.0, episodes=1)
    adapted, _, _ = inner_update(params, batch, cfg)
    assert np.array_equal(adapted.w, params.w)


def test_inner_update_adam_variant_closed_form():
    g, split, ex, params = small_problem()
    cfg = TrainConfig(lr_mc=0.01, inner_optimizer="adam", episodes=1)
    grad = np.full_like(params.w, 2.0)
    adapted, _, _ = inner_update(params, None, cfg,
                                 loss_fn=lambda w: (1.0, grad))
    want = params.w - 0.01 * grad / (np.abs(grad) + 1e-8)
    assert np.allclose(adapted.w, want)


def test_inner_update_rejects_non_finite():
    g, split, ex, params = small_problem()
    cfg = TrainConfig(episodes=1)
    with pytest.raises(NonFiniteError):
        inner_update(params, None, cfg,
                     loss_fn=lambda w: (float("nan"), np.zeros_like(w)))


def test_outer_update_zero_gradient_is_a_no_op():
    g, split, ex, params = small_problem()
    cfg = TrainConfig(episodes=1)
    adam = AdamState.like([params.w, params.head_w, params.head_b])

    def loss_fn(p):
        return 1.0, (np.zeros_like(p.w), np.zeros_like(p.head_w),
                     np.zeros_like(p.head_b))

    out, loss, norm = outer_update(params, None, cfg, adam, loss_fn=loss_fn)
    assert np.array_equal(out.w, params.w)
    assert np.array_equal(out.head_w, params.head_w)
    assert norm == 0.0


def test_outer_update_descends_on_repeated_batch():
    g, split, ex, params = small_problem(hidden=16)
    batch = episode_batch(g, split, ex, mixup=False)
    cfg = TrainConfig(lr_ce=0.05, episodes=1, hidden_dim=16)
    adam = AdamState.like([params.w, params.head_w, params.head_b])
    losses = []
    for _ in range(40):
        params, loss, _ = outer_update(params, batch, cfg, adam)
        losses.append(loss)
    assert losses[-1] < losses[0]
    assert losses[-1] < 0.2


# ---------------------------------------------------------------------------
# the loop


def loop_config(**kw):
    base = dict(episodes=3, n_way=2, k_shot=1, q_per_task=4, hidden_dim=8,
                subgraph_size=6, seed=11)
    base.update(kw)
    return TrainConfig(**base)


def test_train_single_episode_moves_weights():
    g, split, ex, params = small_problem()
    cfg = loop_config(episodes=1)
    out, reports = train(g, split, cfg)
    init = init_params(g.feat_dim, cfg.hidden_dim, cfg.n_way,
                       substream(cfg.seed, "init"))
    assert not np.array_equal(out.w, init.w)
    assert len(reports) == 1
    assert reports[0].episode == 0
    assert np.isfinite(reports[0].loss_mc)


def test_train_writes_episode_log(tmp_path):
    g, split, ex, _ = small_problem()
    log = tmp_path / "episodes.csv"
    _, reports = train(g, split, loop_config(), log_path=log)
    with open(log, newline="") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["episode", "loss_mc", "loss_ce", "grad_norm", "ms"]
    assert len(rows) == 4
    for t, row in enumerate(rows[1:]):
        assert int(row[0]) == t
        assert float(row[1]) == reports[t].loss_mc
        assert float(row[2]) == reports[t].loss_ce
        assert float(row[3]) == reports[t].grad_norm


def test_train_same_seed_identical_checkpoints(tmp_path):
    g, split, ex, _ = small_problem()
    p1 = tmp_path / "a.bin"
    p2 = tmp_path / "b.bin"
    train(g, split, loop_config(), checkpoint_path=p1)
    train(g, split, loop_config(), checkpoint_path=p2)
    assert p1.read_bytes() == p2.read_bytes()


def test_train_different_seed_differs(tmp_path):
    g, split, ex, _ = small_problem()
    p1 = tmp_path / "a.bin"
    p2 = tmp_path / "b.bin"
    train(g, split, loop_config(seed=11), checkpoint_path=p1)
    train(g, split, loop_config(seed=12), checkpoint_path=p2)
    assert p1.read_bytes() != p2.read_bytes()


def test_train_callback_and_periodic_checkpoints(tmp_path):
    g, split, ex, _ = small_problem()
    seen = []
    ckpt = tmp_path / "c.bin"
    train(g, split, loop_config(episodes=5, checkpoint_every=2),
          checkpoint_path=ckpt, callback=lambda r, p: seen.append(r.episode))
    assert seen == [0, 1, 2, 3, 4]
    from cosmic.checkpoint import load_checkpoint
    _, header = load_checkpoint(ckpt)
    assert header["episode"] == 5    # final snapshot wins


def test_train_without_contrastive_records_zero_mc():
    g, split, ex, _ = small_problem()
    _, reports = train(g, split, loop_config(use_contrastive=False))
    assert all(r.loss_mc == 0.0 for r in reports)


def test_train_without_mixup_runs():
    g, split, ex, _ = small_problem()
    _, reports = train(g, split,
                       loop_config(mixup=MixupConfig(enabled=False)))
    assert len(reports) == 3
    assert all(np.isfinite(r.loss_ce) for r in reports)


def test_train_resumes_and_resets_head_on_way_change():
    g, split, ex, _ = small_problem()
    p3, _ = train(g, split, loop_config(n_way=3))
    assert p3.n_way == 3
    out, _ = train(g, split, loop_config(n_way=2), start_params=p3)
    assert out.n_way == 2


def test_train_non_finite_blame_names_episode():
    g, split, ex, _ = small_problem()
    bad = ModelParams(w=np.full((6, 8), 1e200),
                      head_w=np.zeros((8, 2)), head_b=np.zeros(2))
    with pytest.raises(NonFiniteError, match="episode 0"):
        train(g, split, loop_config(), start_params=bad)


def test_train_progress_probe_on_planted_partition():
    """Average query loss over the last 50 episodes beats the first 50."""
    g = generate_planted_partition(6, 30, 0.25, 0.02, 16, 0.4, seed=7)
    split = ClassSplit.contiguous(6, 4, 1, 1)
    cfg = TrainConfig(episodes=300, n_way=2, k_shot=1, q_per_task=6,
                      hidden_dim=32, subgraph_size=10, seed=5)
    _, reports = train(g, split, cfg)
    ce = np.array([r.loss_ce for r in reports])
    assert ce[-50:].mean() < ce[:50].mean()


def test_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(episodes=0)
    with pytest.raises(ValueError):
        TrainConfig(lr_ce=0.0)
    with pytest.raises(ValueError):
        TrainConfig(precision="f16")
    with pytest.raises(ValueError):
        TrainConfig(inner_optimizer="lbfgs")
    with pytest.raises(NotImplementedError):
        TrainConfig(second_order=True)
