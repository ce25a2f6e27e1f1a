"""Task sampling: structure, feasibility, coverage."""

import numpy as np
import pytest

from cosmic.episodes import MetaTask, sample_meta_task
from cosmic.errors import InfeasibleTaskError
from cosmic.graph import generate_planted_partition, graph_from_edges
from cosmic.seeding import substream


def labeled_graph(class_sizes):
    """Edgeless graph whose labels follow the given per-class counts."""
    labels = np.concatenate([np.full(sz, c, dtype=int)
                             for c, sz in enumerate(class_sizes)])
    n = labels.size
    feats = np.arange(n, dtype=float).reshape(n, 1)
    return graph_from_edges(np.empty((0, 2), dtype=int), feats, labels)


def test_task_structure():
    g = labeled_graph([6, 6, 6])
    rng = np.random.default_rng(0)
    task = sample_meta_task(g, [0, 1, 2], n_way=2, k_shot=2,
                            q_per_task=4, rng=rng)
    assert task.support_nodes.shape == (2, 2)
    assert task.query_nodes.shape == (4,)
    assert len(task.class_ids) == 2
    assert len(set(task.class_ids)) == 2
    # support rows carry their class, local labels follow class_ids order
    for i, c in enumerate(task.class_ids):
        assert np.all(g.labels[task.support_nodes[i]] == c)
    for node, lab in zip(task.query_nodes, task.query_labels):
        assert g.labels[node] == task.class_ids[lab]
    assert np.array_equal(task.support_labels(), [0, 0, 1, 1])


def test_support_query_disjoint_exhaustive():
    g = labeled_graph([8, 8, 8, 8])
    for trial in range(300):
        rng = substream(1, "sampler", trial)
        task = sample_meta_task(g, [0, 1, 2, 3], 2, 2, 6, rng)
        sup = set(task.support_nodes.ravel().tolist())
        qry = set(task.query_nodes.tolist())
        assert not sup & qry
        assert len(sup) == 4
        assert len(qry) == 6  # within-task draws never repeat


def test_sampling_deterministic_per_stream():
    g = labeled_graph([10, 10, 10])
    a = sample_meta_task(g, [0, 1, 2], 2, 1, 5, substream(3, "sampler", 7))
    b = sample_meta_task(g, [0, 1, 2], 2, 1, 5, substream(3, "sampler", 7))
    assert a.class_ids == b.class_ids
    assert np.array_equal(a.support_nodes, b.support_nodes)
    assert np.array_equal(a.query_nodes, b.query_nodes)


def test_not_enough_classes():
    g = labeled_graph([5, 5])
    with pytest.raises(InfeasibleTaskError, match="pool"):
        sample_meta_task(g, [0], 2, 1, 2, np.random.default_rng(0))


def test_class_with_only_k_nodes_infeasible():
    """Every class holds exactly k nodes, so queries have nowhere to come from."""
    g = labeled_graph([1, 1])
    with pytest.raises(InfeasibleTaskError):
        sample_meta_task(g, [0, 1], 2, 1, 2, np.random.default_rng(0))


def test_small_class_skipped_when_alternatives_exist():
    # class 1 has a single node; 2-way 1-shot with queries must avoid it
    g = labeled_graph([5, 1, 5, 5])
    for trial in range(50):
        rng = substream(2, "sampler", trial)
        task = sample_meta_task(g, [0, 1, 2, 3], 2, 1, 2, rng)
        assert 1 not in task.class_ids


def test_zero_queries_allowed():
    g = labeled_graph([2, 2])
    task = sample_meta_task(g, [0, 1], 2, 2, 0, np.random.default_rng(4))
    assert task.num_query == 0


def test_coverage_over_many_draws():
    """Each class of a 5-class pool appears in some task within 1000 draws."""
    g = generate_planted_partition(5, 20, 0.3, 0.05, 8, 0.2, seed=8)
    seen = set()
    for trial in range(1000):
        rng = substream(5, "sampler", trial)
        task = sample_meta_task(g, range(5), 2, 1, 3, rng)
        seen.update(task.class_ids)
    assert seen == {0, 1, 2, 3, 4}


def test_arrays_read_only():
    g = labeled_graph([4, 4])
    task = sample_meta_task(g, [0, 1], 2, 1, 2, np.random.default_rng(1))
    with pytest.raises(ValueError):
        task.support_nodes[0, 0] = 99


def test_bad_arguments():
    g = labeled_graph([4, 4])
    rng = np.random.default_rng(0)
    with pytest.raises(ValueError):
        sample_meta_task(g, [0, 1], 1, 1, 2, rng)
    with pytest.raises(ValueError):
        sample_meta_task(g, [0, 1], 2, 0, 2, rng)


def test_metatask_validates_shapes():
    with pytest.raises(ValueError, match="shape"):
        MetaTask(n_way=2, k_shot=1, class_ids=(0, 1),
                 support_nodes=np.zeros((3, 1), dtype=int),
                 query_nodes=np.zeros(2, dtype=int),
                 query_labels=np.zeros(2, dtype=int))
