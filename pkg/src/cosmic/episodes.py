"""N-way K-shot episode sampling.

An episode (meta-task) draws N classes from a class pool, K labeled support
nodes per class, and a query set from the remaining nodes of those classes.
Class labels are remapped to local ids 0..N-1 in ascending class-id order,
a fixed convention that lets the persistent N-way head accumulate signal
across episodes (with per-draw orderings the permutation symmetry would cap
the expected query loss at log N no matter how good the encoder gets).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InfeasibleTaskError
from .graph import Graph

_MAX_RETRIES = 100


@dataclass(frozen=True, eq=False)
class MetaTask:
    """One few-shot classification problem.

    ``support_nodes`` is (N, K): row i holds the K support nodes of local
    class i. Query arrays are flat with parallel local labels. ``class_ids``
    maps local label -> original class id.
    """

    n_way: int
    k_shot: int
    class_ids: tuple[int, ...]
    support_nodes: np.ndarray   # (N, K) int
    query_nodes: np.ndarray     # (Q,) int
    query_labels: np.ndarray    # (Q,) int, values in [0, N)

    def __post_init__(self):
        if self.support_nodes.shape != (self.n_way, self.k_shot):
            raise ValueError("support_nodes shape mismatch")
        if self.query_nodes.shape != self.query_labels.shape:
            raise ValueError("query arrays must be parallel")
        for a in (self.support_nodes, self.query_nodes, self.query_labels):
            a.flags.writeable = False

    @property
    def num_query(self) -> int:
        return int(self.query_nodes.size)

    def support_labels(self) -> np.ndarray:
        """Flat local labels parallel to support_nodes.ravel()."""
        return np.repeat(np.arange(self.n_way), self.k_shot)


def sample_meta_task(graph: Graph, classes, n_way: int, k_shot: int,
                     q_per_task: int, rng: np.random.Generator) -> MetaTask:
    """Draw one N-way K-shot task from the given class pool.

    Each drawn class must have at least k_shot + ceil(q_per_task / n_way)
    labeled nodes; classes violating this are redrawn a bounded number of
    times before the task is declared infeasible. Query nodes are drawn
    uniformly (without replacement) from the pooled leftover nodes of the
    chosen classes, so per-class query counts need not be balanced.
    """
    pool = sorted(int(c) for c in classes)
    if n_way < 2:
        raise ValueError("tasks need at least 2 classes")
    if len(pool) < n_way:
        raise InfeasibleTaskError(
            f"cannot draw {n_way} classes from a pool of {len(pool)}"
        )
    if k_shot < 1 or q_per_task < 0:
        raise ValueError("k_shot must be >= 1 and q_per_task >= 0")

    need = k_shot + math.ceil(q_per_task / n_way) if q_per_task else k_shot
    chosen: list[int] = []
    remaining = list(pool)
    retries = 0
    while len(chosen) < n_way:
        if not remaining:
            raise InfeasibleTaskError(
                f"no class in {pool} has the {need} nodes required for "
                f"{n_way}-way {k_shot}-shot with {q_per_task} queries"
            )
        idx = int(rng.integers(len(remaining)))
        cand = remaining[idx]
        if graph.nodes_of_class(cand).size >= need:
            chosen.append(cand)
            remaining.pop(idx)
            continue
        retries += 1
        if retries > _MAX_RETRIES:
            raise InfeasibleTaskError(
                f"gave up after {_MAX_RETRIES} class redraws; class {cand} "
                f"has {graph.nodes_of_class(cand).size} nodes, {need} needed"
            )
        remaining.pop(idx)
    chosen.sort()

    support = np.empty((n_way, k_shot), dtype=np.int64)
    leftovers = []
    for i, c in enumerate(chosen):
        members = graph.nodes_of_class(c)
        picked = rng.choice(members, size=k_shot, replace=False)
        support[i] = np.sort(picked)
        rest = np.setdiff1d(members, picked, assume_unique=True)
        leftovers.append(rest)

    if q_per_task:
        flat = np.concatenate(leftovers)
        labels = np.concatenate([
            np.full(r.size, i, dtype=np.int64) for i, r in enumerate(leftovers)
        ])
        take = rng.choice(flat.size, size=q_per_task, replace=False)
        query_nodes = flat[take]
        query_labels = labels[take]
    else:
        query_nodes = np.empty(0, dtype=np.int64)
        query_labels = np.empty(0, dtype=np.int64)

    return MetaTask(
        n_way=n_way, k_shot=k_shot, class_ids=tuple(chosen),
        support_nodes=support, query_nodes=query_nodes,
        query_labels=query_labels,
    )
