"""Meta-test protocol against a frozen encoder.

Every meta-test task gets its own fresh linear classifier fitted on the
mean-pooled support embeddings; the encoder weights never move. Accuracy
is aggregated as repetition means with a normal-approximation confidence
interval, and embedding quality can optionally be scored by k-means
cluster agreement (NMI/ARI) over the test-class nodes.
"""

from __future__ import annotations

import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from sklearn.cluster import KMeans
from sklearn.metrics import adjusted_rand_score, normalized_mutual_info_score

from .encoder import ModelParams, encode_views
from .episodes import sample_meta_task
from .graph import ClassSplit, Graph
from .ppr import PPRIndex, SubgraphExtractor
from .seeding import substream


@dataclass(frozen=True, eq=False)
class TaskClassifier:
    """Multinomial logistic head fitted per meta-test task."""

    weights: np.ndarray      # (d, n_way)
    bias: np.ndarray         # (n_way,)
    weight_decay: float
    iterations: int
    objective: float
    converged: bool


def _lr_objective(weights, bias, x, labels, wd):
    logits = x @ weights + bias
    shifted = logits - logits.max(axis=1, keepdims=True)
    logz = np.log(np.exp(shifted).sum(axis=1))
    ce = float((logz - shifted[np.arange(x.shape[0]), labels]).mean())
    return ce + 0.5 * wd * float(np.square(weights).sum())


def _lr_gradient(weights, bias, x, labels, wd):
    m = x.shape[0]
    logits = x @ weights + bias
    shifted = logits - logits.max(axis=1, keepdims=True)
    expz = np.exp(shifted)
    probs = expz / expz.sum(axis=1, keepdims=True)
    probs[np.arange(m), labels] -= 1.0
    probs /= m
    return x.T @ probs + wd * weights, probs.sum(axis=0)


def fit_task_classifier(support_views: np.ndarray, labels: np.ndarray,
                        weight_decay: float = 1.0, max_iter: int = 500,
                        tol: float = 1e-6) -> TaskClassifier:
    """Logistic regression by full-batch descent with backtracking.

    Starts from zero weights, so the fit is deterministic. The objective
    is mean cross-entropy plus weight_decay * ||W||^2 / 2 on the weights
    (the bias is left unregularized). Stops when the gradient norm drops
    below ``tol``; if ``max_iter`` runs out first the best iterate is
    returned with ``converged=False``.
    """
    x = np.asarray(support_views, dtype=np.float64)
    labels = np.asarray(labels)
    n_way = int(labels.max()) + 1
    w = np.zeros((x.shape[1], n_way))
    b = np.zeros(n_way)
    obj = _lr_objective(w, b, x, labels, weight_decay)
    it = 0
    converged = False
    for it in range(1, max_iter + 1):
        gw, gb = _lr_gradient(w, b, x, labels, weight_decay)
        gsq = float(np.square(gw).sum() + np.square(gb).sum())
        if np.sqrt(gsq) < tol:
            converged = True
            it -= 1
            break
        step = 1.0
        accepted = False
        for _ in range(60):
            w_try = w - step * gw
            b_try = b - step * gb
            obj_try = _lr_objective(w_try, b_try, x, labels, weight_decay)
            if obj_try <= obj - 1e-4 * step * gsq:
                w, b, obj = w_try, b_try, obj_try
                accepted = True
                break
            step /= 2.0
        if not accepted:
            # the step underflowed; nothing better is reachable
            break
    else:
        gw, gb = _lr_gradient(w, b, x, labels, weight_decay)
        converged = bool(np.sqrt(np.square(gw).sum()
                                 + np.square(gb).sum()) < tol)
    return TaskClassifier(weights=w, bias=b, weight_decay=weight_decay,
                          iterations=it, objective=obj, converged=converged)


def predict_labels(clf: TaskClassifier, query_views: np.ndarray) -> np.ndarray:
    """Argmax class per query; ties resolve to the lowest class index."""
    logits = np.atleast_2d(query_views) @ clf.weights + clf.bias
    return np.argmax(logits, axis=1)


@dataclass(frozen=True)
class EvalSummary:
    rep_accuracies: tuple
    mean_accuracy: float
    ci95: float
    num_tasks: int
    n_way: int
    k_shot: int
    nmi: float | None = None
    ari: float | None = None


class _EmbeddingCache:
    """Mean-pooled view per node under fixed params, computed once."""

    def __init__(self, extractor: SubgraphExtractor, params: ModelParams):
        self.extractor = extractor
        self.params = params
        self._cache: dict[int, np.ndarray] = {}
        self._lock = threading.Lock()

    def get(self, node: int) -> np.ndarray:
        node = int(node)
        with self._lock:
            hit = self._cache.get(node)
        if hit is not None:
            return hit
        pair, _ = encode_views(self.extractor.subgraph(node), self.params)
        v2 = pair.v2
        v2.flags.writeable = False
        with self._lock:
            self._cache[node] = v2
        return v2

    def matrix(self, nodes) -> np.ndarray:
        return np.stack([self.get(v) for v in nodes])


def evaluate(graph: Graph, split: ClassSplit, params: ModelParams,
             n_way: int, k_shot: int, num_tasks: int = 100,
             repetitions: int = 10, seed: int = 0, q_per_task: int = 10,
             weight_decay: float = 1.0, zeta: float = 0.15,
             subgraph_size: int = 10, classes=None, workers: int = 0,
             clustering: bool = False,
             extractor: SubgraphExtractor | None = None) -> EvalSummary:
    """Accuracy over repeated batches of few-shot test tasks.

    Each repetition samples ``num_tasks`` tasks from the test classes
    (or ``classes`` when given), fits a per-task classifier on frozen
    support embeddings, and scores the queries. The summary reports the
    mean of repetition means and the 95% interval half-width
    1.96 * stdev / sqrt(repetitions). Task sampling uses one substream
    per (repetition, task), so results do not depend on evaluation
    order or on ``workers``.
    """
    split.validate_against(graph)
    pool = split.test if classes is None else tuple(classes)
    if extractor is None:
        ppr = PPRIndex(graph, zeta=zeta)
        extractor = SubgraphExtractor(graph, ppr, subgraph_size)
    cache = _EmbeddingCache(extractor, params)

    def run_task(rep: int, t: int) -> float:
        rng = substream(seed, "eval", rep, t)
        task = sample_meta_task(graph, pool, n_way, k_shot, q_per_task, rng)
        support = cache.matrix(task.support_nodes.ravel())
        clf = fit_task_classifier(support, task.support_labels(),
                                  weight_decay=weight_decay)
        pred = predict_labels(clf, cache.matrix(task.query_nodes))
        return float((pred == task.query_labels).mean())

    jobs = [(r, t) for r in range(repetitions) for t in range(num_tasks)]
    if workers and workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            accs = list(ex.map(lambda rt: run_task(*rt), jobs))
    else:
        accs = [run_task(r, t) for r, t in jobs]
    per_rep = np.array(accs).reshape(repetitions, num_tasks).mean(axis=1)

    mean = float(per_rep.mean())
    if repetitions > 1:
        ci = float(1.96 * per_rep.std(ddof=1) / np.sqrt(repetitions))
    else:
        ci = 0.0

    nmi = ari = None
    if clustering:
        nodes = np.concatenate([graph.nodes_of_class(c) for c in pool])
        nodes.sort()
        emb = cache.matrix(nodes)
        nmi, ari = clustering_quality(emb, graph.labels[nodes], len(pool),
                                      seed)
    return EvalSummary(rep_accuracies=tuple(float(a) for a in per_rep),
                       mean_accuracy=mean, ci95=ci, num_tasks=num_tasks,
                       n_way=n_way, k_shot=k_shot, nmi=nmi, ari=ari)


def clustering_quality(embeddings: np.ndarray, labels: np.ndarray, k: int,
                       seed: int = 0):
    """(NMI, ARI) of k-means cluster assignments against true labels."""
    embeddings = np.asarray(embeddings)
    if embeddings.shape[0] < k:
        raise ValueError(f"{embeddings.shape[0]} points cannot form {k} "
                         "clusters")
    km = KMeans(n_clusters=k, init="k-means++", n_init=10, random_state=seed)
    assign = km.fit_predict(embeddings)
    nmi = float(normalized_mutual_info_score(labels, assign))
    ari = float(adjusted_rand_score(labels, assign))
    return nmi, ari


def export_embeddings(graph: Graph, split: ClassSplit, params: ModelParams,
                      out_path, zeta: float = 0.15,
                      subgraph_size: int = 10,
                      extractor: SubgraphExtractor | None = None) -> int:
    """Write one CSV row per test-class node: id, label, then the view.

    Rows are sorted by node id and floats are written with repr, so the
    same inputs always produce the same bytes. Returns the row count.
    """
    split.validate_against(graph)
    if extractor is None:
        ppr = PPRIndex(graph, zeta=zeta)
        extractor = SubgraphExtractor(graph, ppr, subgraph_size)
    cache = _EmbeddingCache(extractor, params)
    nodes = np.concatenate([graph.nodes_of_class(c) for c in split.test])
    nodes.sort()
    dim = params.hidden_dim
    header = "node_id,label," + ",".join(f"e{i}" for i in range(dim))
    with open(out_path, "w", newline="") as fh:
        fh.write(header + "\n")
        for v in nodes:
            vec = cache.get(int(v))
            cells = ",".join(repr(float(x)) for x in vec)
            fh.write(f"{int(v)},{int(graph.labels[v])},{cells}\n")
    return int(nodes.size)
