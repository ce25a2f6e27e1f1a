"""Immutable attributed-graph storage, dataset ingestion, and normalizations.

On-disk dataset format (one directory per dataset):

* ``edges.tsv``    one edge per line, two whitespace-separated integers
* ``features.csv`` comma-separated reals, row i = node i (in dense-id order)
* ``labels.tsv``   lines ``node_id<TAB>class_id``
* ``splits.json``  object with ``train``/``val``/``test`` arrays of class ids

Node ids may be arbitrary integers; ingestion remaps them to dense 0..n-1
(order-preserving) and records the mapping in ``node_id_map.json`` next to
the inputs.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .errors import DatasetFormatError, SplitError

log = logging.getLogger(__name__)


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class Graph:
    """Undirected attributed graph with per-node integer class labels.

    The adjacency is stored symmetric in CSR form, duplicate edges collapsed
    and self-loops absent (self-loops only appear inside GCN normalization).
    All arrays are read-only; a Graph is safe to share across threads.
    """

    adjacency: sp.csr_matrix
    features: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        n = self.adjacency.shape[0]
        if self.adjacency.shape != (n, n):
            raise ValueError("adjacency must be square")
        if self.features.shape[0] != n:
            raise ValueError(
                f"feature rows ({self.features.shape[0]}) != num nodes ({n})"
            )
        if self.labels.shape != (n,):
            raise ValueError("labels must be one id per node")
        if self.labels.size and self.labels.min() < 0:
            raise ValueError("labels must be non-negative")
        adj = self.adjacency.tocsr()
        adj.sum_duplicates()
        adj.sort_indices()
        if adj.diagonal().any():
            raise ValueError("self-loops are not stored; drop them on ingestion")
        if (adj != adj.T).nnz != 0:
            raise ValueError("adjacency must be symmetric")
        adj.data = _frozen(adj.data)
        adj.indices = _frozen(adj.indices)
        adj.indptr = _frozen(adj.indptr)
        object.__setattr__(self, "adjacency", adj)
        object.__setattr__(self, "features", _frozen(np.asarray(self.features, dtype=np.float64)))
        object.__setattr__(self, "labels", _frozen(np.asarray(self.labels, dtype=np.int64)))

    @property
    def num_nodes(self) -> int:
        return self.adjacency.shape[0]

    @property
    def num_classes(self) -> int:
        return int(self.labels.max()) + 1 if self.labels.size else 0

    @property
    def feat_dim(self) -> int:
        return self.features.shape[1]

    @property
    def degrees(self) -> np.ndarray:
        return np.asarray(self.adjacency.sum(axis=1)).ravel()

    def nodes_of_class(self, class_id: int) -> np.ndarray:
        """Node ids carrying ``class_id``, ascending."""
        return np.flatnonzero(self.labels == class_id)


def graph_from_edges(edges: np.ndarray, features: np.ndarray, labels: np.ndarray,
                     weights: np.ndarray | None = None) -> Graph:
    """Build a Graph from an edge list, symmetrizing and collapsing duplicates.

    ``edges`` is (m, 2) int; self-loops are dropped. ``weights`` defaults to 1
    per edge; duplicate (u, v) entries keep a single unit weight.
    """
    n = features.shape[0]
    edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    keep = edges[:, 0] != edges[:, 1]
    edges = edges[keep]
    if weights is None:
        w = np.ones(len(edges))
    else:
        w = np.asarray(weights, dtype=np.float64)[keep]
    rows = np.concatenate([edges[:, 0], edges[:, 1]])
    cols = np.concatenate([edges[:, 1], edges[:, 0]])
    data = np.concatenate([w, w])
    adj = sp.coo_matrix((data, (rows, cols)), shape=(n, n)).tocsr()
    # collapse duplicates (and the double-count from symmetrization) to unit weight
    if weights is None:
        adj.data[:] = 1.0
    else:
        adj.sum_duplicates()
    return Graph(adjacency=adj, features=features, labels=labels)


# ---------------------------------------------------------------------------
# ingestion


def _read_lines(path):
    if not path.is_file():
        raise DatasetFormatError(path, "file not found")
    return path.read_text().splitlines()


def _parse_int(token, path, lineno, what):
    try:
        return int(token)
    except ValueError:
        raise DatasetFormatError(path, f"{what} {token!r} is not an integer", line=lineno)


def load_graph(dataset_dir) -> Graph:
    """Load a dataset directory into a Graph.

    Raises DatasetFormatError naming the file (and line where applicable) on
    missing files, malformed ids, feature-row mismatches, or bad labels.
    """
    from pathlib import Path

    dataset_dir = Path(dataset_dir)
    edges_path = dataset_dir / "edges.tsv"
    feats_path = dataset_dir / "features.csv"
    labels_path = dataset_dir / "labels.tsv"

    # labels first: they define the node universe
    raw_labels = {}
    for lineno, line in enumerate(_read_lines(labels_path), start=1):
        if not line.strip():
            continue
        parts = line.split()
        if len(parts) != 2:
            raise DatasetFormatError(labels_path, f"expected 'node<TAB>class', got {line!r}", line=lineno)
        node = _parse_int(parts[0], labels_path, lineno, "node id")
        cls = _parse_int(parts[1], labels_path, lineno, "class id")
        if cls < 0:
            raise DatasetFormatError(labels_path, f"class id {cls} out of range", line=lineno)
        if node in raw_labels:
            raise DatasetFormatError(labels_path, f"duplicate label for node {node}", line=lineno)
        raw_labels[node] = cls

    if not raw_labels:
        raise DatasetFormatError(labels_path, "no labels found")

    original_ids = sorted(raw_labels)
    n = len(original_ids)
    dense = {orig: i for i, orig in enumerate(original_ids)}
    if original_ids != list(range(n)):
        sidecar = dataset_dir / "node_id_map.json"
        try:
            sidecar.write_text(json.dumps({str(k): v for k, v in dense.items()}, sort_keys=True))
        except OSError as exc:  # mapping is advisory; the load itself still succeeds
            log.warning("could not write %s: %s", sidecar, exc)

    labels = np.array([raw_labels[orig] for orig in original_ids], dtype=np.int64)

    feat_rows = []
    width = None
    for lineno, line in enumerate(_read_lines(feats_path), start=1):
        if not line.strip():
            continue
        parts = line.split(",")
        if width is None:
            width = len(parts)
        elif len(parts) != width:
            raise DatasetFormatError(feats_path, f"expected {width} columns, got {len(parts)}", line=lineno)
        try:
            feat_rows.append([float(p) for p in parts])
        except ValueError:
            raise DatasetFormatError(feats_path, f"non-numeric feature value in {line!r}", line=lineno)
    features = np.asarray(feat_rows, dtype=np.float64)
    if features.shape[0] != n:
        raise DatasetFormatError(
            feats_path, f"feature rows ({features.shape[0]}) != labeled nodes ({n})"
        )

    edge_list = []
    for lineno, line in enumerate(_read_lines(edges_path), start=1):
        if not line.strip():
            continue
        parts = line.split()
        if len(parts) != 2:
            raise DatasetFormatError(edges_path, f"expected two node ids, got {line!r}", line=lineno)
        u = _parse_int(parts[0], edges_path, lineno, "node id")
        v = _parse_int(parts[1], edges_path, lineno, "node id")
        for node in (u, v):
            if node not in dense:
                raise DatasetFormatError(edges_path, f"node id {node} has no label entry", line=lineno)
        edge_list.append((dense[u], dense[v]))

    edges = np.asarray(edge_list, dtype=np.int64).reshape(-1, 2)
    return graph_from_edges(edges, features, labels)


# ---------------------------------------------------------------------------
# class splits


@dataclass(frozen=True)
class ClassSplit:
    """Disjoint meta-training / meta-validation / meta-test class sets."""

    train: tuple
    val: tuple
    test: tuple

    def __post_init__(self):
        train = tuple(sorted(int(c) for c in self.train))
        val = tuple(sorted(int(c) for c in self.val))
        test = tuple(sorted(int(c) for c in self.test))
        for name, part in (("train", train), ("val", val), ("test", test)):
            if not part:
                raise SplitError(f"{name} split is empty")
            if any(c < 0 for c in part):
                raise SplitError(f"{name} split has a negative class id")
        if set(train) & set(val) or set(train) & set(test) or set(val) & set(test):
            raise SplitError("splits overlap")
        object.__setattr__(self, "train", train)
        object.__setattr__(self, "val", val)
        object.__setattr__(self, "test", test)

    def validate_against(self, graph: Graph) -> None:
        known = set(range(graph.num_classes))
        unknown = (set(self.train) | set(self.val) | set(self.test)) - known
        if unknown:
            raise SplitError(f"split references unknown class ids {sorted(unknown)}")

    @staticmethod
    def contiguous(num_classes: int, n_train: int, n_val: int, n_test: int) -> "ClassSplit":
        """First n_train ids train, next n_val val, next n_test test."""
        if n_train + n_val + n_test > num_classes:
            raise SplitError(
                f"split {n_train}/{n_val}/{n_test} needs more than {num_classes} classes"
            )
        ids = list(range(num_classes))
        return ClassSplit(
            train=ids[:n_train],
            val=ids[n_train:n_train + n_val],
            test=ids[n_train + n_val:n_train + n_val + n_test],
        )


def load_class_split(path, num_classes: int | None = None) -> ClassSplit:
    """Read a ``splits.json`` file; optionally check ids against an alphabet."""
    from pathlib import Path

    path = Path(path)
    if not path.is_file():
        raise DatasetFormatError(path, "file not found")
    try:
        obj = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise DatasetFormatError(path, f"invalid JSON: {exc}")
    missing = {"train", "val", "test"} - set(obj)
    if missing:
        raise DatasetFormatError(path, f"missing keys {sorted(missing)}")
    split = ClassSplit(train=obj["train"], val=obj["val"], test=obj["test"])
    if num_classes is not None:
        unknown = [c for c in (*split.train, *split.val, *split.test) if c >= num_classes]
        if unknown:
            raise SplitError(f"split references unknown class ids {sorted(set(unknown))}")
    return split


# ---------------------------------------------------------------------------
# normalizations


def column_normalize(g: Graph) -> sp.csr_matrix:
    """Column-stochastic adjacency: each column divided by its degree.

    Columns of zero-degree nodes stay all-zero; the PPR restart term handles
    them.
    """
    adj = g.adjacency
    deg = np.asarray(adj.sum(axis=0)).ravel()
    inv = np.zeros_like(deg)
    np.divide(1.0, deg, out=inv, where=deg > 0)
    out = (adj @ sp.diags(inv)).tocsr()
    out.sort_indices()
    return out


def gcn_normalize(adj):
    """Symmetrically normalized propagation operator with self-loops.

    Accepts a Graph, a sparse matrix, or a dense array (weighted entries
    allowed) and returns D^{-1/2} (A + I) D^{-1/2} in the matching layout.
    An isolated node reduces to its self-loop: that row/column is the
    identity row.
    """
    if isinstance(adj, Graph):
        adj = adj.adjacency
    if sp.issparse(adj):
        if adj.data.size and adj.data.min() < 0:
            raise ValueError("negative edge weight")
        a = adj + sp.eye(adj.shape[0], format=adj.format)
        deg = np.asarray(a.sum(axis=1)).ravel()
        inv_sqrt = 1.0 / np.sqrt(deg)
        d = sp.diags(inv_sqrt)
        return (d @ a @ d).tocsr()
    a = np.asarray(adj, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError("adjacency must be square")
    if a.size and a.min() < 0:
        raise ValueError("negative edge weight")
    a = a + np.eye(a.shape[0])
    inv_sqrt = 1.0 / np.sqrt(a.sum(axis=1))
    return a * inv_sqrt[:, None] * inv_sqrt[None, :]


# ---------------------------------------------------------------------------
# synthetic graphs


def generate_planted_partition(num_classes: int, nodes_per_class: int,
                               p_in: float, p_out: float,
                               feat_dim: int, feat_noise: float,
                               seed: int) -> Graph:
    """Planted-partition graph with class-conditional Gaussian features.

    Nodes are grouped in ``num_classes`` blocks of ``nodes_per_class``; an
    intra-class pair is connected with probability ``p_in``, an inter-class
    pair with ``p_out``. Node features are the one-hot class mean plus
    N(0, feat_noise^2) noise (feat_dim >= num_classes). Deterministic and
    platform-stable under ``seed``.
    """
    if not (0 <= p_out < p_in <= 1):
        raise ValueError(f"need 0 <= p_out < p_in <= 1, got p_in={p_in}, p_out={p_out}")
    if feat_dim < num_classes:
        raise ValueError("feat_dim must be at least num_classes")
    if feat_noise < 0:
        raise ValueError("feat_noise must be non-negative")

    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(seed)])))
    n = num_classes * nodes_per_class
    labels = np.repeat(np.arange(num_classes), nodes_per_class)

    # edges first, then features: keeps both reproducible under one seed
    probs = np.where(labels[:, None] == labels[None, :], p_in, p_out)
    draw = rng.random((n, n))
    upper = np.triu(draw < probs, k=1)
    rows, cols = np.nonzero(upper)
    edges = np.stack([rows, cols], axis=1)

    means = np.zeros((num_classes, feat_dim))
    means[np.arange(num_classes), np.arange(num_classes)] = 1.0
    features = means[labels]
    if feat_noise > 0:
        features = features + feat_noise * rng.standard_normal((n, feat_dim))

    return graph_from_edges(edges, features, labels)
