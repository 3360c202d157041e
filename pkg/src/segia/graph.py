"""Sparse attributed graphs: storage, I/O, normalization, LCC, synthetic data.

The central type is :class:`AttributedGraph`, an immutable container for an
undirected 0/1 graph with dense real-valued node features, integer class
labels, and two disjoint node splits (labeled / targets). Each undirected
edge is stored exactly once as a ``(u, v)`` pair with ``u < v``; a symmetric
CSR adjacency is derived lazily for matrix work.

File formats (mirrored exactly by :func:`load_graph` / :func:`save_graph`):

* edges:    CSV with header ``src,dst``, one undirected edge per row
* features: CSV, row ``u`` holds the D feature values of node ``u``
* labels:   CSV with header ``node,label``
* splits:   JSON object ``{"labeled": [ids], "targets": [ids]}``
"""

from __future__ import annotations

import csv
import hashlib
import json
import warnings
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components


class GraphFormatError(ValueError):
    """Malformed input file (message names the offending line)."""


class GraphValidationError(ValueError):
    """Graph content violates a structural invariant."""


@dataclass(frozen=True)
class AttributedGraph:
    """Undirected attributed graph with labels and node splits.

    Parameters
    ----------
    edges : (E, 2) int array
        Each undirected edge once, ``u < v``, sorted lexicographically.
    features : (N, D) float64 array
    labels : (N,) int array
        Class ids in ``[0, C)``.
    labeled_set, target_set : int arrays
        Disjoint, sorted node-index sets.
    """

    edges: np.ndarray
    features: np.ndarray
    labels: np.ndarray
    labeled_set: np.ndarray
    target_set: np.ndarray

    def __post_init__(self):
        edges = np.asarray(self.edges, dtype=np.int64).reshape(-1, 2)
        features = np.asarray(self.features, dtype=np.float64)
        labels = np.asarray(self.labels, dtype=np.int64)
        labeled = np.asarray(self.labeled_set, dtype=np.int64)
        targets = np.asarray(self.target_set, dtype=np.int64)

        if features.ndim != 2:
            raise GraphValidationError("features must be a 2-d matrix")
        n = features.shape[0]
        if labels.shape != (n,):
            raise GraphValidationError(
                f"labels length {labels.shape} does not match {n} nodes")
        if n == 0:
            raise GraphValidationError("graph has no nodes")
        if labels.size and labels.min() < 0:
            raise GraphValidationError("negative class label")
        if edges.size:
            if edges.min() < 0 or edges.max() >= n:
                raise GraphValidationError("edge endpoint out of range")
            if np.any(edges[:, 0] >= edges[:, 1]):
                raise GraphValidationError(
                    "edges must satisfy u < v (no self-loops, stored once)")
            order = np.lexsort((edges[:, 1], edges[:, 0]))
            edges = edges[order]
            if np.any(np.all(edges[1:] == edges[:-1], axis=1)):
                raise GraphValidationError("duplicate edge")
        for name, idx in (("labeled_set", labeled), ("target_set", targets)):
            if idx.size:
                if idx.min() < 0 or idx.max() >= n:
                    raise GraphValidationError(f"{name} index out of range")
                if np.any(np.diff(idx) <= 0):
                    idx = np.unique(idx)
            if name == "labeled_set":
                labeled = idx
            else:
                targets = idx
        if np.intersect1d(labeled, targets).size:
            raise GraphValidationError("labeled_set and target_set overlap")

        for arr in (edges, features, labels, labeled, targets):
            arr.setflags(write=False)
        object.__setattr__(self, "edges", edges)
        object.__setattr__(self, "features", features)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "labeled_set", labeled)
        object.__setattr__(self, "target_set", targets)

    @property
    def n_nodes(self) -> int:
        return self.features.shape[0]

    @property
    def n_edges(self) -> int:
        return self.edges.shape[0]

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    @property
    def n_classes(self) -> int:
        return int(self.labels.max()) + 1

    @property
    def avg_degree(self) -> float:
        """E / N (edges counted once, the reporting convention used here)."""
        return self.n_edges / self.n_nodes

    @cached_property
    def adjacency(self) -> sp.csr_matrix:
        """Symmetric 0/1 CSR adjacency (both directions, zero diagonal)."""
        n = self.n_nodes
        if self.n_edges == 0:
            return sp.csr_matrix((n, n), dtype=np.float64)
        u, v = self.edges[:, 0], self.edges[:, 1]
        data = np.ones(2 * self.n_edges, dtype=np.float64)
        rows = np.concatenate([u, v])
        cols = np.concatenate([v, u])
        return sp.csr_matrix((data, (rows, cols)), shape=(n, n))

    @cached_property
    def degrees(self) -> np.ndarray:
        """Per-node degree, self-loops excluded (none are stored)."""
        return np.asarray(self.adjacency.sum(axis=1)).ravel()

    def neighbors(self, u: int) -> np.ndarray:
        """Sorted neighbor ids of ``u``."""
        a = self.adjacency
        return a.indices[a.indptr[u]:a.indptr[u + 1]]

    def iter_directed_edges(self):
        """Yield every stored edge in both directions."""
        for u, v in self.edges:
            yield int(u), int(v)
            yield int(v), int(u)

    @cached_property
    def feature_range(self) -> np.ndarray:
        """(D, 2) per-dimension ``[min, max]`` over the clean nodes."""
        rng = np.stack([self.features.min(axis=0),
                        self.features.max(axis=0)], axis=1)
        rng.setflags(write=False)
        return rng

    @cached_property
    def fingerprint(self) -> str:
        """Content hash used to tie models and reports to a graph."""
        h = hashlib.sha256()
        h.update(np.int64(self.n_nodes).tobytes())
        h.update(self.edges.tobytes())
        h.update(self.features.tobytes())
        h.update(self.labels.tobytes())
        h.update(self.labeled_set.tobytes())
        h.update(self.target_set.tobytes())
        return h.hexdigest()[:16]


@dataclass(frozen=True)
class NormalizedAdjacency:
    """Self-loop-augmented symmetric normalization D̃^{-1/2}(A+I)D̃^{-1/2}."""

    matrix: sp.csr_matrix
    degrees: np.ndarray  # d̃_u = d_u + 1, strictly positive


def normalize_adjacency(g: AttributedGraph) -> NormalizedAdjacency:
    """Return the normalized adjacency with self-loops added.

    Every nonzero entry equals ``1/sqrt(d̃_u d̃_v)`` where ``d̃ = d + 1``.
    """
    n = g.n_nodes
    d_tilde = g.degrees + 1.0
    inv_sqrt = 1.0 / np.sqrt(d_tilde)
    a_tilde = g.adjacency + sp.identity(n, dtype=np.float64, format="csr")
    mat = a_tilde.multiply(inv_sqrt[:, None]).multiply(inv_sqrt[None, :])
    return NormalizedAdjacency(matrix=mat.tocsr(), degrees=d_tilde)


def clamp_features(x: np.ndarray, feature_range: np.ndarray) -> np.ndarray:
    """Clamp each column of ``x`` into its ``[min, max]`` range."""
    x = np.asarray(x, dtype=np.float64)
    feature_range = np.asarray(feature_range, dtype=np.float64)
    if feature_range.shape != (x.shape[-1], 2):
        raise GraphValidationError(
            f"range shape {feature_range.shape} does not match "
            f"feature width {x.shape[-1]}")
    return np.clip(x, feature_range[:, 0], feature_range[:, 1])


def largest_connected_component(g: AttributedGraph) -> AttributedGraph:
    """Induced subgraph on the largest component, nodes reindexed.

    Retained nodes keep their ascending original-id order; the splits are
    restricted to retained nodes and remapped.
    """
    n_comp, comp = connected_components(g.adjacency, directed=False)
    sizes = np.bincount(comp, minlength=n_comp)
    keep = np.flatnonzero(comp == int(np.argmax(sizes)))  # ascending ids
    new_id = np.full(g.n_nodes, -1, dtype=np.int64)
    new_id[keep] = np.arange(keep.size)

    mask = np.isin(g.edges[:, 0], keep) & np.isin(g.edges[:, 1], keep)
    edges = new_id[g.edges[mask]]
    labeled = new_id[g.labeled_set[np.isin(g.labeled_set, keep)]]
    targets = new_id[g.target_set[np.isin(g.target_set, keep)]]
    return AttributedGraph(
        edges=edges,
        features=g.features[keep].copy(),
        labels=g.labels[keep].copy(),
        labeled_set=labeled,
        target_set=targets,
    )


def _read_csv_rows(path, expect_header):
    with open(path, newline="") as f:
        reader = csv.reader(f)
        rows = list(reader)
    if expect_header is not None:
        if not rows or [c.strip() for c in rows[0]] != expect_header:
            raise GraphFormatError(
                f"{path}: line 1: expected header {','.join(expect_header)}")
        return rows[1:], 2
    return rows, 1


def load_graph(edges_path, features_path, labels_path,
               splits_path) -> AttributedGraph:
    """Load a graph from the four declared files.

    Symmetrizes and deduplicates the edge list and drops self-loops (with a
    warning). Raises :class:`GraphFormatError` naming the offending line on
    malformed input.
    """
    rows, start = _read_csv_rows(features_path, None)
    feats = []
    width = None
    for i, row in enumerate(rows):
        if not row:
            continue
        try:
            vals = [float(c) for c in row]
        except ValueError:
            raise GraphFormatError(
                f"{features_path}: line {i + start}: non-numeric feature")
        if width is None:
            width = len(vals)
        elif len(vals) != width:
            raise GraphFormatError(
                f"{features_path}: line {i + start}: expected {width} "
                f"values, got {len(vals)}")
        feats.append(vals)
    if not feats:
        raise GraphFormatError(f"{features_path}: no feature rows")
    features = np.array(feats, dtype=np.float64)
    n = features.shape[0]

    rows, start = _read_csv_rows(labels_path, ["node", "label"])
    labels = np.full(n, -1, dtype=np.int64)
    for i, row in enumerate(rows):
        if not row:
            continue
        try:
            node, lab = int(row[0]), int(row[1])
        except (ValueError, IndexError):
            raise GraphFormatError(
                f"{labels_path}: line {i + start}: expected 'node,label' ints")
        if not 0 <= node < n:
            raise GraphFormatError(
                f"{labels_path}: line {i + start}: node {node} out of range")
        labels[node] = lab
    if np.any(labels < 0):
        missing = int(np.flatnonzero(labels < 0)[0])
        raise GraphValidationError(f"node {missing} has no label")

    rows, start = _read_csv_rows(edges_path, ["src", "dst"])
    raw = []
    n_self = 0
    for i, row in enumerate(rows):
        if not row:
            continue
        try:
            u, v = int(row[0]), int(row[1])
        except (ValueError, IndexError):
            raise GraphFormatError(
                f"{edges_path}: line {i + start}: expected 'src,dst' ints")
        if not (0 <= u < n and 0 <= v < n):
            raise GraphFormatError(
                f"{edges_path}: line {i + start}: endpoint out of range")
        if u == v:
            n_self += 1
            continue
        raw.append((min(u, v), max(u, v)))
    if n_self:
        warnings.warn(f"{edges_path}: dropped {n_self} self-loop(s)")
    edges = (np.unique(np.array(raw, dtype=np.int64), axis=0)
             if raw else np.empty((0, 2), dtype=np.int64))

    with open(splits_path) as f:
        try:
            splits = json.load(f)
        except json.JSONDecodeError as e:
            raise GraphFormatError(f"{splits_path}: {e}")
    for key in ("labeled", "targets"):
        if key not in splits:
            raise GraphFormatError(f"{splits_path}: missing key '{key}'")

    return AttributedGraph(
        edges=edges,
        features=features,
        labels=labels,
        labeled_set=np.array(sorted(splits["labeled"]), dtype=np.int64),
        target_set=np.array(sorted(splits["targets"]), dtype=np.int64),
    )


def save_graph(g: AttributedGraph, edges_path, features_path, labels_path,
               splits_path) -> None:
    """Write ``g`` in the exact formats accepted by :func:`load_graph`.

    Features are written with ``repr`` so float64 values round-trip
    bit-exactly.
    """
    with open(edges_path, "w", newline="") as f:
        f.write("src,dst\n")
        for u, v in g.edges:
            f.write(f"{u},{v}\n")
    with open(features_path, "w", newline="") as f:
        for row in g.features:
            f.write(",".join(repr(x) for x in row) + "\n")
    with open(labels_path, "w", newline="") as f:
        f.write("node,label\n")
        for u, lab in enumerate(g.labels):
            f.write(f"{u},{lab}\n")
    with open(splits_path, "w") as f:
        json.dump({"labeled": [int(i) for i in g.labeled_set],
                   "targets": [int(i) for i in g.target_set]},
                  f, sort_keys=True, indent=2)
        f.write("\n")


GRAPH_FILES = ("edges.csv", "features.csv", "labels.csv", "splits.json")


def load_graph_dir(d) -> AttributedGraph:
    d = Path(d)
    return load_graph(*(d / name for name in GRAPH_FILES))


def save_graph_dir(g: AttributedGraph, d) -> None:
    d = Path(d)
    d.mkdir(parents=True, exist_ok=True)
    save_graph(g, *(d / name for name in GRAPH_FILES))


def generate_synthetic(n: int, c: int, d: int, p_in: float, p_out: float,
                       class_sep: float, seed: int,
                       labeled_frac: float = 0.3,
                       target_frac: float = 0.1) -> AttributedGraph:
    """Planted-partition graph with Gaussian class features.

    ``c`` near-equal blocks; intra-block edge probability ``p_in``,
    inter-block ``p_out``. Node features are drawn per class as
    ``class_sep * e_class`` (scaled standard basis vector) plus unit-variance
    Gaussian noise. The labeled / target splits are sampled disjointly after
    LCC extraction, with every class guaranteed at least one labeled node.
    Deterministic under ``seed``; returns the LCC of the sample.
    """
    if not (0 <= p_out < p_in <= 1):
        raise GraphValidationError("require 0 <= p_out < p_in <= 1")
    if class_sep < 0:
        raise GraphValidationError("class_sep must be >= 0")
    if c < 1 or n < c:
        raise GraphValidationError("require 1 <= c <= n")
    if d < c:
        raise GraphValidationError(
            "feature dimension must be >= number of classes "
            "(class means are scaled standard basis vectors)")
    if not (0 < labeled_frac < 1 and 0 < target_frac < 1
            and labeled_frac + target_frac < 1):
        raise GraphValidationError("split fractions out of range")

    rng = np.random.default_rng(seed)
    sizes = np.full(c, n // c, dtype=np.int64)
    sizes[:n % c] += 1
    labels = np.repeat(np.arange(c), sizes)

    iu, ju = np.triu_indices(n, k=1)
    p = np.where(labels[iu] == labels[ju], p_in, p_out)
    keep = rng.random(iu.size) < p
    edges = np.column_stack([iu[keep], ju[keep]]).astype(np.int64)

    means = class_sep * np.eye(c, d)
    features = means[labels] + rng.standard_normal((n, d))

    full = AttributedGraph(
        edges=edges, features=features, labels=labels,
        labeled_set=np.empty(0, dtype=np.int64),
        target_set=np.empty(0, dtype=np.int64))
    lcc = largest_connected_component(full)

    m = lcc.n_nodes
    order = rng.permutation(m)
    n_lab = max(int(np.ceil(labeled_frac * m)), lcc.n_classes)
    labeled = list(order[:n_lab])
    rest = list(order[n_lab:])
    # guarantee every surviving class at least one labeled node
    present = set(lcc.labels[labeled].tolist())
    for cls in range(lcc.n_classes):
        if cls in present or not np.any(lcc.labels == cls):
            continue
        for j, v in enumerate(rest):
            if lcc.labels[v] == cls:
                labeled.append(rest.pop(j))
                present.add(cls)
                break
    n_tgt = max(int(np.ceil(target_frac * m)), 1)
    targets = rest[:n_tgt]

    return AttributedGraph(
        edges=lcc.edges, features=lcc.features, labels=lcc.labels,
        labeled_set=np.array(sorted(int(i) for i in labeled), dtype=np.int64),
        target_set=np.array(sorted(int(i) for i in targets), dtype=np.int64))
