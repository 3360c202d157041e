"""Layered K-hop neighborhood sampling around a target set.

Layer 0 is the target set; each subsequent layer is the union of the
previous layer with up to ``m`` uniformly sampled neighbors per frontier
node. Between consecutive layers we keep the full 0/1 connectivity
restriction of the adjacency (rows: previous layer, columns: next layer)
plus its row-normalized copy, which the reverse-convolution feature
generator consumes.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sp

from .graph import AttributedGraph

_SATURATE = np.iinfo(np.int64).max


@dataclass(frozen=True)
class SampledNeighborhood:
    """Layered node sets and inter-layer connectivity matrices.

    ``layers[k]`` is ascending; ``layers[0]`` is the target set and
    ``layers[k-1] ⊆ layers[k]``. ``inter_layer[k-1]`` is the 0/1 matrix
    M^k of shape ``(|layers[k-1]|, |layers[k]|)``; ``normalized[k-1]`` is
    its row-normalized copy (zero rows stay zero).
    """

    layers: tuple
    inter_layer: tuple
    normalized: tuple
    fanout: int
    seed: int

    @property
    def depth(self) -> int:
        return len(self.layers) - 1

    @property
    def sizes(self) -> tuple:
        return tuple(len(layer) for layer in self.layers)

    @cached_property
    def layer_index(self) -> tuple:
        """Per layer, a dict mapping node id -> row position."""
        return tuple({int(v): i for i, v in enumerate(layer)}
                     for layer in self.layers)


def row_normalize(m: sp.spmatrix) -> sp.csr_matrix:
    """Divide each nonzero row by its row sum; zero rows are unchanged."""
    m = sp.csr_matrix(m, dtype=np.float64)
    sums = np.asarray(m.sum(axis=1)).ravel()
    scale = np.divide(1.0, sums, out=np.zeros_like(sums), where=sums != 0)
    return sp.csr_matrix(m.multiply(scale[:, None]))


def sample_neighborhood(g: AttributedGraph, targets, k_hops: int,
                        fanout: int, seed: int) -> SampledNeighborhood:
    """Draw the layered sample V_s^0..V_s^K around ``targets``.

    Each frontier node contributes up to ``fanout`` of its neighbors,
    sampled uniformly without replacement; already-present nodes may be
    re-drawn but add nothing. Deterministic under ``seed``.
    """
    targets = np.unique(np.asarray(targets, dtype=np.int64))
    if targets.size == 0:
        raise ValueError("targets must be nonempty")
    if targets.min() < 0 or targets.max() >= g.n_nodes:
        raise ValueError("target outside graph")
    if k_hops < 1 or fanout < 1:
        raise ValueError("require k_hops >= 1 and fanout >= 1")

    rng = np.random.default_rng(seed)
    layers = [targets]
    for _ in range(k_hops):
        prev = layers[-1]
        drawn = []
        for u in prev:
            nbrs = g.neighbors(int(u))
            if nbrs.size <= fanout:
                drawn.append(nbrs)
            else:
                drawn.append(rng.choice(nbrs, size=fanout, replace=False))
        new = np.union1d(prev, np.concatenate(drawn) if drawn else prev)
        layers.append(new)

    adj = g.adjacency
    inter, normed = [], []
    for k in range(1, len(layers)):
        m = sp.csr_matrix(adj[layers[k - 1]][:, layers[k]])
        m.data[:] = 1.0
        inter.append(m)
        normed.append(row_normalize(m))
    return SampledNeighborhood(layers=tuple(layers), inter_layer=tuple(inter),
                               normalized=tuple(normed), fanout=int(fanout),
                               seed=int(seed))


def sampling_cost_estimate(n_targets: int, fanout: int, k_hops: int) -> int:
    """Planning upper bound |V_t| * m^K (saturates with a warning)."""
    if n_targets < 1 or fanout < 1 or k_hops < 1:
        raise ValueError("all arguments must be >= 1")
    est = int(n_targets) * int(fanout) ** int(k_hops)
    if est > _SATURATE:
        warnings.warn("sampling cost estimate saturated")
        return _SATURATE
    return est


def neighborhood_debug_dump(nb: SampledNeighborhood, path) -> None:
    """JSON dump of layer contents and per-layer matrix nnz counts."""
    payload = {
        "depth": nb.depth,
        "fanout": nb.fanout,
        "seed": nb.seed,
        "layers": [[int(v) for v in layer] for layer in nb.layers],
        "inter_layer_nnz": [int(m.nnz) for m in nb.inter_layer],
        "zero_rows": [int(np.sum(np.asarray(m.sum(axis=1)).ravel() == 0))
                      for m in nb.inter_layer],
    }
    with open(path, "w") as f:
        json.dump(payload, f, sort_keys=True, indent=2)
        f.write("\n")
