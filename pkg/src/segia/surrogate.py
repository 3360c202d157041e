"""Linear graph-convolution surrogates and a two-layer GCN victim.

Three variants share one container:

* ``sgc``   — linearized logits ``Â² X W``
* ``prsgc`` — ``(Â ⊙ P)² X W`` where ``P`` is a binary cosine-similarity
  pruning mask over the adjacency support (diagonal fixed to 1)
* ``gcn2``  — ``Â ReLU(Â X W1) W2``

Training is plain full-batch gradient descent on the mean cross-entropy of
the labeled set. All gradients are analytic; ``training_loss_and_grad`` is
the single source used by both the optimizer and the finite-difference
checks.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, replace
from typing import NamedTuple

import numpy as np
import scipy.sparse as sp

from .graph import AttributedGraph, normalize_adjacency

VARIANTS = ("sgc", "prsgc", "gcn2")


class PreconditionError(ValueError):
    pass


class DivergenceError(RuntimeError):
    pass


@dataclass(frozen=True)
class SurrogateModel:
    """Weights plus variant tag; immutable once constructed.

    ``weights`` holds ``(W,)`` for sgc/prsgc and ``(W1, W2)`` for gcn2.
    ``epsilon`` is the pruning threshold (prsgc only). ``trained_on`` is the
    fingerprint of the graph the model was trained on ("" if untrained).
    """

    variant: str
    weights: tuple
    epsilon: float | None = None
    trained_on: str = ""

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}")
        ws = tuple(np.asarray(w, dtype=np.float64) for w in self.weights)
        expected = 2 if self.variant == "gcn2" else 1
        if len(ws) != expected:
            raise ValueError(
                f"{self.variant} expects {expected} weight matrices")
        if self.variant == "gcn2" and ws[0].shape[1] != ws[1].shape[0]:
            raise ValueError("gcn2 weight shapes do not chain")
        if self.variant == "prsgc":
            if self.epsilon is None or not -1.0 <= self.epsilon <= 1.0:
                raise ValueError("prsgc requires epsilon in [-1, 1]")
        for w in ws:
            w.setflags(write=False)
        object.__setattr__(self, "weights", ws)

    @property
    def n_features(self) -> int:
        return self.weights[0].shape[0]

    @property
    def n_classes(self) -> int:
        return self.weights[-1].shape[1]


@dataclass(frozen=True)
class PruningMask:
    """Binary mask on adjacency support ∪ diagonal; symmetric."""

    matrix: sp.csr_matrix
    threshold: float


def cosine_sim(x: np.ndarray, y: np.ndarray) -> float:
    """Cosine similarity in [-1, 1]; zero-norm inputs map to 0."""
    x = np.asarray(x, dtype=np.float64).ravel()
    y = np.asarray(y, dtype=np.float64).ravel()
    if x.shape != y.shape:
        raise ValueError(f"dimension mismatch {x.shape} vs {y.shape}")
    nx, ny = np.linalg.norm(x), np.linalg.norm(y)
    if nx == 0.0 or ny == 0.0:
        return 0.0
    return float(np.clip(x @ y / (nx * ny), -1.0, 1.0))


def pairwise_edge_cosine(features: np.ndarray,
                         edges: np.ndarray) -> np.ndarray:
    """Cosine similarity per edge row (u, v); zero-norm rows give 0."""
    if edges.size == 0:
        return np.empty(0, dtype=np.float64)
    xu = features[edges[:, 0]]
    xv = features[edges[:, 1]]
    nu = np.linalg.norm(xu, axis=1)
    nv = np.linalg.norm(xv, axis=1)
    dot = np.einsum("ij,ij->i", xu, xv)
    denom = nu * nv
    sims = np.zeros(edges.shape[0], dtype=np.float64)
    ok = denom > 0
    sims[ok] = dot[ok] / denom[ok]
    return np.clip(sims, -1.0, 1.0)


def build_pruning_mask(g: AttributedGraph, epsilon: float) -> PruningMask:
    """Mask with ``P[u,v] = 1`` iff ``sim(x_u, x_v) >= epsilon`` on edges.

    Defined only on the adjacency support plus the diagonal (which is
    fixed to 1); non-edges are never unmasked.
    """
    if not -1.0 <= epsilon <= 1.0:
        raise ValueError("epsilon must lie in [-1, 1]")
    n = g.n_nodes
    sims = pairwise_edge_cosine(g.features, g.edges)
    kept = g.edges[sims >= epsilon]
    rows = np.concatenate([kept[:, 0], kept[:, 1], np.arange(n)])
    cols = np.concatenate([kept[:, 1], kept[:, 0], np.arange(n)])
    data = np.ones(rows.size, dtype=np.float64)
    mat = sp.csr_matrix((data, (rows, cols)), shape=(n, n))
    return PruningMask(matrix=mat, threshold=float(epsilon))


def propagation_operator(model: SurrogateModel,
                         g: AttributedGraph) -> sp.csr_matrix:
    """Single-hop operator: Â for sgc/gcn2, Â ⊙ P for prsgc."""
    a_hat = normalize_adjacency(g).matrix
    if model.variant == "prsgc":
        mask = build_pruning_mask(g, model.epsilon).matrix
        return a_hat.multiply(mask).tocsr()
    return a_hat


def _relu(x):
    return np.maximum(x, 0.0)


def forward_logits(model: SurrogateModel, g: AttributedGraph) -> np.ndarray:
    """Pre-softmax logits, N × C (linearized logits for sgc/prsgc)."""
    if model.n_features != g.n_features:
        raise ValueError(
            f"model expects D={model.n_features}, graph has {g.n_features}")
    m = propagation_operator(model, g)
    if model.variant == "gcn2":
        w1, w2 = model.weights
        return m @ _relu(m @ g.features @ w1) @ w2
    return m @ (m @ g.features) @ model.weights[0]


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def cross_entropy_rows(logits: np.ndarray, labels: np.ndarray) -> np.ndarray:
    """Per-row cross-entropy of softmax(logits) against integer labels."""
    z = logits - logits.max(axis=1, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=1))
    return lse - z[np.arange(len(labels)), labels]


def init_model(variant: str, n_features: int, n_classes: int,
               hidden: int = 16, epsilon: float | None = None,
               seed: int = 0) -> SurrogateModel:
    """Untrained model: zero W for sgc/prsgc (convex objective), Glorot
    uniform for gcn2 under ``seed``."""
    if variant == "gcn2":
        rng = np.random.default_rng(seed)
        b1 = np.sqrt(6.0 / (n_features + hidden))
        b2 = np.sqrt(6.0 / (hidden + n_classes))
        weights = (rng.uniform(-b1, b1, size=(n_features, hidden)),
                   rng.uniform(-b2, b2, size=(hidden, n_classes)))
    else:
        weights = (np.zeros((n_features, n_classes)),)
    return SurrogateModel(variant=variant, weights=weights, epsilon=epsilon)


def training_loss_and_grad(model: SurrogateModel, g: AttributedGraph,
                           propagated=None, operator=None):
    """Mean cross-entropy over the labeled set and its weight gradients.

    Returns ``(loss, grads)`` with one gradient per weight matrix. The
    single-hop ``operator`` and, for sgc/prsgc, ``propagated = M² X`` may be
    passed precomputed to skip the sparse products.
    """
    lab = g.labeled_set
    y = g.labels[lab]
    if model.variant == "gcn2":
        m = operator if operator is not None else propagation_operator(model, g)
        w1, w2 = model.weights
        mx = m @ g.features
        h1 = mx @ w1
        a1 = _relu(h1)
        ma1 = m @ a1
        logits = ma1 @ w2
        probs = softmax(logits[lab])
        loss = float(np.mean(cross_entropy_rows(logits[lab], y)))
        d_logits = np.zeros_like(logits)
        d_logits[lab] = probs
        d_logits[lab, y] -= 1.0
        d_logits[lab] /= len(lab)
        d_w2 = ma1.T @ d_logits
        d_a1 = (m @ d_logits) @ w2.T  # m symmetric
        d_h1 = d_a1 * (h1 > 0)
        d_w1 = mx.T @ d_h1
        return loss, (d_w1, d_w2)

    if propagated is None:
        m = propagation_operator(model, g)
        propagated = m @ (m @ g.features)
    f_lab = propagated[lab]
    logits = f_lab @ model.weights[0]
    probs = softmax(logits)
    loss = float(np.mean(cross_entropy_rows(logits, y)))
    d_logits = probs
    d_logits[np.arange(len(lab)), y] -= 1.0
    d_logits /= len(lab)
    return loss, (f_lab.T @ d_logits,)


class TrainResult(NamedTuple):
    model: SurrogateModel
    losses: list  # epoch-start losses plus the post-training loss


def train(model: SurrogateModel, g: AttributedGraph, lr: float = 0.2,
          epochs: int = 300, seed: int = 0) -> TrainResult:
    """Full-batch gradient descent on the labeled cross-entropy.

    Full-batch descent has no stochasticity of its own; ``seed`` is part of
    the interface for symmetry with the other entry points and is unused
    here (gcn2 randomness lives in :func:`init_model`). Raises
    :class:`PreconditionError` if some class has no labeled node and
    :class:`DivergenceError` (naming the epoch) on a non-finite loss.
    """
    del seed
    if g.labeled_set.size == 0:
        raise PreconditionError("labeled_set is empty")
    present = np.unique(g.labels[g.labeled_set])
    missing = np.setdiff1d(np.arange(g.n_classes), present)
    if missing.size:
        raise PreconditionError(
            f"class {int(missing[0])} has no labeled node")
    if model.n_features != g.n_features or model.n_classes < g.n_classes:
        raise ValueError("model shape does not match graph")

    weights = [w.copy() for w in model.weights]
    cur = replace(model, weights=tuple(weights))
    operator = propagation_operator(model, g)
    propagated = None
    if model.variant != "gcn2":
        propagated = operator @ (operator @ g.features)

    losses = []
    for epoch in range(epochs):
        loss, grads = training_loss_and_grad(cur, g, propagated, operator)
        if not np.isfinite(loss):
            raise DivergenceError(f"non-finite loss at epoch {epoch}")
        losses.append(loss)
        weights = [w - lr * dw for w, dw in zip(cur.weights, grads)]
        cur = replace(cur, weights=tuple(weights))
    final_loss, _ = training_loss_and_grad(cur, g, propagated, operator)
    if not np.isfinite(final_loss):
        raise DivergenceError(f"non-finite loss at epoch {epochs}")
    losses.append(final_loss)
    return TrainResult(replace(cur, trained_on=g.fingerprint), losses)


def predict(model: SurrogateModel, g: AttributedGraph,
            nodes: np.ndarray) -> np.ndarray:
    """Argmax class per node; ties break toward the smaller class id."""
    logits = forward_logits(model, g)
    return np.argmax(logits[np.asarray(nodes, dtype=np.int64)], axis=1)


def loss_on_targets(model: SurrogateModel, g: AttributedGraph,
                    targets: np.ndarray) -> float:
    """Sum of cross-entropy over targets with their ground-truth labels."""
    targets = np.asarray(targets, dtype=np.int64)
    if targets.size == 0:
        raise ValueError("empty target set")
    logits = forward_logits(model, g)
    return float(np.sum(cross_entropy_rows(logits[targets],
                                           g.labels[targets])))


def save_checkpoint(model: SurrogateModel, path) -> None:
    """JSON checkpoint: variant, shapes, epsilon, row-major weights."""
    payload = {
        "variant": model.variant,
        "epsilon": model.epsilon,
        "trained_on": model.trained_on,
        "shapes": [list(w.shape) for w in model.weights],
        "weights": [w.ravel().tolist() for w in model.weights],
    }
    with open(path, "w") as f:
        json.dump(payload, f, sort_keys=True)
        f.write("\n")


def load_checkpoint(path) -> SurrogateModel:
    with open(path) as f:
        payload = json.load(f)
    weights = tuple(
        np.array(flat, dtype=np.float64).reshape(shape)
        for flat, shape in zip(payload["weights"], payload["shapes"]))
    return SurrogateModel(variant=payload["variant"], weights=weights,
                          epsilon=payload["epsilon"],
                          trained_on=payload["trained_on"])


def checkpoint_digest(path) -> str:
    with open(path, "rb") as f:
        return hashlib.sha256(f.read()).hexdigest()
