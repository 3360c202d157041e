"""Injected-feature synthesis by reverse graph convolution.

Starting from the clean features of the outermost sampled layer, the
generator propagates inward: ``X^{k-1} = ReLU(M̃^k X^k W^k)`` for
``k = K .. 1``. ReLU outputs are nonnegative while real datasets span
negative ranges, so a learnable per-dimension shift is added after the
final layer before the result is clamped into the clean feature range.

The forward pass caches every layer activation so the weight gradients can
be accumulated exactly in reverse; ``generator_gradient`` refuses to run
without a preceding ``synthesize`` on the same instance.
"""

from __future__ import annotations

import json

import numpy as np

from .graph import AttributedGraph, clamp_features
from .sampling import SampledNeighborhood


class GeneratorStateError(RuntimeError):
    """Backward called without a cached forward pass."""


class ReverseConvGenerator:
    """K square D×D layer transforms plus an output shift.

    Mutable on purpose: the attack loop updates ``weights`` and ``bias`` in
    place between iterations. Forward/backward share a private activation
    cache, so a single instance is not thread-safe.
    """

    def __init__(self, weights, bias, seed: int):
        self.weights = [np.array(w, dtype=np.float64) for w in weights]
        d = self.weights[0].shape[0]
        for w in self.weights:
            if w.shape != (d, d):
                raise ValueError("every layer weight must be square D x D")
            if not np.all(np.isfinite(w)):
                raise ValueError("non-finite generator weight")
        self.bias = np.array(bias, dtype=np.float64).reshape(d)
        self.seed = int(seed)
        self._cache = None

    @property
    def depth(self) -> int:
        return len(self.weights)

    @property
    def n_features(self) -> int:
        return self.weights[0].shape[0]


def init_generator(k_hops: int, n_features: int,
                   seed: int) -> ReverseConvGenerator:
    """Uniform init in [-sqrt(6/2D), +sqrt(6/2D)] per layer; zero shift."""
    if k_hops < 1 or n_features < 1:
        raise ValueError("require k_hops >= 1 and n_features >= 1")
    rng = np.random.default_rng(seed)
    bound = np.sqrt(6.0 / (2.0 * n_features))
    weights = [rng.uniform(-bound, bound, size=(n_features, n_features))
               for _ in range(k_hops)]
    return ReverseConvGenerator(weights=weights,
                                bias=np.zeros(n_features), seed=seed)


def synthesize(gen: ReverseConvGenerator, nb: SampledNeighborhood,
               g: AttributedGraph) -> np.ndarray:
    """Run the reverse convolution; rows align with the target layer.

    Returns the synthesized features clamped into ``g.feature_range``.
    Layer inputs, ReLU masks, and the clamp mask are cached for the
    backward pass.
    """
    if gen.depth != nb.depth:
        raise ValueError(
            f"generator depth {gen.depth} != sample depth {nb.depth}")
    if gen.n_features != g.n_features:
        raise ValueError("feature dimension mismatch")

    x = g.features[nb.layers[-1]]
    inputs, relu_masks = [], []
    for k in range(nb.depth, 0, -1):
        mx = nb.normalized[k - 1] @ x
        z = mx @ gen.weights[k - 1]
        inputs.append(mx)
        relu_masks.append(z > 0)
        x = np.maximum(z, 0.0)
    raw = x + gen.bias
    out = clamp_features(raw, g.feature_range)
    # pass-through where the clamp is inactive, zero where it clipped
    clamp_mask = (raw >= g.feature_range[:, 0]) & (raw <= g.feature_range[:, 1])
    gen._cache = {"inputs": inputs, "relu_masks": relu_masks,
                  "clamp_mask": clamp_mask}
    return out


def generator_gradient(gen: ReverseConvGenerator,
                       nb: SampledNeighborhood, upstream: np.ndarray):
    """Exact gradients of the synthesis w.r.t. each W^k and the shift.

    ``upstream`` is dLoss/dOutput for the clamped output of the preceding
    ``synthesize`` call. Returns ``(weight_grads, bias_grad)`` with
    ``weight_grads[k-1]`` matching ``gen.weights[k-1]``.
    """
    if gen._cache is None:
        raise GeneratorStateError("no cached forward pass; call synthesize")
    cache = gen._cache
    upstream = np.asarray(upstream, dtype=np.float64) * cache["clamp_mask"]
    bias_grad = upstream.sum(axis=0)

    weight_grads = [None] * gen.depth
    grad_x = upstream
    # forward ran k = K..1; inputs/relu_masks are stored in that order
    for k in range(1, gen.depth + 1):
        mx = cache["inputs"][gen.depth - k]
        dz = grad_x * cache["relu_masks"][gen.depth - k]
        weight_grads[k - 1] = mx.T @ dz
        if k < gen.depth:
            grad_mx = dz @ gen.weights[k - 1].T
            grad_x = nb.normalized[k - 1].T @ grad_mx
    return weight_grads, bias_grad


def save_generator(gen: ReverseConvGenerator, path) -> None:
    payload = {
        "depth": gen.depth,
        "n_features": gen.n_features,
        "seed": gen.seed,
        "weights": [w.ravel().tolist() for w in gen.weights],
        "bias": gen.bias.tolist(),
    }
    with open(path, "w") as f:
        json.dump(payload, f, sort_keys=True)
        f.write("\n")


def load_generator(path) -> ReverseConvGenerator:
    with open(path) as f:
        payload = json.load(f)
    d = payload["n_features"]
    weights = [np.array(flat, dtype=np.float64).reshape(d, d)
               for flat in payload["weights"]]
    return ReverseConvGenerator(weights=weights, bias=payload["bias"],
                                seed=payload["seed"])
