"""Single-edge graph injection attack engine and baselines.

The attack never edits original nodes or edges: it appends injected rows to
the feature matrix and one attachment edge per injected node, then
optimizes the feature generator against a pruning-aware surrogate with a
similarity-regularized objective

    loss = -sum_CE(targets) - alpha * sum_i sim(x_injected_i, x_anchor_i).

Generator parameters (not the injected features directly) are the
optimization variables; features are re-synthesized each iteration and
projected into the clean feature range. Two baselines share the same
skeleton: random in-range features, and a multi-edge variant with the
similarity term disabled (the conventional-injection comparator).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace
from functools import cached_property
from typing import NamedTuple

import numpy as np

from .graph import AttributedGraph
from .generator import init_generator, synthesize, generator_gradient
from .sampling import SampledNeighborhood, sample_neighborhood
from .surrogate import (SurrogateModel, cross_entropy_rows, forward_logits,
                        predict, propagation_operator, softmax)

ANCHOR_RULES = ("target-self", "best-gradient")
LABEL_SOURCES = ("ground-truth", "predicted")


class AttackDivergenceError(RuntimeError):
    def __init__(self, message, trace):
        super().__init__(message)
        self.trace = trace


@dataclass(frozen=True)
class AttackConfig:
    """Knobs for one attack run; validated on construction."""

    alpha: float = 1.0
    epsilon: float = 0.1
    k_hops: int = 2
    fanout: int = 10
    seed: int = 0
    iterations: int = 200
    step_size: float = 0.05
    perturbation_rate: float = 0.05
    anchor_rule: str = "target-self"
    label_source: str = "ground-truth"

    def __post_init__(self):
        if self.alpha < 0:
            raise ValueError("alpha must be >= 0")
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if self.step_size < 0:
            raise ValueError("step_size must be >= 0")
        if not 0 < self.perturbation_rate <= 1:
            raise ValueError("perturbation_rate must lie in (0, 1]")
        if self.anchor_rule not in ANCHOR_RULES:
            raise ValueError(f"unknown anchor rule {self.anchor_rule!r}")
        if self.label_source not in LABEL_SOURCES:
            raise ValueError(f"unknown label source {self.label_source!r}")


@dataclass(frozen=True)
class InjectionPlan:
    """Injected features plus per-node anchor attachments.

    ``anchors[i]`` lists the original-node ids injected node ``i`` attaches
    to; single-edge plans have exactly one anchor per node.
    """

    features: np.ndarray
    anchors: tuple
    assigned_targets: np.ndarray

    def __post_init__(self):
        feats = np.asarray(self.features, dtype=np.float64)
        anchors = tuple(tuple(int(a) for a in row) for row in self.anchors)
        assigned = np.asarray(self.assigned_targets, dtype=np.int64)
        if feats.ndim != 2 or len(anchors) != feats.shape[0]:
            raise ValueError("one anchor list per injected feature row")
        if assigned.shape != (feats.shape[0],):
            raise ValueError("one assigned target per injected node")
        for row in anchors:
            if len(row) == 0:
                raise ValueError("every injected node needs >= 1 anchor")
            if len(set(row)) != len(row):
                raise ValueError("duplicate anchor for one injected node")
        feats.setflags(write=False)
        assigned.setflags(write=False)
        object.__setattr__(self, "features", feats)
        object.__setattr__(self, "anchors", anchors)
        object.__setattr__(self, "assigned_targets", assigned)

    @property
    def n_injected(self) -> int:
        return self.features.shape[0]

    @property
    def n_new_edges(self) -> int:
        return sum(len(row) for row in self.anchors)

    @property
    def is_single_edge(self) -> bool:
        return all(len(row) == 1 for row in self.anchors)

    @property
    def anchor_map(self) -> np.ndarray:
        """j(i) for single-edge plans."""
        if not self.is_single_edge:
            raise ValueError("anchor_map defined only for single-edge plans")
        return np.array([row[0] for row in self.anchors], dtype=np.int64)


@dataclass(frozen=True)
class AttackedGraph:
    """Clean base graph plus an injection plan; composition is derived.

    Injected node ``i`` gets id ``base.n_nodes + i``. Original adjacency
    and features are never modified (injected-injected edges cannot occur
    by construction).
    """

    base: AttributedGraph
    plan: InjectionPlan

    def __post_init__(self):
        n = self.base.n_nodes
        p = self.plan
        if p.features.shape[1] != self.base.n_features:
            raise ValueError("injected feature width mismatch")
        for row in p.anchors:
            for a in row:
                if not 0 <= a < n:
                    raise ValueError(f"anchor {a} is not an original node")
        lo = self.base.feature_range[:, 0]
        hi = self.base.feature_range[:, 1]
        if np.any(p.features < lo) or np.any(p.features > hi):
            raise ValueError("injected features leave the clean range")

    @property
    def n_injected(self) -> int:
        return self.plan.n_injected

    @cached_property
    def composed(self) -> AttributedGraph:
        """The attacked graph G' = (A', X') as a regular graph view.

        Injected nodes carry placeholder label 0 and never enter the
        labeled or target sets.
        """
        n = self.base.n_nodes
        new_edges = np.array(
            [(a, n + i) for i, row in enumerate(self.plan.anchors)
             for a in row], dtype=np.int64).reshape(-1, 2)
        return AttributedGraph(
            edges=np.vstack([self.base.edges, new_edges]),
            features=np.vstack([self.base.features, self.plan.features]),
            labels=np.concatenate(
                [self.base.labels,
                 np.zeros(self.plan.n_injected, dtype=np.int64)]),
            labeled_set=self.base.labeled_set,
            target_set=self.base.target_set,
        )

    def injected_edges(self) -> np.ndarray:
        n = self.base.n_nodes
        return np.array(
            [(a, n + i) for i, row in enumerate(self.plan.anchors)
             for a in row], dtype=np.int64).reshape(-1, 2)


class AttackResult(NamedTuple):
    attacked: AttackedGraph
    trace: list


def plan_injections(g: AttributedGraph, cfg: AttackConfig):
    """Injection count and round-robin target assignment.

    N_I = ceil(perturbation_rate * N); injected nodes cycle through the
    target set in ascending id order.
    """
    if g.target_set.size == 0:
        raise ValueError("empty target set")
    n_injected = math.ceil(cfg.perturbation_rate * g.n_nodes)
    assigned = g.target_set[np.arange(n_injected) % g.target_set.size]
    return assigned, n_injected


def resolve_target_labels(g: AttributedGraph, model: SurrogateModel,
                          cfg: AttackConfig) -> np.ndarray:
    """Labels the attacker optimizes against (clean-graph view)."""
    if cfg.label_source == "ground-truth":
        return g.labels[g.target_set]
    return predict(model, g, g.target_set)


def anchor_gradient_scores(g: AttributedGraph, model: SurrogateModel,
                           candidates: np.ndarray,
                           target_labels: np.ndarray) -> np.ndarray:
    """‖dL_tgt/dX_v‖ per candidate v under the linear surrogate."""
    if model.variant == "gcn2":
        raise ValueError("gradient anchor scoring needs a linear surrogate")
    targets = g.target_set
    m = propagation_operator(model, g)
    logits = m @ (m @ g.features) @ model.weights[0]
    grad_h = softmax(logits[targets])
    grad_h[np.arange(targets.size), target_labels] -= 1.0
    s_rows = np.asarray((m[targets] @ m)[:, candidates].toarray())
    per_node = s_rows.T @ (grad_h @ model.weights[0].T)
    return np.linalg.norm(per_node, axis=1)


def select_anchor(g: AttributedGraph, nb: SampledNeighborhood,
                  model: SurrogateModel, assigned_target: int,
                  rule: str, target_labels=None, n_anchors: int = 1):
    """Anchor id(s) for one injected node.

    ``target-self`` returns the assigned target. ``best-gradient`` scans
    V_s^1 ∪ V_t for the highest target-loss gradient norm (ties toward the
    smaller id) and returns the top ``n_anchors`` candidates.
    """
    if rule == "target-self":
        return (int(assigned_target),)
    candidates = np.union1d(nb.layers[min(1, nb.depth)], g.target_set)
    if candidates.size == 0:
        raise ValueError("empty anchor candidate set")
    if target_labels is None:
        target_labels = g.labels[g.target_set]
    scores = anchor_gradient_scores(g, model, candidates, target_labels)
    take = min(n_anchors, candidates.size)
    # stable top-k: by descending score, then ascending id
    order = np.lexsort((candidates, -scores))
    return tuple(int(candidates[i]) for i in order[:take])


def _similarity_terms(plan: InjectionPlan, base_features: np.ndarray):
    """Per-injected-node mean anchor similarity and its feature gradient."""
    n_i, d = plan.features.shape
    sims = np.zeros(n_i)
    grads = np.zeros((n_i, d))
    for i, row in enumerate(plan.anchors):
        x = plan.features[i]
        nx = np.linalg.norm(x)
        acc_s, acc_g = 0.0, np.zeros(d)
        for a in row:
            y = base_features[a]
            ny = np.linalg.norm(y)
            if nx == 0.0 or ny == 0.0:
                continue
            s = float(x @ y / (nx * ny))
            acc_s += s
            acc_g += (y / ny - s * x / nx) / nx
        sims[i] = acc_s / len(row)
        grads[i] = acc_g / len(row)
    return sims, grads


def attack_loss_parts(view: AttributedGraph, plan: InjectionPlan,
                      model: SurrogateModel, alpha: float,
                      targets: np.ndarray, target_labels: np.ndarray,
                      base_features: np.ndarray):
    """(loss, target CE sum, mean-similarity sum) on an arbitrary view.

    ``view`` may be the composed attacked graph or a defended copy of it;
    similarity always reads the clean anchor features.
    """
    logits = forward_logits(model, view)
    l_tgt = float(np.sum(cross_entropy_rows(logits[targets], target_labels)))
    sims, _ = _similarity_terms(plan, base_features)
    return -l_tgt - alpha * float(sims.sum()), l_tgt, float(sims.sum())


def attack_loss(attacked: AttackedGraph, model: SurrogateModel,
                cfg: AttackConfig) -> float:
    """Eq-style objective -L_tgt - alpha * sum_i sim(x_i, anchor_i)."""
    g = attacked.base
    target_labels = resolve_target_labels(g, model, cfg)
    loss, _, _ = attack_loss_parts(attacked.composed, attacked.plan, model,
                                   cfg.alpha, g.target_set, target_labels,
                                   g.features)
    return loss


def _loss_gradient_wrt_injected(attacked: AttackedGraph,
                                model: SurrogateModel, alpha: float,
                                targets: np.ndarray,
                                target_labels: np.ndarray) -> np.ndarray:
    """Exact d(attack loss)/dX_I via the linear-surrogate Jacobian.

    The pruning mask is treated as locally constant: its entries are a
    step function of the features, so away from the threshold the exact
    derivative of the masked operator contributes nothing.
    """
    if model.variant == "gcn2":
        raise ValueError("attack gradient requires a linear surrogate")
    view = attacked.composed
    n = attacked.base.n_nodes
    n_i = attacked.n_injected
    m = propagation_operator(model, view)
    w = model.weights[0]
    logits = m @ (m @ view.features) @ w
    grad_h = softmax(logits[targets])
    grad_h[np.arange(targets.size), target_labels] -= 1.0
    s_ti = np.asarray((m[targets] @ m)[:, n:n + n_i].toarray())
    d_ltgt = s_ti.T @ (grad_h @ w.T)
    _, d_sim = _similarity_terms(attacked.plan, attacked.base.features)
    return -d_ltgt - alpha * d_sim


def attack_gradient(attacked: AttackedGraph, model: SurrogateModel,
                    cfg: AttackConfig) -> np.ndarray:
    """Gradient of :func:`attack_loss` w.r.t. the injected features."""
    g = attacked.base
    target_labels = resolve_target_labels(g, model, cfg)
    return _loss_gradient_wrt_injected(attacked, model, cfg.alpha,
                                       g.target_set, target_labels)


def _build_anchors(g, nb, model, assigned, rule, target_labels,
                   edges_per_node):
    if rule == "target-self":
        return tuple((int(t),) for t in assigned)
    top = select_anchor(g, nb, model, int(assigned[0]), "best-gradient",
                        target_labels, n_anchors=edges_per_node)
    return tuple(top for _ in assigned)


def _optimize(g, model, cfg, alpha, anchor_rule,
              edges_per_node) -> AttackResult:
    """Shared loop: synthesize -> clamp -> compose -> evaluate -> update."""
    assigned, _ = plan_injections(g, cfg)
    targets = g.target_set
    target_labels = resolve_target_labels(g, model, cfg)
    nb = sample_neighborhood(g, targets, cfg.k_hops, cfg.fanout, cfg.seed)
    anchors = _build_anchors(g, nb, model, assigned, anchor_rule,
                             target_labels, edges_per_node)
    gen = init_generator(nb.depth, g.n_features, cfg.seed)
    pos = np.searchsorted(nb.layers[0], assigned)

    trace = []
    attacked = None
    for _ in range(cfg.iterations):
        x0 = synthesize(gen, nb, g)
        plan = InjectionPlan(features=x0[pos], anchors=anchors,
                             assigned_targets=assigned)
        attacked = AttackedGraph(base=g, plan=plan)
        loss, _, _ = attack_loss_parts(attacked.composed, plan, model, alpha,
                                       targets, target_labels, g.features)
        if not np.isfinite(loss):
            raise AttackDivergenceError(
                f"non-finite attack loss at iteration {len(trace)}", trace)
        trace.append(loss)
        grad_xi = _loss_gradient_wrt_injected(attacked, model, alpha,
                                              targets, target_labels)
        upstream = np.zeros((nb.sizes[0], g.n_features))
        np.add.at(upstream, pos, grad_xi)
        w_grads, b_grad = generator_gradient(gen, nb, upstream)
        for w, dw in zip(gen.weights, w_grads):
            w -= cfg.step_size * dw
        gen.bias -= cfg.step_size * b_grad
    return AttackResult(attacked=attacked, trace=trace)


def run_segia(g: AttributedGraph, model: SurrogateModel,
              cfg: AttackConfig) -> AttackResult:
    """Full single-edge attack; returns the attacked graph and loss trace."""
    return _optimize(g, model, cfg, alpha=cfg.alpha,
                     anchor_rule=cfg.anchor_rule, edges_per_node=1)


def run_baseline_random(g: AttributedGraph, model: SurrogateModel,
                        cfg: AttackConfig) -> AttackResult:
    """Control arm: same single-edge skeleton, uniform in-range features."""
    assigned, n_injected = plan_injections(g, cfg)
    rng = np.random.default_rng(cfg.seed)
    lo = g.feature_range[:, 0]
    hi = g.feature_range[:, 1]
    feats = rng.uniform(lo, hi, size=(n_injected, g.n_features))
    plan = InjectionPlan(features=feats,
                         anchors=tuple((int(t),) for t in assigned),
                         assigned_targets=assigned)
    return AttackResult(attacked=AttackedGraph(base=g, plan=plan), trace=[])


def run_baseline_multiedge(g: AttributedGraph, model: SurrogateModel,
                           cfg: AttackConfig,
                           edges_per_node: int) -> AttackResult:
    """Conventional-injection comparator: no similarity term, several
    highest-gradient anchors per injected node."""
    if edges_per_node < 1:
        raise ValueError("edges_per_node must be >= 1")
    return _optimize(g, model, cfg, alpha=0.0, anchor_rule="best-gradient",
                     edges_per_node=edges_per_node)


def save_plan(result: AttackResult, cfg: AttackConfig, path) -> None:
    """Attack output file: injected features, anchors, config, trace."""
    plan = result.attacked.plan
    payload = {
        "config": {k: getattr(cfg, k) for k in (
            "alpha", "epsilon", "k_hops", "fanout", "seed", "iterations",
            "step_size", "perturbation_rate", "anchor_rule", "label_source")},
        "n_injected": plan.n_injected,
        "n_new_edges": plan.n_new_edges,
        "injected_features": plan.features.tolist(),
        "anchors": [list(row) for row in plan.anchors],
        "assigned_targets": plan.assigned_targets.tolist(),
        "trace": list(result.trace),
        "base_fingerprint": result.attacked.base.fingerprint,
    }
    with open(path, "w") as f:
        json.dump(payload, f, sort_keys=True)
        f.write("\n")


def load_plan(path, g: AttributedGraph) -> AttackedGraph:
    with open(path) as f:
        payload = json.load(f)
    plan = InjectionPlan(
        features=np.array(payload["injected_features"], dtype=np.float64),
        anchors=tuple(tuple(row) for row in payload["anchors"]),
        assigned_targets=np.array(payload["assigned_targets"],
                                  dtype=np.int64))
    return AttackedGraph(base=g, plan=plan)
