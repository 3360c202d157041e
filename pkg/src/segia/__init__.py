"""Single-edge graph injection attacks with a homophily-pruning defense."""

__version__ = "0.1.0"

from .graph import (AttributedGraph, NormalizedAdjacency, clamp_features,
                    generate_synthetic, largest_connected_component,
                    load_graph, load_graph_dir, normalize_adjacency,
                    save_graph, save_graph_dir)
from .surrogate import (PruningMask, SurrogateModel, build_pruning_mask,
                        cosine_sim, forward_logits, init_model,
                        load_checkpoint, loss_on_targets, predict,
                        save_checkpoint, train)
from .sampling import (SampledNeighborhood, row_normalize,
                       sample_neighborhood, sampling_cost_estimate)
from .generator import (ReverseConvGenerator, generator_gradient,
                        init_generator, synthesize)
from .attack import (AttackConfig, AttackedGraph, AttackResult,
                     InjectionPlan, attack_gradient, attack_loss,
                     plan_injections, run_baseline_multiedge,
                     run_baseline_random, run_segia, select_anchor)
from .defense import (DefenseReport, HomophilyProfile, homophily_distance,
                      homophily_profile, misclassification_rate,
                      node_homophily, prune_defense, theorem1_check)

__all__ = [
    "AttributedGraph", "NormalizedAdjacency", "clamp_features",
    "generate_synthetic", "largest_connected_component", "load_graph",
    "load_graph_dir", "normalize_adjacency", "save_graph", "save_graph_dir",
    "PruningMask", "SurrogateModel", "build_pruning_mask", "cosine_sim",
    "forward_logits", "init_model", "load_checkpoint", "loss_on_targets",
    "predict", "save_checkpoint", "train",
    "SampledNeighborhood", "row_normalize", "sample_neighborhood",
    "sampling_cost_estimate",
    "ReverseConvGenerator", "generator_gradient", "init_generator",
    "synthesize",
    "AttackConfig", "AttackedGraph", "AttackResult", "InjectionPlan",
    "attack_gradient", "attack_loss", "plan_injections",
    "run_baseline_multiedge", "run_baseline_random", "run_segia",
    "select_anchor",
    "DefenseReport", "HomophilyProfile", "homophily_distance",
    "homophily_profile", "misclassification_rate", "node_homophily",
    "prune_defense", "theorem1_check",
]
