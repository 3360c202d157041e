"""Command-line harness: dataset prep, training, attacks, sweeps, reports.

Every command reads a JSON config (``--config``), with ``--seed``/``--out``
overriding the file values. Outputs are deterministic for a fixed config
and seed: reports embed the resolved config and package version, all JSON
is written with sorted keys, and wall-clock timing goes only to a sidecar
``run.log``. Sub-run seeds are derived by hashing the global seed with the
run coordinates, so sweep cells and seed batches are independent yet
reproducible.
"""

from __future__ import annotations

import argparse
import copy
import csv
import json
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .attack import (AttackConfig, run_baseline_multiedge,
                     run_baseline_random, run_segia, save_plan)
from .defense import (alpha_distance_trend, homophily_distance,
                      homophily_profile, misclassification_rate,
                      prune_defense, theorem1_check)
from .graph import (generate_synthetic, load_graph, load_graph_dir,
                    save_graph_dir)
from .sampling import sampling_cost_estimate
from .surrogate import (init_model, load_checkpoint, save_checkpoint, train)
from .util import mix_seed

METHODS = ("segia", "random", "multiedge")

DEFAULT_ATTACK = {
    "method": "segia",
    "alpha": 1.0,
    "epsilon": 0.1,
    "k_hops": 2,
    "fanout": 10,
    "iterations": 200,
    "step_size": 0.05,
    "perturbation_rate": 0.05,
    "anchor_rule": "target-self",
    "label_source": "ground-truth",
    "edges_per_node": 3,
    "n_seeds": 1,
}

DEFAULT_SURROGATE = {
    "variant": "prsgc",
    "epsilon": 0.1,
    "lr": 0.2,
    "epochs": 300,
    "hidden": 16,
}


class ConfigError(ValueError):
    pass


def load_config(path, overrides) -> dict:
    with open(path) as f:
        cfg = json.load(f)
    if overrides.get("seed") is not None:
        cfg["seed"] = overrides["seed"]
    if overrides.get("out") is not None:
        cfg["out_dir"] = overrides["out"]
    cfg.setdefault("seed", 0)
    if "out_dir" not in cfg:
        raise ConfigError("config needs 'out_dir' (or pass --out)")
    return cfg


def resolve_graph(cfg):
    gcfg = cfg.get("graph")
    if not gcfg:
        raise ConfigError("config needs a 'graph' section")
    if "dir" in gcfg:
        return load_graph_dir(gcfg["dir"])
    if "paths" in gcfg:
        p = gcfg["paths"]
        return load_graph(p["edges"], p["features"], p["labels"],
                          p["splits"])
    if "synthetic" in gcfg:
        s = dict(gcfg["synthetic"])
        s.setdefault("seed", mix_seed(cfg["seed"], "graph"))
        return generate_synthetic(
            n=s["n"], c=s["c"], d=s["d"], p_in=s["p_in"], p_out=s["p_out"],
            class_sep=s["class_sep"], seed=s["seed"],
            labeled_frac=s.get("labeled_frac", 0.3),
            target_frac=s.get("target_frac", 0.1))
    raise ConfigError("graph section needs 'dir', 'paths', or 'synthetic'")


def build_model(section, g, seed):
    """Model from a config section: checkpoint path, or spec to train."""
    if "checkpoint" in section:
        model = load_checkpoint(section["checkpoint"])
        if model.trained_on and model.trained_on != g.fingerprint:
            raise ConfigError(
                "checkpoint was trained on a different graph "
                f"({model.trained_on} != {g.fingerprint})")
        return model, []
    spec = {**DEFAULT_SURROGATE, **section}
    eps = spec["epsilon"] if spec["variant"] == "prsgc" else None
    model = init_model(spec["variant"], g.n_features, g.n_classes,
                       hidden=spec["hidden"], epsilon=eps,
                       seed=mix_seed(seed, "init", spec["variant"]))
    result = train(model, g, lr=spec["lr"], epochs=spec["epochs"])
    return result.model, result.losses


def attack_config_from(cfg, seed) -> AttackConfig:
    a = {**DEFAULT_ATTACK, **cfg.get("attack", {})}
    return AttackConfig(
        alpha=a["alpha"], epsilon=a["epsilon"], k_hops=a["k_hops"],
        fanout=a["fanout"], seed=seed, iterations=a["iterations"],
        step_size=a["step_size"],
        perturbation_rate=a["perturbation_rate"],
        anchor_rule=a["anchor_rule"], label_source=a["label_source"])


def run_attack_method(g, model, acfg, method, edges_per_node):
    if method == "segia":
        return run_segia(g, model, acfg)
    if method == "random":
        return run_baseline_random(g, model, acfg)
    if method == "multiedge":
        return run_baseline_multiedge(g, model, acfg, edges_per_node)
    raise ConfigError(f"unknown attack method {method!r}")


def evaluate_attack(g, victim, result, defense_epsilon):
    """Clean / attacked / defended rates plus homophily shift and budget."""
    attacked = result.attacked
    clean_prof = homophily_profile(g)
    att_prof = homophily_profile(attacked.composed)
    defended, rep = prune_defense(attacked, defense_epsilon)
    clean_defended, _ = prune_defense(g, defense_epsilon)
    targets = g.target_set
    return {
        "node_budget": attacked.plan.n_injected,
        "edge_budget": attacked.plan.n_new_edges,
        "clean_miscls": misclassification_rate(victim, g, targets),
        "clean_defended_miscls": misclassification_rate(
            victim, clean_defended, targets),
        "attacked_miscls": misclassification_rate(
            victim, attacked.composed, targets),
        "defended_miscls": misclassification_rate(victim, defended, targets),
        "surviving_injected_edges": rep.surviving_injected_edges,
        "injected_edges_total": rep.injected_edges_total,
        "homophily_w1": homophily_distance(clean_prof, att_prof,
                                           "wasserstein1"),
        "homophily_tv": homophily_distance(clean_prof, att_prof,
                                           "total_variation"),
        "final_attack_loss": result.trace[-1] if result.trace else None,
    }


def _write_json(path, payload) -> None:
    with open(path, "w") as f:
        json.dump(payload, f, sort_keys=True, indent=2)
        f.write("\n")


def _report(cfg, body) -> dict:
    return {"config": cfg, "version": __version__, **body}


def _log_line(out_dir, text) -> None:
    with open(Path(out_dir) / "run.log", "a") as f:
        f.write(f"[{time.strftime('%Y-%m-%dT%H:%M:%S')}] {text}\n")


def cmd_gen_synthetic(cfg) -> int:
    out = Path(cfg["out_dir"])
    out.mkdir(parents=True, exist_ok=True)
    g = resolve_graph(cfg)
    save_graph_dir(g, out / "graph")
    _write_json(out / "graph_meta.json", _report(cfg, {
        "n_nodes": g.n_nodes, "n_edges": g.n_edges,
        "n_classes": g.n_classes, "n_features": g.n_features,
        "avg_degree": g.avg_degree, "fingerprint": g.fingerprint,
        "n_labeled": int(g.labeled_set.size),
        "n_targets": int(g.target_set.size)}))
    return 0


def cmd_train(cfg) -> int:
    out = Path(cfg["out_dir"])
    out.mkdir(parents=True, exist_ok=True)
    g = resolve_graph(cfg)
    section = cfg.get("surrogate", {})
    if "checkpoint" in section:
        raise ConfigError("train expects a surrogate spec, not a checkpoint")
    model, losses = build_model(section, g, cfg["seed"])
    save_checkpoint(model, out / "checkpoint.json")
    _write_json(out / "train_log.json", _report(cfg, {
        "graph_fingerprint": g.fingerprint,
        "final_loss": losses[-1] if losses else None,
        "losses": losses}))
    return 0


def _load_models(cfg, g):
    surrogate, _ = build_model(cfg.get("surrogate", {}), g, cfg["seed"])
    if "victim" in cfg:
        victim, _ = build_model(cfg["victim"], g,
                                mix_seed(cfg["seed"], "victim"))
    else:
        victim = surrogate
    return surrogate, victim


def cmd_attack(cfg) -> int:
    out = Path(cfg["out_dir"])
    out.mkdir(parents=True, exist_ok=True)
    g = resolve_graph(cfg)
    surrogate, victim = _load_models(cfg, g)
    a = {**DEFAULT_ATTACK, **cfg.get("attack", {})}
    defense_eps = cfg.get("defense", {}).get("epsilon", a["epsilon"])
    records = []
    for i in range(a["n_seeds"]):
        seed = mix_seed(cfg["seed"], "attack", i)
        acfg = attack_config_from(cfg, seed)
        result = run_attack_method(g, surrogate, acfg, a["method"],
                                   a["edges_per_node"])
        save_plan(result, acfg, out / f"plan_seed{i}.json")
        rec = {"seed": seed, "method": a["method"]}
        rec.update(evaluate_attack(g, victim, result, defense_eps))
        records.append(rec)
    numeric = [k for k in records[0]
               if isinstance(records[0][k], (int, float))
               and records[0][k] is not None and k != "seed"]
    summary = {k: float(np.mean([r[k] for r in records])) for k in numeric}
    _write_json(out / "attack_report.json", _report(cfg, {
        "graph_fingerprint": g.fingerprint,
        "records": records, "summary": summary}))
    return 0


def cmd_defend(cfg) -> int:
    out = Path(cfg["out_dir"])
    out.mkdir(parents=True, exist_ok=True)
    g = resolve_graph(cfg)
    eps = cfg.get("defense", {}).get("epsilon", 0.1)
    defended, rep = prune_defense(g, eps)
    save_graph_dir(defended, out / "defended_graph")
    _write_json(out / "defense_report.json", _report(cfg, {
        "threshold": rep.threshold,
        "n_edges_before": g.n_edges,
        "n_edges_after": defended.n_edges,
        "n_pruned": len(rep.pruned_edges),
        "pruned_edges": [list(e) for e in rep.pruned_edges]}))
    return 0


def cmd_evaluate(cfg) -> int:
    out = Path(cfg["out_dir"])
    out.mkdir(parents=True, exist_ok=True)
    g = resolve_graph(cfg)
    _, victim = _load_models(cfg, g)
    rate = misclassification_rate(victim, g, g.target_set)
    _write_json(out / "evaluate_report.json", _report(cfg, {
        "graph_fingerprint": g.fingerprint,
        "misclassification_rate": rate,
        "accuracy": 1.0 - rate,
        "n_targets": int(g.target_set.size)}))
    return 0


def _sweep_cells(cfg):
    sweep = cfg.get("sweep", {})
    axes = {}
    for key, field in (("alpha_values", "alpha"), ("k_values", "k_hops"),
                       ("pr_values", "perturbation_rate")):
        vals = sweep.get(key)
        if vals is not None:
            if not vals:
                raise ConfigError(f"sweep axis {key} is empty")
            axes[field] = vals
    if not axes:
        raise ConfigError("sweep needs at least one non-empty axis")
    cells = [{}]
    for field, vals in axes.items():
        cells = [{**c, field: v} for c in cells for v in vals]
    return cells


def _run_sweep_cell(args):
    cfg, idx, cell = args
    try:
        g = resolve_graph(cfg)
        surrogate, victim = _load_models(cfg, g)
        a = {**DEFAULT_ATTACK, **cfg.get("attack", {}), **cell}
        seed = mix_seed(cfg["seed"], "sweep",
                        *[f"{k}={cell[k]}" for k in sorted(cell)])
        patched = copy.deepcopy(cfg)
        patched.setdefault("attack", {}).update(cell)
        acfg = attack_config_from(patched, seed)
        result = run_attack_method(g, surrogate, acfg, a["method"],
                                   a["edges_per_node"])
        defense_eps = cfg.get("defense", {}).get("epsilon", a["epsilon"])
        rec = evaluate_attack(g, victim, result, defense_eps)
        rec["cost_estimate"] = sampling_cost_estimate(
            g.target_set.size, acfg.fanout, acfg.k_hops)
        return idx, cell, seed, "ok", rec
    except Exception as e:  # per-cell failures recorded, sweep continues
        return idx, cell, 0, f"error: {e}", {}


SWEEP_METRICS = ("cost_estimate", "clean_miscls", "clean_defended_miscls",
                 "attacked_miscls", "defended_miscls", "homophily_w1",
                 "homophily_tv", "node_budget", "edge_budget",
                 "surviving_injected_edges")


def cmd_sweep(cfg, jobs: int = 1) -> int:
    out = Path(cfg["out_dir"])
    out.mkdir(parents=True, exist_ok=True)
    cells = _sweep_cells(cfg)
    tasks = [(cfg, i, cell) for i, cell in enumerate(cells)]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = sorted(pool.map(_run_sweep_cell, tasks))
    else:
        results = [_run_sweep_cell(t) for t in tasks]

    axis_fields = sorted({k for _, cell, _, _, _ in results for k in cell})
    header = axis_fields + ["seed", "status"] + list(SWEEP_METRICS)
    rows = []
    n_failed = 0
    for idx, cell, seed, status, rec in results:
        if status != "ok":
            n_failed += 1
        row = [repr(cell.get(k, "")) for k in axis_fields]
        row += [str(seed), status]
        row += [repr(rec.get(k, "")) for k in SWEEP_METRICS]
        rows.append(row)
    with open(out / "sweep_results.csv", "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(header)
        writer.writerows(rows)
    _write_json(out / "sweep_report.json", _report(cfg, {
        "n_cells": len(cells), "n_failed": n_failed,
        "axes": axis_fields}))
    return 0 if n_failed == 0 else 1


def cmd_theorem1(cfg) -> int:
    out = Path(cfg["out_dir"])
    out.mkdir(parents=True, exist_ok=True)
    g = resolve_graph(cfg)
    surrogate, _ = _load_models(cfg, g)
    t1 = cfg.get("theorem1", {})
    acfg = attack_config_from(cfg, cfg["seed"])
    report = theorem1_check(
        g, surrogate, acfg, n_seeds=t1.get("n_seeds", 10),
        edges_per_node=t1.get("edges_per_node", 3),
        defense_epsilon=cfg.get("defense", {}).get("epsilon"),
        comparator_alpha=t1.get("comparator_alpha", 0.0))
    body = report.to_dict()
    body["graph_fingerprint"] = g.fingerprint
    _write_json(out / "theorem1_report.json", _report(cfg, body))
    keys = sorted(report.records[0]) if report.records else []
    with open(out / "theorem1_records.csv", "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(keys)
        for rec in report.records:
            writer.writerow([repr(rec[k]) for k in keys])
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="segia",
        description="Single-edge graph injection attack harness")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("train", "attack", "defend", "evaluate", "sweep",
                 "theorem1", "gen-synthetic"):
        p = sub.add_parser(name)
        p.add_argument("--config", required=True)
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--out", default=None)
        p.add_argument("--jobs", type=int, default=1)
    args = parser.parse_args(argv)

    try:
        cfg = load_config(args.config, {"seed": args.seed, "out": args.out})
        started = time.time()
        handler = {
            "gen-synthetic": cmd_gen_synthetic,
            "train": cmd_train,
            "attack": cmd_attack,
            "defend": cmd_defend,
            "evaluate": cmd_evaluate,
            "theorem1": cmd_theorem1,
        }
        if args.command == "sweep":
            code = cmd_sweep(cfg, jobs=args.jobs)
        else:
            code = handler[args.command](cfg)
        _log_line(cfg["out_dir"],
                  f"{args.command} finished in {time.time() - started:.3f}s "
                  f"(exit {code})")
        return code
    except Exception as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
