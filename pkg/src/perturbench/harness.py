"""Experiment orchestration: attacked evaluation runs, budget sweeps,
action-difference histograms, and loss-weight ablations, all emitting
plot-ready CSV rows plus per-episode raw logs.

Evaluation seeds are derived from (base_seed, seed index, episode index)
only, never from the method or budget, so every method/cell comparison is
paired and endpoint identities hold bitwise.
"""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass, field, replace

import numpy as np

from .attacks import AttackConfig, PerturbationBudget, run_attack
from .env import PredatorPreyEnv, make_scenario
from .models import PolicyBundle
from .seeding import derive_seed
from .training import Checkpoint, bundle_from_checkpoint
from .checkpoint import load_checkpoint

HLF_ARMS = {
    "q_only": (1.0 - 1e-6, 1e-6),
    "action_only": (1e-6, 1.0 - 1e-6),
    "balanced": (0.01, 0.99),
}


def _resolve_bundle(checkpoint) -> tuple[PolicyBundle, str]:
    if isinstance(checkpoint, str):
        checkpoint = load_checkpoint(checkpoint)
    if isinstance(checkpoint, Checkpoint):
        return bundle_from_checkpoint(checkpoint), checkpoint.scenario
    raise TypeError("expected a Checkpoint or a checkpoint path")


def run_attacked_episode(bundle: PolicyBundle, scenario, method: str,
                         budget: PerturbationBudget, attack_cfg: AttackConfig,
                         env_seed: int, attack_seed: int,
                         collect_steps: bool = False):
    """One attacked episode; the environment transitions on the true state
    with the executed (possibly perturbed) actions. Returns (episode reward,
    per-step diagnostic records)."""
    scenario = make_scenario(scenario) if isinstance(scenario, str) else scenario
    env = PredatorPreyEnv(scenario)
    obs = env.reset(env_seed)
    attack_rng = np.random.default_rng(attack_seed)
    total = 0.0
    steps = []
    t = 0
    while not env.done:
        outcome = run_attack(method, obs, bundle, budget, attack_cfg, attack_rng)
        result = env.step(outcome.action)
        total += result.team_reward
        if collect_steps:
            m = max(len(outcome.victims), 1)
            steps.append({
                "t": t,
                "method": method,
                "victims": outcome.victims,
                "q_clean": outcome.diagnostics["q_clean"],
                "q_attacked": outcome.diagnostics["q_attacked"],
                "l2_action_diff": outcome.diagnostics["action_dist"],
                "avg_action_diff": outcome.diagnostics["action_dist"] / m,
                "outcome": outcome,
            })
        obs = result.next_observations
        t += 1
    return total, steps


@dataclass
class ExperimentConfig:
    checkpoint: object                   # Checkpoint or path
    method: str = "saja"
    budget: PerturbationBudget = field(default_factory=lambda: PerturbationBudget(0.02, 0.05))
    attack: AttackConfig = field(default_factory=AttackConfig)
    n_seeds: int = 5
    episodes_per_seed: int = 100
    base_seed: int = 0
    scenario: str | None = None
    out_dir: str | None = None
    baseline_mean: float | None = None
    label: str | None = None

    def __post_init__(self):
        if self.n_seeds < 1 or self.episodes_per_seed < 1:
            raise ValueError("seed and episode counts must be positive")


def _per_seed_rewards(bundle, scenario, method, budget, attack_cfg,
                      n_seeds, episodes, base_seed) -> list[np.ndarray]:
    out = []
    for k in range(n_seeds):
        rewards = np.array([
            run_attacked_episode(
                bundle, scenario, method, budget, attack_cfg,
                env_seed=derive_seed(base_seed, "ep", k, e),
                attack_seed=derive_seed(base_seed, "atk", k, e),
            )[0]
            for e in range(episodes)
        ])
        out.append(rewards)
    return out


def aggregate_runs(per_seed_rewards: list[np.ndarray]) -> dict:
    """The reporting aggregation: mean of per-seed means and mean of per-seed
    variances, with the square root of the latter as the spread column."""
    means = [float(r.mean()) for r in per_seed_rewards]
    variances = [float(r.var()) for r in per_seed_rewards]
    mean_reward = float(np.mean(means))
    var_reward = float(np.mean(variances))
    return {
        "mean_reward": mean_reward,
        "var_reward": var_reward,
        "std_reward": float(np.sqrt(var_reward)),
        "seed_means": means,
        "seed_vars": variances,
    }


def _write_raw_logs(out_dir: str, tag: str, per_seed: list[np.ndarray]) -> None:
    os.makedirs(out_dir, exist_ok=True)
    for k, rewards in enumerate(per_seed):
        path = os.path.join(out_dir, f"raw_{tag}_seed{k}.csv")
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["episode", "reward"])
            for e, r in enumerate(rewards):
                writer.writerow([e, repr(float(r))])


def eval_attack(cfg: ExperimentConfig) -> dict:
    """One metrics-table row: attacked reward statistics plus the percentage
    drop against a paired no-attack baseline."""
    bundle, scenario = _resolve_bundle(cfg.checkpoint)
    if cfg.scenario is not None and cfg.scenario != scenario:
        raise ValueError(
            f"experiment declares scenario {cfg.scenario!r} but checkpoint holds {scenario!r}"
        )
    per_seed = _per_seed_rewards(bundle, scenario, cfg.method, cfg.budget, cfg.attack,
                                 cfg.n_seeds, cfg.episodes_per_seed, cfg.base_seed)
    stats = aggregate_runs(per_seed)
    if cfg.method == "none":
        base_mean = stats["mean_reward"]
    elif cfg.baseline_mean is not None:
        base_mean = cfg.baseline_mean
    else:
        base = _per_seed_rewards(bundle, scenario, "none", cfg.budget, cfg.attack,
                                 cfg.n_seeds, cfg.episodes_per_seed, cfg.base_seed)
        base_mean = aggregate_runs(base)["mean_reward"]
    drop = 0.0
    if base_mean != 0.0:
        drop = (base_mean - stats["mean_reward"]) / abs(base_mean) * 100.0
    row = {
        "model": cfg.label or scenario,
        "scenario": scenario,
        "method": cfg.method,
        "victims": cfg.attack.m,
        "eps_s": cfg.budget.eps_s,
        "eps_a": cfg.budget.eps_a,
        "mean_reward": stats["mean_reward"],
        "var_reward": stats["var_reward"],
        "std_reward": stats["std_reward"],
        "base_mean": base_mean,
        "pct_drop": drop,
        "n_seeds": cfg.n_seeds,
        "episodes_per_seed": cfg.episodes_per_seed,
        "seed_means": stats["seed_means"],
        "seed_vars": stats["seed_vars"],
    }
    if cfg.out_dir:
        tag = f"{cfg.method}_m{cfg.attack.m}"
        _write_raw_logs(cfg.out_dir, tag, per_seed)
        append_metrics_row(os.path.join(cfg.out_dir, "metrics.csv"), row)
    return row


METRICS_COLUMNS = ["model", "scenario", "method", "victims", "eps_s", "eps_a",
                   "mean_reward", "var_reward", "std_reward", "base_mean",
                   "pct_drop", "n_seeds", "episodes_per_seed"]


def append_metrics_row(path: str, row: dict) -> None:
    fresh = not os.path.exists(path)
    with open(path, "a", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        if fresh:
            writer.writerow(METRICS_COLUMNS)
        writer.writerow([row[c] for c in METRICS_COLUMNS])


def budget_sweep(checkpoint, totals, splits_per_total: int = 11,
                 m: int | None = None, n_seeds: int = 1, episodes_per_seed: int = 3,
                 base_seed: int = 0, attack: AttackConfig | None = None,
                 out_path: str | None = None) -> list[dict]:
    """Joint-budget allocation sweep: for each total, evaluate the joint attack
    at every (k/(splits-1)) split of the total between eps_s and eps_a. The
    k=0 endpoint is exactly the action-only attack and the last endpoint the
    state-only attack."""
    if splits_per_total < 2:
        raise ValueError("need at least two splits per total")
    bundle, scenario = _resolve_bundle(checkpoint)
    n = bundle.n_agents
    base_cfg = attack or AttackConfig(m=n if m is None else m)
    rows = []
    for total in totals:
        for k in range(splits_per_total):
            frac = k / (splits_per_total - 1)
            eps_s = frac * total
            eps_a = (1.0 - frac) * total
            row = eval_attack(ExperimentConfig(
                checkpoint=checkpoint,
                method="saja",
                budget=PerturbationBudget(eps_s, eps_a),
                attack=base_cfg,
                n_seeds=n_seeds,
                episodes_per_seed=episodes_per_seed,
                base_seed=base_seed,
                baseline_mean=0.0,
            ))
            rows.append({
                "total": total,
                "k": k,
                "eps_s": eps_s,
                "eps_a": eps_a,
                "mean_reward": row["mean_reward"],
                "std_reward": row["std_reward"],
            })
    if out_path:
        with open(out_path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["total", "k", "eps_s", "eps_a", "mean_reward", "std_reward"])
            for r in rows:
                writer.writerow([r["total"], r["k"], r["eps_s"], r["eps_a"],
                                 repr(r["mean_reward"]), repr(r["std_reward"])])
    return rows


BIN_WIDTH = 0.01
BIN_CUTOFF = 0.40


def action_diff_histogram(checkpoint, methods, timesteps: int,
                          budget: PerturbationBudget | None = None,
                          m: int | None = None, base_seed: int = 0,
                          attack: AttackConfig | None = None,
                          out_path: str | None = None) -> dict:
    """Frequency distribution of the per-timestep average victim action
    displacement ||a** - a0||_2 / m, in bins of width 0.01 with values above
    0.40 omitted. Returns per-method bin counts and peak bins."""
    bundle, scenario = _resolve_bundle(checkpoint)
    n = bundle.n_agents
    budget = budget or PerturbationBudget(0.02, 0.05)
    cfg = attack or AttackConfig(m=n if m is None else m)
    if cfg.m < 1:
        raise ValueError("the histogram needs at least one victim")
    n_bins = int(round(BIN_CUTOFF / BIN_WIDTH))
    result = {"bins": [i * BIN_WIDTH for i in range(n_bins)], "methods": {}}
    for method in methods:
        values = []
        episode = 0
        while len(values) < timesteps:
            _, steps = run_attacked_episode(
                bundle, scenario, method, budget, cfg,
                env_seed=derive_seed(base_seed, "hist-ep", episode),
                attack_seed=derive_seed(base_seed, "hist-atk", episode),
                collect_steps=True,
            )
            values.extend(s["avg_action_diff"] for s in steps)
            episode += 1
        values = np.array(values[:timesteps])
        counts = np.zeros(n_bins, dtype=np.int64)
        in_range = values[values < BIN_CUTOFF]
        idx = np.floor(in_range / BIN_WIDTH).astype(np.int64)
        for i in idx:
            counts[i] += 1
        result["methods"][method] = {
            "counts": counts.tolist(),
            "peak_bin": int(np.argmax(counts)),
            "omitted": int((values >= BIN_CUTOFF).sum()),
            "n_values": int(values.size),
        }
    if out_path:
        with open(out_path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["method", "bin_lo", "count"])
            for method, info in result["methods"].items():
                for b, c in zip(result["bins"], info["counts"]):
                    writer.writerow([method, f"{b:.2f}", c])
    return result


def ablate_hlf(checkpoint, victims, budget: PerturbationBudget | None = None,
               n_seeds: int = 5, episodes_per_seed: int = 100, base_seed: int = 0,
               out_path: str | None = None) -> list[dict]:
    """Evaluate the joint attack under the three loss-weight arms with shared
    seeds per arm; alpha and beta are shared across both phases."""
    budget = budget or PerturbationBudget(0.02, 0.05)
    rows = []
    for m in victims:
        for arm, (alpha, beta) in HLF_ARMS.items():
            cfg = AttackConfig(m=m, alpha1=alpha, beta1=beta, alpha2=alpha, beta2=beta)
            row = eval_attack(ExperimentConfig(
                checkpoint=checkpoint,
                method="saja",
                budget=budget,
                attack=cfg,
                n_seeds=n_seeds,
                episodes_per_seed=episodes_per_seed,
                base_seed=base_seed,
                baseline_mean=0.0,
            ))
            row["arm"] = arm
            rows.append(row)
    if out_path:
        with open(out_path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["arm", "victims", "mean_reward", "std_reward"])
            for r in rows:
                writer.writerow([r["arm"], r["victims"], repr(r["mean_reward"]),
                                 repr(r["std_reward"])])
    return rows
