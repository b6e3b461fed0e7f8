"""Command-line entry point: train, eval-attack, sweep, hist, ablate, oracle.

Every flag has a JSON config-file counterpart (--config); explicit flags win
on conflict. Bad usage or unreadable inputs exit with status 2, failed runs
with 1.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys

from .attacks import METHODS, AttackConfig, PerturbationBudget
from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .env import SCENARIO_NAMES
from .harness import (
    ExperimentConfig,
    action_diff_histogram,
    ablate_hlf,
    budget_sweep,
    eval_attack,
)
from .m3ddpg import M3ddpgConfig, train_m3ddpg
from .oracles import theorem1_suite, theorem2_suite, write_report
from .training import TrainConfig, train


class UsageError(RuntimeError):
    pass


def _load_config(path: str | None) -> dict:
    if not path:
        return {}
    try:
        with open(path, "r", encoding="utf-8") as fh:
            data = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot read config file {path}: {exc}")
    if not isinstance(data, dict):
        raise UsageError("config file must hold a JSON object")
    return data


def _merged(args: argparse.Namespace, config: dict, key: str, default=None):
    value = getattr(args, key.replace("-", "_"), None)
    if value is not None:
        return value
    if key in config:
        return config[key]
    return default


def _write_curve(path: str, curve) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["step", "eval_mean", "eval_std"])
        for step, mean, std in curve:
            writer.writerow([step, repr(mean), repr(std)])


def _cmd_train(args) -> int:
    config = _load_config(args.config)
    algo = _merged(args, config, "algo", "facmac")
    scenario = _merged(args, config, "scenario", "pp_3a")
    steps = int(_merged(args, config, "steps", 100_000))
    seed = int(_merged(args, config, "seed", 0))
    out = _merged(args, config, "out", "ckpt")
    if scenario not in SCENARIO_NAMES:
        raise UsageError(f"unknown scenario {scenario!r}")
    overrides = {"total_steps": steps}
    for key in ("gamma", "tau", "batch_size", "actor_lr", "critic_lr",
                "explore_noise_std", "td_lambda", "grad_clip", "weight_decay",
                "eval_interval"):
        if key in config:
            overrides[key] = config[key]
    if algo == "m3ddpg":
        cfg = M3ddpgConfig.maddpg_defaults(**overrides)
        if args.eps_adv is not None:
            cfg.eps_adv = args.eps_adv
        elif "eps_adv" in config:
            cfg.eps_adv = float(config["eps_adv"])
        ckpt = train_m3ddpg(scenario, cfg, seed)
    elif algo in ("maddpg", "facmac"):
        cfg = TrainConfig.defaults_for(algo, **overrides)
        ckpt = train(algo, scenario, cfg, seed)
    else:
        raise UsageError(f"unknown algorithm {algo!r}")
    os.makedirs(out, exist_ok=True)
    base = os.path.join(out, f"{algo}_{scenario}_seed{seed}")
    manifest, blob = save_checkpoint(ckpt, base)
    _write_curve(base + "_curve.csv", ckpt.curve)
    print(f"checkpoint written: {manifest} / {blob}")
    return 0


def _require_checkpoint(path: str):
    if not path:
        raise UsageError("--ckpt is required")
    try:
        return load_checkpoint(path)
    except FileNotFoundError:
        raise UsageError(f"checkpoint not found: {path}")
    except CheckpointError as exc:
        raise UsageError(f"cannot load checkpoint: {exc}")


def _cmd_eval_attack(args) -> int:
    config = _load_config(args.config)
    ckpt = _require_checkpoint(_merged(args, config, "ckpt"))
    method = _merged(args, config, "method", "saja")
    if method not in METHODS:
        raise UsageError(f"unknown attack method {method!r}")
    budget = PerturbationBudget(
        float(_merged(args, config, "eps_s", 0.02)),
        float(_merged(args, config, "eps_a", 0.05)),
    )
    attack = AttackConfig(
        method=method,
        m=int(_merged(args, config, "victims", 1)),
        K_s=int(_merged(args, config, "k_s", 20)),
        K_a=int(_merged(args, config, "k_a", 20)),
        alpha1=float(_merged(args, config, "alpha", 0.01)),
        beta1=float(_merged(args, config, "beta", 0.99)),
        alpha2=float(_merged(args, config, "alpha", 0.01)),
        beta2=float(_merged(args, config, "beta", 0.99)),
    )
    row = eval_attack(ExperimentConfig(
        checkpoint=ckpt,
        method=method,
        budget=budget,
        attack=attack,
        n_seeds=int(_merged(args, config, "seeds", 5)),
        episodes_per_seed=int(_merged(args, config, "episodes", 100)),
        base_seed=int(_merged(args, config, "seed", 0)),
        out_dir=_merged(args, config, "out", "results"),
    ))
    print(f"{row['method']} m={row['victims']}: "
          f"{row['mean_reward']:.3f} +- {row['std_reward']:.3f} "
          f"(drop {row['pct_drop']:.2f}%)")
    return 0


def _cmd_sweep(args) -> int:
    config = _load_config(args.config)
    ckpt = _require_checkpoint(_merged(args, config, "ckpt"))
    totals_arg = _merged(args, config, "totals", "0.02,0.04,0.06,0.08,0.10")
    if isinstance(totals_arg, str):
        totals = [float(t) for t in totals_arg.split(",") if t]
    else:
        totals = [float(t) for t in totals_arg]
    out = _merged(args, config, "out", "results")
    os.makedirs(out, exist_ok=True)
    rows = budget_sweep(
        ckpt,
        totals,
        splits_per_total=int(_merged(args, config, "splits", 11)),
        m=_merged(args, config, "victims"),
        n_seeds=int(_merged(args, config, "seeds", 1)),
        episodes_per_seed=int(_merged(args, config, "episodes", 10)),
        base_seed=int(_merged(args, config, "seed", 0)),
        out_path=os.path.join(out, "sweep.csv"),
    )
    print(f"sweep complete: {len(rows)} cells -> {os.path.join(out, 'sweep.csv')}")
    return 0


def _cmd_hist(args) -> int:
    config = _load_config(args.config)
    ckpt = _require_checkpoint(_merged(args, config, "ckpt"))
    methods_arg = _merged(args, config, "methods",
                          "pgd_state,random_state,random_sa,saja")
    methods = methods_arg.split(",") if isinstance(methods_arg, str) else list(methods_arg)
    for method in methods:
        if method not in METHODS:
            raise UsageError(f"unknown attack method {method!r}")
    out = _merged(args, config, "out", "results")
    os.makedirs(out, exist_ok=True)
    result = action_diff_histogram(
        ckpt,
        methods,
        timesteps=int(_merged(args, config, "timesteps", 5000)),
        budget=PerturbationBudget(
            float(_merged(args, config, "eps_s", 0.02)),
            float(_merged(args, config, "eps_a", 0.05)),
        ),
        m=_merged(args, config, "victims"),
        base_seed=int(_merged(args, config, "seed", 0)),
        out_path=os.path.join(out, "hist.csv"),
    )
    peaks = {m: info["peak_bin"] for m, info in result["methods"].items()}
    print(f"histogram written; peak bins: {peaks}")
    return 0


def _cmd_ablate(args) -> int:
    config = _load_config(args.config)
    ckpt = _require_checkpoint(_merged(args, config, "ckpt"))
    victims_arg = _merged(args, config, "victims", "1,2,3")
    victims = ([int(v) for v in victims_arg.split(",")]
               if isinstance(victims_arg, str) else [int(v) for v in victims_arg])
    out = _merged(args, config, "out", "results")
    os.makedirs(out, exist_ok=True)
    rows = ablate_hlf(
        ckpt,
        victims,
        budget=PerturbationBudget(
            float(_merged(args, config, "eps_s", 0.02)),
            float(_merged(args, config, "eps_a", 0.05)),
        ),
        n_seeds=int(_merged(args, config, "seeds", 5)),
        episodes_per_seed=int(_merged(args, config, "episodes", 100)),
        base_seed=int(_merged(args, config, "seed", 0)),
        out_path=os.path.join(out, "ablate.csv"),
    )
    for row in rows:
        print(f"{row['arm']} m={row['victims']}: {row['mean_reward']:.3f}")
    return 0


def _cmd_oracle(args) -> int:
    config = _load_config(args.config)
    suite = _merged(args, config, "suite", "theorem1")
    instances = int(_merged(args, config, "instances", 100))
    seed = int(_merged(args, config, "seed", 7))
    out = _merged(args, config, "out", "results")
    os.makedirs(out, exist_ok=True)
    if suite == "theorem1":
        records = theorem1_suite(instances, seed)
    elif suite == "theorem2":
        records = theorem2_suite(instances, seed)
    else:
        raise UsageError(f"unknown oracle suite {suite!r}")
    path = os.path.join(out, "oracle_report.json")
    write_report(path, records, extra={"suite": suite, "seed": seed})
    n_pass = sum(1 for r in records if r["holds"])
    print(f"{suite}: {n_pass}/{len(records)} instances hold -> {path}")
    return 0 if n_pass == len(records) else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="perturbench")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a model and write a checkpoint")
    p.add_argument("--config")
    p.add_argument("--algo", choices=["maddpg", "facmac", "m3ddpg"])
    p.add_argument("--scenario", choices=list(SCENARIO_NAMES))
    p.add_argument("--steps", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--eps-adv", type=float, dest="eps_adv")
    p.add_argument("--out")
    p.set_defaults(fn=_cmd_train)

    p = sub.add_parser("eval-attack", help="attacked evaluation, one table row")
    p.add_argument("--config")
    p.add_argument("--ckpt")
    p.add_argument("--method", choices=list(METHODS))
    p.add_argument("--eps-s", type=float, dest="eps_s")
    p.add_argument("--eps-a", type=float, dest="eps_a")
    p.add_argument("--victims", type=int)
    p.add_argument("--k-s", type=int, dest="k_s")
    p.add_argument("--k-a", type=int, dest="k_a")
    p.add_argument("--alpha", type=float)
    p.add_argument("--beta", type=float)
    p.add_argument("--seeds", type=int)
    p.add_argument("--episodes", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--out")
    p.set_defaults(fn=_cmd_eval_attack)

    p = sub.add_parser("sweep", help="budget-allocation sweep")
    p.add_argument("--config")
    p.add_argument("--ckpt")
    p.add_argument("--totals")
    p.add_argument("--splits", type=int)
    p.add_argument("--victims", type=int)
    p.add_argument("--seeds", type=int)
    p.add_argument("--episodes", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--out")
    p.set_defaults(fn=_cmd_sweep)

    p = sub.add_parser("hist", help="action-difference histogram")
    p.add_argument("--config")
    p.add_argument("--ckpt")
    p.add_argument("--methods")
    p.add_argument("--timesteps", type=int)
    p.add_argument("--eps-s", type=float, dest="eps_s")
    p.add_argument("--eps-a", type=float, dest="eps_a")
    p.add_argument("--victims", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--out")
    p.set_defaults(fn=_cmd_hist)

    p = sub.add_parser("ablate", help="loss-weight ablation arms")
    p.add_argument("--config")
    p.add_argument("--ckpt")
    p.add_argument("--victims")
    p.add_argument("--eps-s", type=float, dest="eps_s")
    p.add_argument("--eps-a", type=float, dest="eps_a")
    p.add_argument("--seeds", type=int)
    p.add_argument("--episodes", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--out")
    p.set_defaults(fn=_cmd_ablate)

    p = sub.add_parser("oracle", help="tabular certification suites")
    p.add_argument("--config")
    p.add_argument("--suite", choices=["theorem1", "theorem2"])
    p.add_argument("--instances", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--out")
    p.set_defaults(fn=_cmd_oracle)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if exc.code is not None else 2
    try:
        return args.fn(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except CheckpointError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # failed run
        print(f"run failed: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
