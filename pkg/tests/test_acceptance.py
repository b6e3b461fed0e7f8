"""Acceptance suite: one test per release criterion, each printing a PASS
line with its measured evidence (run with `pytest tests/test_acceptance.py -v -s`).

The two expensive fixtures are shared: criterion 7 trains the full desk-scale
model that criterion 8 reuses, and criteria 9/11 share a small mechanics
checkpoint.
"""

import json
import math
import time

import numpy as np
import pytest

from perturbench.attacks import (
    AttackConfig,
    PerturbationBudget,
    pgd_action,
    pgd_state,
    run_attack,
    saja,
)
from perturbench.autodiff import Mlp, Tape, backward, mlp_forward
from perturbench.checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from perturbench.env import PredatorPreyEnv, make_scenario
from perturbench.harness import (
    ExperimentConfig,
    action_diff_histogram,
    budget_sweep,
    eval_attack,
)
from perturbench.m3ddpg import M3ddpgConfig, train_m3ddpg
from perturbench.models import ActorSet, FacmacCritic, FacmacCriticScalar, \
    MaddpgCriticScalar, PolicyBundle, SharedCritic, act_greedy
from perturbench.oracles import (
    finite_diff_gradient,
    heuristic_single_step_value,
    optimal_adversary_value,
    policy_value,
    q_consistent,
    random_policy,
    random_saamg,
    theorem1_suite,
    theorem2_suite,
    write_report,
)
from perturbench.seeding import derive_seed
from perturbench.training import (
    TrainConfig,
    build_model,
    bundle_from_checkpoint,
    evaluate_policy,
    train,
)
from toyproblems import (
    grid_action_phase_optimum,
    grid_state_phase_optimum,
    make_action_phase_instance,
    make_state_phase_instance,
)

TRAIN_SEED = 1
EVAL_SEED = 0
BUDGET = PerturbationBudget(eps_s=0.02, eps_a=0.05)


def report(criterion: int, message: str) -> None:
    print(f"\n[criterion {criterion:02d}] PASS - {message}")


@pytest.fixture(scope="module")
def trained_checkpoint():
    """Criterion 7's desk-scale model: 3-predator scenario, 100k steps."""
    cfg = TrainConfig.facmac_defaults(total_steps=100_000, eval_interval=2000)
    return train("facmac", "pp_3a", cfg, seed=TRAIN_SEED)


@pytest.fixture(scope="module")
def quick_checkpoint():
    cfg = TrainConfig.facmac_defaults(
        total_steps=80, batch_size=16, eval_interval=80,
        actor_hidden=(8,), critic_hidden=(8,), mixer_embed=4)
    return train("facmac", "pp_3a", cfg, seed=4)


def random_bundle(algo: str, seed: int) -> PolicyBundle:
    scen = make_scenario("pp_3a")
    rng = np.random.default_rng(seed)
    actors = ActorSet.create(scen.n_predators, scen.obs_dim, scen.act_dim, (64, 64), rng)
    if algo == "maddpg":
        critic = SharedCritic.create(scen.state_dim, scen.n_predators, scen.act_dim,
                                     (64, 64), rng)
        scalar = MaddpgCriticScalar(critic.online, scen.n_predators)
    else:
        critic = FacmacCritic.create(scen.n_predators, scen.obs_dim, scen.act_dim,
                                     scen.state_dim, (64, 64), 64, rng)
        scalar = FacmacCriticScalar(critic)
    return PolicyBundle(actors.online, scalar, scen.n_predators, scen.obs_dim,
                        scen.act_dim)


def test_criterion_01_gradient_fidelity():
    """100 seeded random networks: every parameter and input gradient matches
    central finite differences within 1e-4 relative (1e-7 floor); < 10 s."""
    start = time.monotonic()
    rng = np.random.default_rng(20260808)
    checked = 0
    worst = 0.0
    for _ in range(100):
        n_layers = int(rng.integers(1, 4))
        sizes = [int(rng.integers(1, 17)) for _ in range(n_layers + 1)]
        net = Mlp.init(
            sizes,
            hidden_activation=("relu", "tanh")[int(rng.integers(2))],
            output_activation=("identity", "tanh")[int(rng.integers(2))],
            rng=rng,
        )
        x = rng.normal(size=sizes[0])
        g_out = rng.normal(size=sizes[-1])

        tape = Tape()
        mlp_forward(net, x, tape)
        param_grads, input_grad = backward(tape, g_out)

        def scalar_of(z):
            return float(np.atleast_1d(net.forward(z)) @ g_out)

        fd = finite_diff_gradient(scalar_of, x.copy())
        err = np.abs(input_grad - fd) - (1e-7 + 1e-4 * np.abs(fd))
        assert np.all(err <= 0.0)
        worst = max(worst, float((np.abs(input_grad - fd)
                                  / np.maximum(np.abs(fd), 1e-7)).max()))
        checked += input_grad.size

        for l, (dw, db) in enumerate(param_grads):
            def f_w(wflat, l=l):
                saved = net.weights[l].copy()
                net.weights[l][...] = wflat.reshape(saved.shape)
                out = scalar_of(x)
                net.weights[l][...] = saved
                return out

            fd_w = finite_diff_gradient(f_w, net.weights[l].reshape(-1).copy())
            assert np.all(np.abs(dw.reshape(-1) - fd_w) <= 1e-7 + 1e-4 * np.abs(fd_w))

            def f_b(bvec, l=l):
                saved = net.biases[l].copy()
                net.biases[l][...] = bvec
                out = scalar_of(x)
                net.biases[l][...] = saved
                return out

            fd_b = finite_diff_gradient(f_b, net.biases[l].copy())
            assert np.all(np.abs(db - fd_b) <= 1e-7 + 1e-4 * np.abs(fd_b))
            checked += dw.size + db.size
    elapsed = time.monotonic() - start
    assert elapsed < 10.0
    report(1, f"{checked} gradient components across 100 networks vs central "
              f"finite differences in {elapsed:.1f}s")


def test_criterion_02_budget_soundness():
    """>= 10^4 attacked timesteps across every method: exact L-inf budgets on
    victims, bitwise-clean non-victim rows. Zero violations."""
    methods = ["saja", "pgd_state", "pgd_action", "random_state",
               "random_action", "random_sa"]
    scen = make_scenario("pp_3a")
    total = 0
    per_method = 1667
    for mi, method in enumerate(methods):
        bundle = random_bundle("maddpg" if mi % 2 else "facmac", seed=100 + mi)
        episodes = per_method // scen.episode_length + 1
        steps_done = 0
        for ep in range(episodes):
            env = PredatorPreyEnv(scen)
            obs = env.reset(derive_seed(2, method, ep))
            rng = np.random.default_rng(derive_seed(3, method, ep))
            m = 1 + (ep % 3)
            cfg = AttackConfig(method=method, m=m)
            while not env.done and steps_done < per_method:
                out = run_attack(method, obs, bundle, BUDGET, cfg, rng)
                mu_star = act_greedy(bundle.actors, out.perturbed_observations)
                for i in range(scen.n_predators):
                    if i in out.victims:
                        assert np.max(np.abs(out.perturbed_observations[i] - obs[i])) <= BUDGET.eps_s
                        assert np.max(np.abs(out.action[i] - mu_star[i])) <= BUDGET.eps_a
                    else:
                        assert np.array_equal(out.perturbed_observations[i], obs[i])
                        assert np.array_equal(out.action[i], mu_star[i])
                obs = env.step(out.action).next_observations
                steps_done += 1
                total += 1
            if steps_done >= per_method:
                break
    assert total >= 10_000
    report(2, f"{total} attacked timesteps across {len(methods)} methods, "
              f"zero budget or cleanliness violations")


def test_criterion_03_ablation_recovery():
    """saja(K_a=0) == pgd_state and saja(K_s=0) == pgd_action, bitwise over
    1000 timesteps under shared rng streams."""
    scen = make_scenario("pp_3a")
    bundle = random_bundle("facmac", seed=55)
    checked = 0
    ep = 0
    while checked < 1000:
        env = PredatorPreyEnv(scen)
        obs = env.reset(derive_seed(5, "recovery", ep))
        seed = derive_seed(6, "recovery", ep)
        rngs = [np.random.default_rng(seed) for _ in range(4)]
        while not env.done and checked < 1000:
            a = saja(obs, bundle.actors, bundle.critic_scalar, BUDGET,
                     AttackConfig(m=2, K_a=0), rngs[0])
            b = pgd_state(obs, bundle.actors, bundle.critic_scalar, BUDGET,
                          AttackConfig(m=2), rngs[1])
            c = saja(obs, bundle.actors, bundle.critic_scalar, BUDGET,
                     AttackConfig(m=2, K_s=0), rngs[2])
            d = pgd_action(obs, bundle.actors, bundle.critic_scalar, BUDGET,
                           AttackConfig(m=2), rngs[3])
            assert a.victims == b.victims == c.victims == d.victims
            assert np.array_equal(a.perturbed_observations, b.perturbed_observations)
            assert np.array_equal(a.action, b.action)
            assert np.array_equal(c.perturbed_observations, d.perturbed_observations)
            assert np.array_equal(c.action, d.action)
            obs = env.step(a.action).next_observations
            checked += 1
        ep += 1
    report(3, f"{checked} timesteps bitwise-identical for both zero-phase "
              f"reductions under shared rng streams")


def test_criterion_04_toy_optimum_match():
    """50 seeded analytic instances: the attack's final loss is within 1% of
    an exhaustive grid-search optimum (grid <= 1e-3); < 30 s."""
    start = time.monotonic()
    from perturbench.attacks import saja_action_phase, saja_state_phase

    worst_rel = 0.0
    for k in range(25):
        inst = make_state_phase_instance(np.random.default_rng(derive_seed(8, k)))
        _, losses = saja_state_phase(inst["obs"], [inst["actor"]], inst["critic"],
                                     (0,), inst["budget"], inst["cfg"])
        best = grid_state_phase_optimum(inst, grid=1e-4)
        rel = abs(losses[-1] - best) / abs(best)
        worst_rel = max(worst_rel, rel)
        assert rel <= 0.01
    for k in range(25):
        inst = make_action_phase_instance(np.random.default_rng(derive_seed(9, k)))
        _, _, losses = saja_action_phase(inst["obs"], [inst["actor"]], inst["critic"],
                                         (0,), inst["budget"], inst["cfg"])
        best = grid_action_phase_optimum(inst, grid=1e-3)
        rel = abs(losses[-1] - best) / abs(best)
        worst_rel = max(worst_rel, rel)
        assert rel <= 0.01
    elapsed = time.monotonic() - start
    assert elapsed < 30.0
    report(4, f"50 instances within 1% of grid optimum "
              f"(worst {100 * worst_rel:.3f}%) in {elapsed:.1f}s")


def test_criterion_05_theorem1_suite(tmp_path):
    """100 seeded tabular instances: gap <= 2 eps_Q / (1 - gamma) per instance,
    violations emitted as reproducible counterexample records; < 60 s."""
    start = time.monotonic()
    records = theorem1_suite(100, seed=7)
    elapsed = time.monotonic() - start
    assert elapsed < 60.0
    assert len(records) == 100

    path = tmp_path / "theorem1_report.json"
    write_report(str(path), records, extra={"suite": "theorem1", "seed": 7})
    with open(path) as fh:
        loaded = json.load(fh)
    pass_fraction = loaded["pass_fraction"]

    violations = [r for r in records if not r["holds"]]
    for rec in violations:
        # every violation must be a complete, reproducible counterexample
        assert "counterexample" in rec
        from perturbench.oracles import TabularSAAMG, DiscretePolicy, theorem1_check

        game = TabularSAAMG.from_json(rec["counterexample"]["game"])
        policy = DiscretePolicy([np.asarray(t) for t in rec["counterexample"]["policy"]])
        again = theorem1_check(game, policy,
                               np.asarray(rec["counterexample"]["q_table"]))
        assert again["gap"] == pytest.approx(rec["gap"], abs=1e-12)
        assert not again["holds"]
    assert pass_fraction == 1.0 or violations

    # adversary optimality sandwich on the same instances
    for k in range(100):
        rng = np.random.default_rng(np.random.SeedSequence([7, k]))
        game = random_saamg(rng)
        policy = random_policy(rng, game)
        noise = float(rng.uniform(0.05, 0.3))
        q = q_consistent(game, policy) + rng.uniform(-noise, noise, game.rewards.shape)
        v_pi = policy_value(game, policy)
        v_star = optimal_adversary_value(game, policy)
        v_h, _ = heuristic_single_step_value(game, policy, q)
        assert np.all(v_star <= v_h + 1e-9)
        assert np.all(v_h <= v_pi + 1e-9)
    report(5, f"pass fraction {pass_fraction:.2f} over 100 instances "
              f"({len(violations)} counterexample records) in {elapsed:.1f}s")


def test_criterion_06_theorem2_suite(tmp_path):
    """100 seeded tabular instances with stochastic policies:
    |V - V_adv| <= sqrt(2n) R_max / (1-gamma)^2 * sqrt(max MAAD) on all; < 60 s."""
    start = time.monotonic()
    records = theorem2_suite(100, seed=11)
    elapsed = time.monotonic() - start
    assert elapsed < 60.0
    assert len(records) == 100
    assert all(r["holds"] for r in records)
    write_report(str(tmp_path / "theorem2_report.json"), records,
                 extra={"suite": "theorem2", "seed": 11})
    margins = [max(r["lhs"]) / r["rhs"] for r in records if r["rhs"] > 0]
    report(6, f"100/100 instances hold (max lhs/rhs {max(margins):.3f}) "
              f"in {elapsed:.1f}s")


def _standard_error(row) -> float:
    n = row["n_seeds"] * row["episodes_per_seed"]
    return row["std_reward"] / math.sqrt(n)


def test_criterion_07_attack_ordering_desk_scale(trained_checkpoint):
    """Desk-scale qualitative ordering: the joint attack beats the no-attack
    baseline with non-overlapping standard-error intervals at m=3 and is at
    most min(state-only, action-only) in >= 2 of 3 victim counts; < 30 min."""
    start = time.monotonic()
    ckpt = trained_checkpoint

    # sanity: training produced a policy clearly above a random one
    trained = evaluate_policy(ckpt, "pp_3a", episodes=100, seed=777)
    fresh = build_model("facmac", make_scenario("pp_3a"),
                        TrainConfig.facmac_defaults(), np.random.default_rng(123))
    randomly = evaluate_policy(fresh.bundle(), "pp_3a", episodes=100, seed=777)
    if randomly["mean"] > 0:
        assert trained["mean"] > 3 * randomly["mean"]
    else:
        assert trained["mean"] > randomly["mean"]

    base = eval_attack(ExperimentConfig(
        checkpoint=ckpt, method="none", n_seeds=5, episodes_per_seed=100,
        base_seed=EVAL_SEED))
    rows = {}
    for method in ("saja", "pgd_state", "pgd_action"):
        for m in (1, 2, 3):
            rows[(method, m)] = eval_attack(ExperimentConfig(
                checkpoint=ckpt, method=method, budget=BUDGET,
                attack=AttackConfig(method=method, m=m),
                n_seeds=5, episodes_per_seed=100, base_seed=EVAL_SEED,
                baseline_mean=base["mean_reward"]))

    saja3 = rows[("saja", 3)]
    assert (base["mean_reward"] - _standard_error(base)
            > saja3["mean_reward"] + _standard_error(saja3))

    wins = 0
    for m in (1, 2, 3):
        competitor = min(rows[("pgd_state", m)]["mean_reward"],
                         rows[("pgd_action", m)]["mean_reward"])
        if rows[("saja", m)]["mean_reward"] <= competitor:
            wins += 1
    assert wins >= 2

    elapsed = time.monotonic() - start
    assert elapsed < 1800.0
    summary = ", ".join(
        f"m={m}: saja {rows[('saja', m)]['mean_reward']:.1f} vs "
        f"pgd_s {rows[('pgd_state', m)]['mean_reward']:.1f} / "
        f"pgd_a {rows[('pgd_action', m)]['mean_reward']:.1f}"
        for m in (1, 2, 3))
    report(7, f"baseline {base['mean_reward']:.1f}; {summary}; "
              f"saja wins {wins}/3; {elapsed / 60:.1f} min")


def test_criterion_08_histogram_peak_ordering(trained_checkpoint):
    """Action-difference peak-bin ordering on the trained model:
    pgd_state < random_state < random_sa < saja over >= 5000 timesteps."""
    result = action_diff_histogram(
        trained_checkpoint,
        ["pgd_state", "random_state", "random_sa", "saja"],
        timesteps=5000, budget=BUDGET, m=3, base_seed=EVAL_SEED)
    peaks = [result["methods"][m]["peak_bin"]
             for m in ("pgd_state", "random_state", "random_sa", "saja")]
    assert peaks[0] < peaks[1] < peaks[2] < peaks[3]
    report(8, f"peak bins pgd_state {peaks[0]} < random_state {peaks[1]} "
              f"< random_sa {peaks[2]} < saja {peaks[3]} over 5000 timesteps")


def test_criterion_09_sweep_endpoints(quick_checkpoint):
    """55-cell budget sweep completes; its endpoint cells equal standalone
    state-only/action-only evaluations to 1e-9 under shared seeds."""
    totals = [0.02, 0.04, 0.06, 0.08, 0.10]
    rows = budget_sweep(quick_checkpoint, totals, splits_per_total=11, m=3,
                        n_seeds=1, episodes_per_seed=2, base_seed=17)
    assert len(rows) == 55
    worst = 0.0
    for total in totals:
        cells = [r for r in rows if r["total"] == total]
        pgd_a = eval_attack(ExperimentConfig(
            checkpoint=quick_checkpoint, method="pgd_action",
            budget=PerturbationBudget(0.0, total), attack=AttackConfig(m=3),
            n_seeds=1, episodes_per_seed=2, base_seed=17, baseline_mean=0.0))
        pgd_s = eval_attack(ExperimentConfig(
            checkpoint=quick_checkpoint, method="pgd_state",
            budget=PerturbationBudget(total, 0.0), attack=AttackConfig(m=3),
            n_seeds=1, episodes_per_seed=2, base_seed=17, baseline_mean=0.0))
        da = abs(cells[0]["mean_reward"] - pgd_a["mean_reward"])
        ds = abs(cells[-1]["mean_reward"] - pgd_s["mean_reward"])
        worst = max(worst, da, ds)
        assert da <= 1e-9
        assert ds <= 1e-9
    report(9, f"55 cells complete; endpoint deviation max {worst:.2e}")


def test_criterion_10_m3ddpg_reduction():
    """Adversarial training at eps_adv = 0 is bitwise identical to vanilla
    training under a shared seed over 10k steps."""
    steps = 10_000
    vanilla = train("maddpg", "pp_3a",
                    TrainConfig.maddpg_defaults(total_steps=steps), seed=3)
    reduced = train_m3ddpg("pp_3a",
                           M3ddpgConfig.maddpg_defaults(total_steps=steps,
                                                        eps_adv=0.0), seed=3)
    assert vanilla.curve == reduced.curve
    assert [n for n, _ in vanilla.tensors] == [n for n, _ in reduced.tensors]
    blob_v = b"".join(t.tobytes() for _, t in vanilla.tensors)
    blob_r = b"".join(t.tobytes() for _, t in reduced.tensors)
    assert blob_v == blob_r
    report(10, f"10k-step runs byte-identical across "
               f"{len(vanilla.tensors)} tensors ({len(blob_v)} blob bytes)")


def test_invariant_hlf_monotone_trend(trained_checkpoint):
    """Sign-gradient ascent is not strictly monotone, but on a trained model
    at least 90% of iteration-to-iteration loss transitions are
    non-decreasing, in both attack phases."""
    bundle = bundle_from_checkpoint(trained_checkpoint)
    from perturbench.harness import run_attacked_episode

    ok = total = 0
    for ep in range(8):
        _, steps = run_attacked_episode(
            bundle, "pp_3a", "saja", BUDGET, AttackConfig(m=3),
            env_seed=derive_seed(20, ep), attack_seed=derive_seed(21, ep),
            collect_steps=True)
        for s in steps:
            for key in ("loss_state", "loss_action"):
                trajectory = s["outcome"].diagnostics[key]
                for a, b in zip(trajectory, trajectory[1:]):
                    total += 1
                    if b >= a - 1e-9:
                        ok += 1
    assert ok / total >= 0.90
    print(f"\n[invariant] PASS - monotone loss transitions {ok}/{total} "
          f"= {ok / total:.1%}")


def test_invariant_evaluation_stability(trained_checkpoint):
    """Mean greedy reward over two disjoint 500-episode seed sets agrees
    within 5% (relative to the larger magnitude)."""
    s1 = evaluate_policy(trained_checkpoint, "pp_3a", episodes=500, seed=31)
    s2 = evaluate_policy(trained_checkpoint, "pp_3a", episodes=500, seed=32)
    scale = max(abs(s1["mean"]), abs(s2["mean"]))
    assert abs(s1["mean"] - s2["mean"]) <= 0.05 * scale
    print(f"\n[invariant] PASS - disjoint-seed means {s1['mean']:.2f} vs "
          f"{s2['mean']:.2f}")


def test_invariant_trained_beats_random(trained_checkpoint):
    """Episode return with the trained policy is positive; a random policy's
    is lower."""
    trained = evaluate_policy(trained_checkpoint, "pp_3a", episodes=200, seed=33)
    scen = make_scenario("pp_3a")
    rng = np.random.default_rng(34)

    def random_policy_return(ep):
        env = PredatorPreyEnv(scen)
        env.reset(derive_seed(35, ep))
        total = 0.0
        while not env.done:
            total += env.step(rng.uniform(-1, 1, (3, 2))).team_reward
        return total

    random_mean = float(np.mean([random_policy_return(e) for e in range(200)]))
    assert trained["mean"] > 0.0
    assert random_mean < trained["mean"]
    print(f"\n[invariant] PASS - trained {trained['mean']:.2f} > 0 > "
          f"random {random_mean:.2f}" if random_mean < 0 else
          f"\n[invariant] PASS - trained {trained['mean']:.2f} > "
          f"random {random_mean:.2f}")


def test_criterion_11_persistence_roundtrip(quick_checkpoint, tmp_path):
    """save -> load -> save is byte-identical; corrupted inputs are rejected
    with specific error codes."""
    p1, p2 = tmp_path / "a", tmp_path / "b"
    m1, b1 = save_checkpoint(quick_checkpoint, str(p1))
    loaded = load_checkpoint(str(p1))
    m2, b2 = save_checkpoint(loaded, str(p2))
    with open(m1, "rb") as fh:
        manifest_1 = fh.read()
    with open(m2, "rb") as fh:
        manifest_2 = fh.read()
    with open(b1, "rb") as fh:
        blob_1 = fh.read()
    with open(b2, "rb") as fh:
        blob_2 = fh.read()
    assert manifest_1 == manifest_2
    assert blob_1 == blob_2

    with open(b1, "wb") as fh:
        fh.write(blob_1[:-8])
    with pytest.raises(CheckpointError) as err:
        load_checkpoint(str(p1))
    assert err.value.code == "blob_length_mismatch"

    with open(b1, "wb") as fh:
        fh.write(blob_1)
    with open(m1) as fh:
        manifest = json.load(fh)
    manifest["format_version"] = 99
    with open(m1, "w") as fh:
        json.dump(manifest, fh)
    with pytest.raises(CheckpointError) as err:
        load_checkpoint(str(p1))
    assert err.value.code == "version_mismatch"
    report(11, f"round-trip byte-identical ({len(blob_1)} blob bytes); "
               f"corruptions rejected with specific codes")
