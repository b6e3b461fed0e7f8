"""Centralized-training / decentralized-execution actor-critic training.

Both algorithms share the same loop: explore with Gaussian action noise,
store transitions in an episode-structured replay buffer, and run one critic
and one actor update per environment step once the buffer holds a batch.
MADDPG regresses a shared multi-head critic onto lambda-mixed targets;
FACMAC regresses per-agent critics through a monotone mixing network onto
1-step targets.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field, replace

import numpy as np

from . import autodiff as ad
from .autodiff import AdamState, Array, Mlp, Tape, adam_step, clip_grad_norm, soft_update
from .env import PredatorPreyEnv, ScenarioConfig, make_scenario
from .models import (
    ActorSet,
    FacmacCritic,
    FacmacCriticScalar,
    MaddpgCriticScalar,
    PolicyBundle,
    SharedCritic,
    act_explore,
    act_greedy,
)
from .seeding import derive_seed, make_rng

ALGOS = ("maddpg", "facmac")


class TrainingDiverged(RuntimeError):
    """Raised when a loss or gradient stops being finite."""


@dataclass
class TrainConfig:
    total_steps: int = 100_000
    gamma: float = 0.85
    tau: float = 0.001
    batch_size: int = 32
    actor_lr: float = 0.01
    critic_lr: float = 0.05
    adam_eps: float = 1e-8
    explore_noise_std: float = 0.1
    td_lambda: float = 0.0
    grad_clip: float = 0.5
    weight_decay: float = 0.0
    buffer_capacity: int = 5000
    eval_interval: int = 2000
    eval_episodes: int = 10
    actor_hidden: tuple = (64, 64)
    critic_hidden: tuple = (64, 64)
    mixer_embed: int = 64

    def __post_init__(self):
        if not 0.0 <= self.gamma < 1.0:
            raise ValueError("gamma must lie in [0, 1)")
        if self.batch_size < 1:
            raise ValueError("batch_size must be at least 1")

    @classmethod
    def maddpg_defaults(cls, **overrides) -> "TrainConfig":
        base = dict(actor_lr=0.01, critic_lr=0.05, adam_eps=1e-8,
                    td_lambda=0.8, weight_decay=1e-4)
        base.update(overrides)
        return cls(**base)

    @classmethod
    def facmac_defaults(cls, **overrides) -> "TrainConfig":
        base = dict(actor_lr=0.05, critic_lr=0.01, adam_eps=0.05,
                    td_lambda=0.0, weight_decay=0.0)
        base.update(overrides)
        return cls(**base)

    @classmethod
    def defaults_for(cls, algo: str, **overrides) -> "TrainConfig":
        if algo in ("maddpg", "m3ddpg"):
            return cls.maddpg_defaults(**overrides)
        if algo == "facmac":
            return cls.facmac_defaults(**overrides)
        raise ValueError(f"unknown algorithm {algo!r}")


# ---------------------------------------------------------------------------
# replay buffer


@dataclass
class _Episode:
    obs: Array        # (T, n, d)
    actions: Array    # (T, n, a)
    rewards: Array    # (T,)
    next_obs: Array   # (T, n, d)

    @property
    def length(self) -> int:
        return self.rewards.shape[0]


@dataclass
class Batch:
    obs: Array
    actions: Array
    rewards: Array
    next_obs: Array
    dones: Array
    tail_rewards: Array | None = None
    tail_next_obs: Array | None = None
    tail_len: Array | None = None

    @property
    def size(self) -> int:
        return self.rewards.shape[0]


class ReplayBuffer:
    """Ring buffer of transitions, grouped by episode so multi-step targets
    can look ahead to each episode's terminal step. FIFO eviction is by whole
    episode; sampling is uniform over stored transitions, without replacement
    within a batch."""

    def __init__(self, capacity: int = 5000):
        if capacity < 1:
            raise ValueError("capacity must be positive")
        self.capacity = capacity
        self._episodes: deque[_Episode] = deque()
        self._open: list[tuple] = []
        self._size = 0

    def __len__(self) -> int:
        return self._size

    def add(self, obs, action, reward, next_obs, done: bool) -> None:
        self._open.append((np.array(obs), np.array(action), float(reward), np.array(next_obs)))
        if done:
            self._episodes.append(_Episode(
                np.stack([t[0] for t in self._open]),
                np.stack([t[1] for t in self._open]),
                np.array([t[2] for t in self._open]),
                np.stack([t[3] for t in self._open]),
            ))
            self._size += len(self._open)
            self._open = []
            while self._size > self.capacity and len(self._episodes) > 1:
                self._size -= self._episodes.popleft().length
            if self._size > self.capacity and self._episodes:
                # a single episode larger than capacity still counts in full
                pass

    def flat_lengths(self) -> Array:
        return np.array([ep.length for ep in self._episodes], dtype=np.int64)

    def locate(self, flat_index: int) -> tuple[int, int]:
        lengths = self.flat_lengths()
        bounds = np.cumsum(lengths)
        ep = int(np.searchsorted(bounds, flat_index, side="right"))
        t = int(flat_index - (bounds[ep - 1] if ep > 0 else 0))
        return ep, t

    def sample_indices(self, batch_size: int, rng: np.random.Generator) -> Array:
        if batch_size > self._size:
            raise ValueError("batch size exceeds stored transitions")
        return rng.choice(self._size, size=batch_size, replace=False)

    def sample(self, batch_size: int, rng: np.random.Generator,
               with_tails: bool = False) -> Batch:
        flat = self.sample_indices(batch_size, rng)
        spots = [self.locate(int(i)) for i in flat]
        eps = [self._episodes[e] for e, _ in spots]
        obs = np.stack([ep.obs[t] for ep, (_, t) in zip(eps, spots)])
        actions = np.stack([ep.actions[t] for ep, (_, t) in zip(eps, spots)])
        rewards = np.array([ep.rewards[t] for ep, (_, t) in zip(eps, spots)])
        next_obs = np.stack([ep.next_obs[t] for ep, (_, t) in zip(eps, spots)])
        dones = np.array([t == ep.length - 1 for ep, (_, t) in zip(eps, spots)])
        batch = Batch(obs, actions, rewards, next_obs, dones)
        if with_tails:
            tail_len = np.array([ep.length - t for ep, (_, t) in zip(eps, spots)])
            L = int(tail_len.max())
            B = batch_size
            n, d = obs.shape[1], obs.shape[2]
            batch.tail_rewards = np.zeros((B, L))
            batch.tail_next_obs = np.zeros((B, L, n, d))
            batch.tail_len = tail_len
            for b, (ep, (_, t)) in enumerate(zip(eps, spots)):
                h = ep.length - t
                batch.tail_rewards[b, :h] = ep.rewards[t:]
                batch.tail_next_obs[b, :h] = ep.next_obs[t:]
        return batch


# ---------------------------------------------------------------------------
# targets


def maddpg_td_target(critic_target: Mlp, actors_target: list[Mlp], batch: Batch,
                     gamma: float) -> Array:
    """1-step per-agent targets y_i = r + gamma * Q'_i(s', mu'(o')), with zero
    bootstrap at terminal transitions. Returns (B, n)."""
    B = batch.size
    next_states = batch.next_obs.reshape(B, -1)
    next_acts = np.concatenate(
        [net.forward(batch.next_obs[:, i, :]) for i, net in enumerate(actors_target)],
        axis=1,
    )
    q_next = critic_target.forward(np.concatenate([next_states, next_acts], axis=1))
    mask = 1.0 - batch.dones.astype(np.float64)
    return batch.rewards[:, None] + gamma * mask[:, None] * q_next


def lambda_td_targets(batch: Batch, gamma: float, lam: float,
                      bootstrap_fn) -> Array:
    """Truncated lambda-return targets over each sampled transition's episode
    tail: G_t = r_t + gamma * ((1-lam) * Qhat_{t+1} + lam * G_{t+1}), with the
    terminal step contributing its reward only.

    bootstrap_fn maps stacked next-observation rows (R, n, d) to per-agent
    bootstrap values (R, n) under the target networks.
    """
    if batch.tail_rewards is None:
        raise ValueError("batch was sampled without episode tails")
    B, L = batch.tail_rewards.shape
    tail_len = batch.tail_len
    n = batch.obs.shape[1]

    boot_mask = np.arange(L)[None, :] < (tail_len - 1)[:, None]  # (B, L)
    rows = batch.tail_next_obs[boot_mask]  # (R, n, d)
    qhat = np.zeros((B, L, n))
    if rows.shape[0]:
        qhat[boot_mask] = bootstrap_fn(rows)

    G = np.zeros((B, n))
    for j in range(L - 1, -1, -1):
        alive = j < tail_len
        terminal = j == tail_len - 1
        r_j = batch.tail_rewards[:, j][:, None]
        cont = r_j + gamma * ((1.0 - lam) * qhat[:, j] + lam * G)
        G = np.where(alive[:, None], np.where(terminal[:, None], r_j, cont), G)
    return G


# ---------------------------------------------------------------------------
# models


class MaddpgModel:
    algo = "maddpg"

    def __init__(self, scenario: ScenarioConfig, cfg: TrainConfig,
                 rng: np.random.Generator):
        self.scenario = scenario
        self.cfg = cfg
        n, d, a = scenario.n_predators, scenario.obs_dim, scenario.act_dim
        self.actors = ActorSet.create(n, d, a, cfg.actor_hidden, rng)
        self.critic = SharedCritic.create(scenario.state_dim, n, a, cfg.critic_hidden, rng)
        self.actor_opts = [AdamState(lr=cfg.actor_lr, eps=cfg.adam_eps) for _ in range(n)]
        self.critic_opt = AdamState(lr=cfg.critic_lr, eps=cfg.adam_eps,
                                    weight_decay=cfg.weight_decay)

    # -- hooks shared with the adversarially-trained variant

    @property
    def needs_tails(self) -> bool:
        return self.cfg.td_lambda > 0.0

    def _bootstrap_joint_actions(self, states: Array, obs_rows: Array) -> Array:
        """Joint target-actor actions (R, n*a) for bootstrap states."""
        return np.concatenate(
            [net.forward(obs_rows[:, i, :]) for i, net in enumerate(self.actors.target)],
            axis=1,
        )

    def _actor_base_actions(self, batch: Batch) -> Array:
        """Joint actions filling the non-updated slots of the policy gradient."""
        return batch.actions

    # -- updates

    def _bootstrap_values(self, rows: Array) -> Array:
        R = rows.shape[0]
        states = rows.reshape(R, -1)
        joint = self._bootstrap_joint_actions(states, rows)
        return self.critic.target.forward(np.concatenate([states, joint], axis=1))

    def td_targets(self, batch: Batch) -> Array:
        if self.cfg.td_lambda > 0.0 and batch.tail_rewards is not None:
            return lambda_td_targets(batch, self.cfg.gamma, self.cfg.td_lambda,
                                     self._bootstrap_values)
        B = batch.size
        states = batch.next_obs.reshape(B, -1)
        joint = self._bootstrap_joint_actions(states, batch.next_obs)
        q_next = self.critic.target.forward(np.concatenate([states, joint], axis=1))
        mask = 1.0 - batch.dones.astype(np.float64)
        return batch.rewards[:, None] + self.cfg.gamma * mask[:, None] * q_next

    def critic_update(self, batch: Batch) -> float:
        y = self.td_targets(batch)
        B = batch.size
        x = np.concatenate([batch.obs.reshape(B, -1), batch.actions.reshape(B, -1)], axis=1)
        tape = Tape()
        q, leaves = self.critic.online.forward_var(tape, x)
        loss = ad.mean_all(ad.square(ad.sub(q, y)))
        if not np.isfinite(loss.data):
            raise TrainingDiverged(f"critic loss is not finite: {loss.data}")
        tape.backward(loss)
        grads = clip_grad_norm(leaves.grads(), self.cfg.grad_clip)
        adam_step(self.critic.online, grads, self.critic_opt)
        return float(loss.data)

    def actor_update(self, batch: Batch) -> float:
        base = self._actor_base_actions(batch)
        B = batch.size
        states = batch.obs.reshape(B, -1)
        losses = []
        for i, net in enumerate(self.actors.online):
            tape = Tape()
            a_i, leaves = net.forward_var(tape, batch.obs[:, i, :])
            parts = [a_i if j == i else base[:, j, :] for j in range(len(self.actors.online))]
            x = ad.hconcat([states] + parts)
            q, _ = self.critic.online.forward_var(tape, x)
            loss = ad.neg(ad.mean_all(ad.hslice(q, i, i + 1)))
            if not np.isfinite(loss.data):
                raise TrainingDiverged(f"actor {i} loss is not finite: {loss.data}")
            tape.backward(loss)
            grads = clip_grad_norm(leaves.grads(), self.cfg.grad_clip)
            adam_step(net, grads, self.actor_opts[i])
            losses.append(float(loss.data))
        return float(np.mean(losses))

    def update_targets(self) -> None:
        tau = self.cfg.tau
        soft_update(self.critic.target, self.critic.online, tau)
        for tgt, src in zip(self.actors.target, self.actors.online):
            soft_update(tgt, src, tau)

    # -- persistence / evaluation surface

    def _actor_tensors(self) -> list[tuple[str, Array]]:
        out = []
        for prefix, nets in (("actor", self.actors.online), ("actor_target", self.actors.target)):
            for i, net in enumerate(nets):
                for l in range(len(net.weights)):
                    out.append((f"{prefix}/{i}/w{l}", net.weights[l]))
                    out.append((f"{prefix}/{i}/b{l}", net.biases[l]))
        return out

    def state_tensors(self) -> list[tuple[str, Array]]:
        out = self._actor_tensors()
        for prefix, net in (("critic", self.critic.online), ("critic_target", self.critic.target)):
            for l in range(len(net.weights)):
                out.append((f"{prefix}/w{l}", net.weights[l]))
                out.append((f"{prefix}/b{l}", net.biases[l]))
        return out

    def meta(self) -> dict:
        return {
            "actor_hidden": list(self.cfg.actor_hidden),
            "critic_hidden": list(self.cfg.critic_hidden),
        }

    def bundle(self) -> PolicyBundle:
        return PolicyBundle(
            actors=self.actors.online,
            critic_scalar=MaddpgCriticScalar(self.critic.online, self.scenario.n_predators),
            n_agents=self.scenario.n_predators,
            obs_dim=self.scenario.obs_dim,
            act_dim=self.scenario.act_dim,
        )


class FacmacModel:
    algo = "facmac"
    needs_tails = False

    def __init__(self, scenario: ScenarioConfig, cfg: TrainConfig,
                 rng: np.random.Generator):
        self.scenario = scenario
        self.cfg = cfg
        n, d, a = scenario.n_predators, scenario.obs_dim, scenario.act_dim
        self.actors = ActorSet.create(n, d, a, cfg.actor_hidden, rng)
        self.critic = FacmacCritic.create(n, d, a, scenario.state_dim,
                                          cfg.critic_hidden, cfg.mixer_embed, rng)
        self.actor_opts = [AdamState(lr=cfg.actor_lr, eps=cfg.adam_eps) for _ in range(n)]
        self.critic_opt = AdamState(lr=cfg.critic_lr, eps=cfg.adam_eps,
                                    weight_decay=cfg.weight_decay)

    def td_targets(self, batch: Batch) -> Array:
        B = batch.size
        next_states = batch.next_obs.reshape(B, -1)
        qs = np.concatenate(
            [
                net.forward(np.concatenate(
                    [batch.next_obs[:, i, :], self.actors.target[i].forward(batch.next_obs[:, i, :])],
                    axis=1,
                ))
                for i, net in enumerate(self.critic.agents_target)
            ],
            axis=1,
        )
        q_next = self.critic.mixer_target.forward(qs, next_states)[:, 0]
        mask = 1.0 - batch.dones.astype(np.float64)
        return (batch.rewards + self.cfg.gamma * mask * q_next)[:, None]

    def critic_update(self, batch: Batch) -> float:
        y = self.td_targets(batch)
        B = batch.size
        states = batch.obs.reshape(B, -1)
        tape = Tape()
        agent_leaves = []
        qs = []
        for i, net in enumerate(self.critic.agents):
            x = np.concatenate([batch.obs[:, i, :], batch.actions[:, i, :]], axis=1)
            q, leaves = net.forward_var(tape, x)
            agent_leaves.append(leaves)
            qs.append(q)
        qtot, mixer_leaves = self.critic.mixer.forward_var(tape, ad.hconcat(qs), states)
        loss = ad.mean_all(ad.square(ad.sub(qtot, y)))
        if not np.isfinite(loss.data):
            raise TrainingDiverged(f"critic loss is not finite: {loss.data}")
        tape.backward(loss)
        grads = []
        for leaves in agent_leaves:
            grads.extend(leaves.grads())
        grads.extend(
            v.grad if v.grad is not None else np.zeros_like(v.data)
            for v in self.critic.mixer.param_leaves(mixer_leaves)
        )
        grads = clip_grad_norm(grads, self.cfg.grad_clip)
        adam_step(self.critic.params(), grads, self.critic_opt)
        return float(loss.data)

    def actor_update(self, batch: Batch) -> float:
        B = batch.size
        states = batch.obs.reshape(B, -1)
        tape = Tape()
        all_leaves = []
        qs = []
        for i, (actor, critic) in enumerate(zip(self.actors.online, self.critic.agents)):
            a_i, leaves = actor.forward_var(tape, batch.obs[:, i, :])
            all_leaves.append(leaves)
            q, _ = critic.forward_var(tape, ad.hconcat([batch.obs[:, i, :], a_i]))
            qs.append(q)
        qtot, _ = self.critic.mixer.forward_var(tape, ad.hconcat(qs), states)
        loss = ad.neg(ad.mean_all(qtot))
        if not np.isfinite(loss.data):
            raise TrainingDiverged(f"actor loss is not finite: {loss.data}")
        tape.backward(loss)
        grads = []
        for leaves in all_leaves:
            grads.extend(leaves.grads())
        grads = clip_grad_norm(grads, self.cfg.grad_clip)
        offset = 0
        for i, net in enumerate(self.actors.online):
            k = len(net.params())
            adam_step(net, grads[offset:offset + k], self.actor_opts[i])
            offset += k
        return float(loss.data)

    def update_targets(self) -> None:
        tau = self.cfg.tau
        for tgt, src in zip(self.critic.agents_target, self.critic.agents):
            soft_update(tgt, src, tau)
        soft_update(self.critic.mixer_target.params(), self.critic.mixer.params(), tau)
        for tgt, src in zip(self.actors.target, self.actors.online):
            soft_update(tgt, src, tau)

    def _actor_tensors(self) -> list[tuple[str, Array]]:
        out = []
        for prefix, nets in (("actor", self.actors.online), ("actor_target", self.actors.target)):
            for i, net in enumerate(nets):
                for l in range(len(net.weights)):
                    out.append((f"{prefix}/{i}/w{l}", net.weights[l]))
                    out.append((f"{prefix}/{i}/b{l}", net.biases[l]))
        return out

    def state_tensors(self) -> list[tuple[str, Array]]:
        out = self._actor_tensors()
        for prefix, nets in (("critic", self.critic.agents), ("critic_target", self.critic.agents_target)):
            for i, net in enumerate(nets):
                for l in range(len(net.weights)):
                    out.append((f"{prefix}/{i}/w{l}", net.weights[l]))
                    out.append((f"{prefix}/{i}/b{l}", net.biases[l]))
        for prefix, mixer in (("mixer", self.critic.mixer), ("mixer_target", self.critic.mixer_target)):
            for part in ("hyper_w1", "hyper_b1", "hyper_w2", "hyper_v"):
                net = getattr(mixer, part)
                for l in range(len(net.weights)):
                    out.append((f"{prefix}/{part}/w{l}", net.weights[l]))
                    out.append((f"{prefix}/{part}/b{l}", net.biases[l]))
        return out

    def meta(self) -> dict:
        return {
            "actor_hidden": list(self.cfg.actor_hidden),
            "critic_hidden": list(self.cfg.critic_hidden),
            "mixer_embed": self.cfg.mixer_embed,
        }

    def bundle(self) -> PolicyBundle:
        return PolicyBundle(
            actors=self.actors.online,
            critic_scalar=FacmacCriticScalar(self.critic),
            n_agents=self.scenario.n_predators,
            obs_dim=self.scenario.obs_dim,
            act_dim=self.scenario.act_dim,
        )


# ---------------------------------------------------------------------------
# checkpointing surface


@dataclass
class Checkpoint:
    algo: str
    scenario: str
    meta: dict
    tensors: list[tuple[str, Array]]
    curve: list[tuple[int, float, float]] = field(default_factory=list)

    def tensor_dict(self) -> dict[str, Array]:
        return dict(self.tensors)


def checkpoint_from_model(model, curve=None, algo: str | None = None) -> Checkpoint:
    return Checkpoint(
        algo=algo or model.algo,
        scenario=model.scenario.name,
        meta=model.meta(),
        tensors=[(name, arr.copy()) for name, arr in model.state_tensors()],
        curve=list(curve or []),
    )


def build_model(algo: str, scenario: ScenarioConfig, cfg: TrainConfig,
                rng: np.random.Generator):
    if algo == "maddpg":
        return MaddpgModel(scenario, cfg, rng)
    if algo == "facmac":
        return FacmacModel(scenario, cfg, rng)
    raise ValueError(f"unknown algorithm {algo!r}")


def model_from_checkpoint(ckpt: Checkpoint):
    """Rebuild a model whose tensors are loaded from a checkpoint."""
    from .m3ddpg import M3ddpgConfig, M3ddpgModel  # local import avoids a cycle

    scenario = make_scenario(ckpt.scenario)
    meta = ckpt.meta
    if ckpt.algo == "m3ddpg":
        cfg = M3ddpgConfig.maddpg_defaults()
    else:
        cfg = TrainConfig.defaults_for(ckpt.algo)
    cfg.actor_hidden = tuple(meta.get("actor_hidden", cfg.actor_hidden))
    cfg.critic_hidden = tuple(meta.get("critic_hidden", cfg.critic_hidden))
    cfg.mixer_embed = int(meta.get("mixer_embed", cfg.mixer_embed))
    rng = np.random.default_rng(0)
    if ckpt.algo == "m3ddpg":
        model = M3ddpgModel(scenario, cfg, rng)
    else:
        model = build_model(ckpt.algo, scenario, cfg, rng)
    stored = ckpt.tensor_dict()
    expected = [name for name, _ in model.state_tensors()]
    if set(expected) != set(stored):
        raise ValueError("checkpoint tensors do not match the model architecture")
    for name, arr in model.state_tensors():
        src = stored[name]
        if src.shape != arr.shape:
            raise ValueError(f"tensor {name} has shape {src.shape}, expected {arr.shape}")
        arr[...] = src
    return model


def bundle_from_checkpoint(ckpt: Checkpoint) -> PolicyBundle:
    return model_from_checkpoint(ckpt).bundle()


# ---------------------------------------------------------------------------
# training loop and evaluation


def _greedy_episode(bundle: PolicyBundle, scenario: ScenarioConfig, env_seed: int) -> float:
    env = PredatorPreyEnv(scenario)
    obs = env.reset(env_seed)
    total = 0.0
    while not env.done:
        result = env.step(act_greedy(bundle.actors, obs))
        total += result.team_reward
        obs = result.next_observations
    return total


def evaluate_policy(target, scenario, episodes: int, seed: int) -> dict:
    """Greedy evaluation without noise or attacks: mean/std of episodic team
    reward over `episodes` runs, deterministically seeded."""
    if episodes < 1:
        raise ValueError("episodes must be at least 1")
    scenario = make_scenario(scenario) if isinstance(scenario, str) else scenario
    if isinstance(target, Checkpoint):
        bundle = bundle_from_checkpoint(target)
    elif isinstance(target, PolicyBundle):
        bundle = target
    else:
        bundle = target.bundle()
    rewards = np.array([
        _greedy_episode(bundle, scenario, derive_seed(seed, "episode", i))
        for i in range(episodes)
    ])
    return {"mean": float(rewards.mean()), "std": float(rewards.std()),
            "rewards": rewards.tolist()}


def run_training_loop(model, scenario: ScenarioConfig, cfg: TrainConfig, seed: int,
                      algo_tag: str | None = None) -> Checkpoint:
    """Shared explore/update loop; identical RNG consumption for every model
    class so zero-strength variants reduce bitwise to their base algorithm."""
    ss = np.random.SeedSequence(seed)
    _, explore_ss, sample_ss = ss.spawn(3)
    explore_rng = np.random.default_rng(explore_ss)
    sample_rng = np.random.default_rng(sample_ss)

    env = PredatorPreyEnv(scenario)
    episode_idx = 0
    obs = env.reset(derive_seed(seed, "env", episode_idx))
    buffer = ReplayBuffer(cfg.buffer_capacity)
    curve: list[tuple[int, float, float]] = []

    snapshots = set(range(cfg.eval_interval, cfg.total_steps + 1, cfg.eval_interval))
    snapshots.add(cfg.total_steps)

    for step in range(1, cfg.total_steps + 1):
        action = act_explore(model.actors.online, obs, cfg.explore_noise_std, explore_rng)
        result = env.step(action)
        buffer.add(obs, action, result.team_reward, result.next_observations, result.done)
        obs = result.next_observations
        if result.done:
            episode_idx += 1
            obs = env.reset(derive_seed(seed, "env", episode_idx))
        if len(buffer) >= cfg.batch_size:
            batch = buffer.sample(cfg.batch_size, sample_rng, with_tails=model.needs_tails)
            model.critic_update(batch)
            model.actor_update(batch)
            model.update_targets()
        if step in snapshots:
            stats = evaluate_policy(model.bundle(), scenario, cfg.eval_episodes,
                                    derive_seed(seed, "eval", step))
            curve.append((step, stats["mean"], stats["std"]))
    return checkpoint_from_model(model, curve, algo=algo_tag)


def train(algo: str, scenario, cfg: TrainConfig | None = None, seed: int = 0) -> Checkpoint:
    """Full training run for one of the two base algorithms."""
    if algo not in ALGOS:
        raise ValueError(f"unknown algorithm {algo!r}; expected one of {ALGOS}")
    scenario = make_scenario(scenario) if isinstance(scenario, str) else scenario
    cfg = cfg if cfg is not None else TrainConfig.defaults_for(algo)
    init_rng = np.random.default_rng(np.random.SeedSequence(seed).spawn(3)[0])
    model = build_model(algo, scenario, cfg, init_rng)
    return run_training_loop(model, scenario, cfg, seed)
