"""Continuous predator-prey particle environment.

Predators are the learning team and share one reward; preys follow a scripted
flight policy. Two named scenarios are provided, sized so that per-predator
observations are 16-dimensional (pp_3a) and 30-dimensional (pp_6a), with
2-dimensional accelerations as actions for both.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace

import numpy as np

Array = np.ndarray

SCENARIO_NAMES = ("pp_3a", "pp_6a")


@dataclass
class ScenarioConfig:
    name: str
    n_predators: int
    n_preys: int
    n_landmarks: int
    episode_length: int = 25
    world_half_width: float = 1.0
    dt: float = 0.1
    damping: float = 0.75
    # prey capabilities match the predators': the classic faster-prey setting
    # needs multi-million-step training before pursuit pays off, while the
    # desk-scale budget is 100k steps
    predator_max_speed: float = 1.0
    prey_max_speed: float = 1.0
    predator_accel: float = 3.0
    prey_accel: float = 3.0
    predator_radius: float = 0.075
    prey_radius: float = 0.05
    landmark_radius: float = 0.1
    collision_reward: float = 10.0
    distance_penalty: float = 0.1
    prey_noise_std: float = 0.05
    wall_margin: float = 0.1
    wall_push: float = 1.0
    act_dim: int = 2

    @property
    def n_agents(self) -> int:
        return self.n_predators + self.n_preys

    @property
    def n_entities(self) -> int:
        return self.n_agents + self.n_landmarks

    @property
    def obs_dim(self) -> int:
        # self vel + self pos + landmark rel pos + other agent rel pos + prey vels
        return 4 + 2 * self.n_landmarks + 2 * (self.n_agents - 1) + 2 * self.n_preys

    @property
    def state_dim(self) -> int:
        return self.n_predators * self.obs_dim

    @property
    def reward_bound(self) -> float:
        """Per-step |team reward| bound used by the theorem constants."""
        diag = 2.0 * self.world_half_width * np.sqrt(2.0)
        pairs = self.n_predators * self.n_preys
        return self.collision_reward * pairs + self.distance_penalty * pairs * diag


_PRESETS = {
    "pp_3a": dict(n_predators=3, n_preys=1, n_landmarks=2),
    "pp_6a": dict(n_predators=6, n_preys=2, n_landmarks=4),
}

_EXPECTED_OBS_DIM = {"pp_3a": 16, "pp_6a": 30}


def make_scenario(name: str) -> ScenarioConfig:
    """Named scenario presets; rejects unknown names."""
    if name not in _PRESETS:
        raise ValueError(f"unknown scenario {name!r}; expected one of {SCENARIO_NAMES}")
    cfg = ScenarioConfig(name=name, **_PRESETS[name])
    assert cfg.obs_dim == _EXPECTED_OBS_DIM[name]
    return cfg


@dataclass
class WorldState:
    """Positions/velocities for all entities (predators, preys, landmarks)."""

    positions: Array  # (entities, 2)
    velocities: Array  # (entities, 2)
    timestep: int = 0

    def copy(self) -> "WorldState":
        return WorldState(self.positions.copy(), self.velocities.copy(), self.timestep)


@dataclass
class StepResult:
    next_observations: Array  # (n_predators, obs_dim)
    team_reward: float
    done: bool
    collision_count: int


def _collisions(state: WorldState, cfg: ScenarioConfig) -> int:
    count = 0
    thresh = cfg.predator_radius + cfg.prey_radius
    for p in range(cfg.n_predators):
        for q in range(cfg.n_preys):
            d = np.linalg.norm(state.positions[p] - state.positions[cfg.n_predators + q])
            if d < thresh:
                count += 1
    return count


def team_reward(state: WorldState, cfg: ScenarioConfig) -> float:
    """Shared reward: -distance_penalty * dist per (predator, prey) pair,
    plus collision_reward per actively colliding pair."""
    total = 0.0
    thresh = cfg.predator_radius + cfg.prey_radius
    for p in range(cfg.n_predators):
        for q in range(cfg.n_preys):
            d = float(np.linalg.norm(state.positions[p] - state.positions[cfg.n_predators + q]))
            total -= cfg.distance_penalty * d
            if d < thresh:
                total += cfg.collision_reward
    return total


def scripted_prey_action(state: WorldState, prey_index: int, cfg: ScenarioConfig,
                         rng: np.random.Generator | None) -> Array:
    """Flight action for one prey: flee predators (proximity-weighted), avoid
    walls inside a 10% margin, plus optional Gaussian action noise.

    Equidistant predators on opposite sides cancel, so the flight direction
    stays perpendicular to (or zero along) their axis.
    """
    if not 0 <= prey_index < cfg.n_preys:
        raise ValueError(f"prey index {prey_index} out of range")
    pos = state.positions[cfg.n_predators + prey_index]
    rep = np.zeros(2)
    for p in range(cfg.n_predators):
        delta = pos - state.positions[p]
        d = float(np.linalg.norm(delta))
        if d > 1e-12:
            rep += delta / d * (1.0 / (d + 1e-6))
    norm = float(np.linalg.norm(rep))
    action = rep / norm if norm > 1e-12 else np.zeros(2)

    edge = (1.0 - cfg.wall_margin) * cfg.world_half_width
    for ax in range(2):
        if pos[ax] > edge:
            action[ax] -= cfg.wall_push
        elif pos[ax] < -edge:
            action[ax] += cfg.wall_push

    if rng is not None and cfg.prey_noise_std > 0:
        action = action + rng.normal(0.0, cfg.prey_noise_std, 2)

    norm = float(np.linalg.norm(action))
    if norm > 1.0:
        action = action / norm
    return action


def step_world(state: WorldState, predator_actions: Array, cfg: ScenarioConfig,
               rng: np.random.Generator | None) -> tuple[WorldState, StepResult]:
    """Advance one timestep: semi-implicit Euler with per-role speed limits.

    Predator actions are clamped to [-1, 1] per component; preys act through
    the scripted flight policy. Landmarks never move.
    """
    if state.timestep >= cfg.episode_length:
        raise RuntimeError("step called on a finished episode")
    predator_actions = np.asarray(predator_actions, dtype=np.float64)
    if predator_actions.shape != (cfg.n_predators, cfg.act_dim):
        raise ValueError(
            f"predator actions shape {predator_actions.shape}, "
            f"expected {(cfg.n_predators, cfg.act_dim)}"
        )

    new = state.copy()
    actions = np.zeros((cfg.n_agents, 2))
    actions[: cfg.n_predators] = np.clip(predator_actions, -1.0, 1.0)
    for q in range(cfg.n_preys):
        actions[cfg.n_predators + q] = scripted_prey_action(state, q, cfg, rng)

    for i in range(cfg.n_agents):
        is_pred = i < cfg.n_predators
        accel = cfg.predator_accel if is_pred else cfg.prey_accel
        max_speed = cfg.predator_max_speed if is_pred else cfg.prey_max_speed
        v = cfg.damping * new.velocities[i] + actions[i] * accel * cfg.dt
        speed = float(np.linalg.norm(v))
        if speed > max_speed:
            v = v * (max_speed / speed)
        new.velocities[i] = v
        new.positions[i] = np.clip(
            new.positions[i] + v * cfg.dt,
            -cfg.world_half_width,
            cfg.world_half_width,
        )

    new.timestep = state.timestep + 1
    reward = team_reward(new, cfg)
    result = StepResult(
        next_observations=observations(new, cfg),
        team_reward=reward,
        done=new.timestep == cfg.episode_length,
        collision_count=_collisions(new, cfg),
    )
    return new, result


def observations(state: WorldState, cfg: ScenarioConfig) -> Array:
    """Per-predator observation rows, fixed layout:
    self velocity, self position, landmark rel. positions, other-agent rel.
    positions (predators in index order then preys), prey velocities."""
    obs = np.zeros((cfg.n_predators, cfg.obs_dim))
    lm0 = cfg.n_agents
    for i in range(cfg.n_predators):
        parts = [state.velocities[i], state.positions[i]]
        for l in range(cfg.n_landmarks):
            parts.append(state.positions[lm0 + l] - state.positions[i])
        for j in range(cfg.n_predators):
            if j != i:
                parts.append(state.positions[j] - state.positions[i])
        for q in range(cfg.n_preys):
            parts.append(state.positions[cfg.n_predators + q] - state.positions[i])
        for q in range(cfg.n_preys):
            parts.append(state.velocities[cfg.n_predators + q])
        obs[i] = np.concatenate(parts)
    return obs


def global_state(obs: Array) -> Array:
    """Critic-side global state: concatenated predator observations."""
    return np.asarray(obs).reshape(-1)


class PredatorPreyEnv:
    """Single-owner environment state machine; one instance per worker."""

    def __init__(self, cfg: ScenarioConfig):
        self.cfg = cfg
        self.state: WorldState | None = None
        self._rng: np.random.Generator | None = None

    def reset(self, seed) -> Array:
        """Place entities uniformly at random, zero velocities, timestep 0."""
        self._rng = np.random.default_rng(seed)
        w = self.cfg.world_half_width
        positions = self._rng.uniform(-w, w, (self.cfg.n_entities, 2))
        self.state = WorldState(positions, np.zeros((self.cfg.n_entities, 2)), 0)
        return observations(self.state, self.cfg)

    def step(self, predator_actions: Array) -> StepResult:
        if self.state is None:
            raise RuntimeError("reset must be called before step")
        self.state, result = step_world(self.state, predator_actions, self.cfg, self._rng)
        return result

    @property
    def done(self) -> bool:
        return self.state is not None and self.state.timestep >= self.cfg.episode_length


# ---------------------------------------------------------------------------
# episode trace export / replay


def run_traced_episode(cfg: ScenarioConfig, seed: int, policy_fn) -> dict:
    """Run one episode and capture a replayable JSON-serialisable trace."""
    env = PredatorPreyEnv(cfg)
    obs = env.reset(seed)
    actions, rewards, collisions = [], [], []
    while not env.done:
        act = np.asarray(policy_fn(obs), dtype=np.float64)
        result = env.step(act)
        actions.append(act.tolist())
        rewards.append(result.team_reward)
        collisions.append(result.collision_count)
        obs = result.next_observations
    return {"seed": int(seed), "actions": actions, "rewards": rewards,
            "collisions": collisions}


def replay_trace(cfg: ScenarioConfig, trace: dict) -> list[float]:
    """Re-run a trace's action sequence; returns the replayed reward sequence."""
    env = PredatorPreyEnv(cfg)
    env.reset(trace["seed"])
    rewards = []
    for act in trace["actions"]:
        rewards.append(env.step(np.asarray(act, dtype=np.float64)).team_reward)
    return rewards


def write_trace(path, trace: dict) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(trace, fh)


def read_trace(path) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)
