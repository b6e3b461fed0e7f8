"""Minimax adversarial training on the shared-critic MADDPG variant.

Critic targets bootstrap from a joint target action nudged along the negative
target-critic gradient; actor updates evaluate each agent's fresh action
inside an adversarially perturbed joint action. At eps_adv = 0 every code
path reduces bitwise to vanilla MADDPG.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Array, Mlp, Tape
from .env import ScenarioConfig, make_scenario
from .training import (
    Batch,
    Checkpoint,
    MaddpgModel,
    TrainConfig,
    run_training_loop,
)


@dataclass
class M3ddpgConfig(TrainConfig):
    eps_adv: float = 0.001

    def __post_init__(self):
        super().__post_init__()
        if self.eps_adv < 0:
            raise ValueError("eps_adv must be non-negative")


def perturb_joint_target_action(critic_target: Mlp, s_next: Array, a_next: Array,
                                eps_adv: float) -> Array:
    """a' + delta with delta = -eps_adv * grad_a' sum_i Q'_i(s', a').

    No projection is applied beyond the eps_adv scale factor. The zero-strength
    case is the identity.
    """
    a_next = np.asarray(a_next, dtype=np.float64)
    if eps_adv == 0.0:
        return a_next.copy()
    s_next = np.asarray(s_next, dtype=np.float64)
    single = a_next.ndim == 1
    s2 = s_next[None, :] if single else s_next
    a2 = a_next[None, :] if single else a_next
    tape = Tape()
    a_leaf = tape.leaf(a2.copy())
    q, _ = critic_target.forward_var(tape, ad.hconcat([s2, a_leaf]))
    tape.backward(ad.sum_all(q))
    grad = a_leaf.grad if a_leaf.grad is not None else np.zeros_like(a2)
    if not np.all(np.isfinite(grad)):
        raise FloatingPointError("non-finite gradient while perturbing target action")
    out = a2 - eps_adv * grad
    return out[0] if single else out


class M3ddpgModel(MaddpgModel):
    algo = "m3ddpg"

    def __init__(self, scenario: ScenarioConfig, cfg: M3ddpgConfig,
                 rng: np.random.Generator):
        super().__init__(scenario, cfg, rng)
        self.eps_adv = cfg.eps_adv

    def _bootstrap_joint_actions(self, states: Array, obs_rows: Array) -> Array:
        joint = super()._bootstrap_joint_actions(states, obs_rows)
        if self.eps_adv == 0.0:
            return joint
        return perturb_joint_target_action(self.critic.target, states, joint, self.eps_adv)

    def _actor_base_actions(self, batch: Batch) -> Array:
        if self.eps_adv == 0.0:
            return batch.actions
        B = batch.size
        states = batch.obs.reshape(B, -1)
        acts = batch.actions.reshape(B, -1)
        tape = Tape()
        a_leaf = tape.leaf(acts.copy())
        q, _ = self.critic.online.forward_var(tape, ad.hconcat([states, a_leaf]))
        tape.backward(ad.sum_all(q))
        grad = a_leaf.grad if a_leaf.grad is not None else np.zeros_like(acts)
        if not np.all(np.isfinite(grad)):
            raise FloatingPointError("non-finite gradient while perturbing batch actions")
        return (acts - self.eps_adv * grad).reshape(batch.actions.shape)


def m3ddpg_critic_update(model: M3ddpgModel, batch: Batch) -> float:
    return model.critic_update(batch)


def m3ddpg_actor_update(model: M3ddpgModel, batch: Batch) -> float:
    return model.actor_update(batch)


def train_m3ddpg(scenario, cfg: M3ddpgConfig | None = None, seed: int = 0) -> Checkpoint:
    """Full adversarial training run; checkpoint manifest carries the
    "m3ddpg" algorithm tag."""
    scenario = make_scenario(scenario) if isinstance(scenario, str) else scenario
    cfg = cfg if cfg is not None else M3ddpgConfig.maddpg_defaults()
    if not isinstance(cfg, M3ddpgConfig):
        raise TypeError("train_m3ddpg expects an M3ddpgConfig")
    init_rng = np.random.default_rng(np.random.SeedSequence(seed).spawn(3)[0])
    model = M3ddpgModel(scenario, cfg, init_rng)
    return run_training_loop(model, scenario, cfg, seed, algo_tag="m3ddpg")
