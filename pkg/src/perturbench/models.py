"""Actor and critic network containers for the two training algorithms.

MADDPG uses one shared centralized critic with a Q-value head per agent;
FACMAC uses per-agent critics whose local values are combined by a
state-conditioned monotone mixing network.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Array, Mlp, Tape, Var

MIXER_ACTIVATIONS = ("elu", "identity")


@dataclass
class ActorSet:
    """One deterministic tanh-output policy per agent, plus target copies."""

    online: list[Mlp]
    target: list[Mlp]

    @classmethod
    def create(cls, n_agents: int, obs_dim: int, act_dim: int, hidden, rng) -> "ActorSet":
        nets = [
            Mlp.init([obs_dim, *hidden, act_dim], "relu", "tanh", rng)
            for _ in range(n_agents)
        ]
        return cls(nets, [net.copy() for net in nets])

    @property
    def n_agents(self) -> int:
        return len(self.online)


def act_greedy(actors: list[Mlp], observations: Array) -> Array:
    """Deterministic per-agent actions; agent i sees only its own row."""
    observations = np.asarray(observations, dtype=np.float64)
    if observations.shape[0] != len(actors):
        raise ValueError(
            f"{observations.shape[0]} observation rows for {len(actors)} actors"
        )
    return np.stack([net.forward(observations[i]) for i, net in enumerate(actors)])


def act_explore(actors: list[Mlp], observations: Array, noise_std: float,
                rng: np.random.Generator) -> Array:
    """Greedy actions plus iid Gaussian noise, clamped to [-1, 1]."""
    greedy = act_greedy(actors, observations)
    if noise_std > 0:
        greedy = greedy + rng.normal(0.0, noise_std, greedy.shape)
    return np.clip(greedy, -1.0, 1.0)


@dataclass
class SharedCritic:
    """MADDPG critic: (global state ++ joint action) -> one Q-value per agent."""

    online: Mlp
    target: Mlp

    @classmethod
    def create(cls, state_dim: int, n_agents: int, act_dim: int, hidden, rng) -> "SharedCritic":
        net = Mlp.init([state_dim + n_agents * act_dim, *hidden, n_agents], "relu", "identity", rng)
        return cls(net, net.copy())


@dataclass
class MixingNet:
    """State-conditioned hypernetwork mixing per-agent Q-values into Q_tot.

    Mixing weights pass through an absolute value, so Q_tot is monotone
    non-decreasing in every agent's Q-value.
    """

    n_agents: int
    state_dim: int
    embed_dim: int
    hyper_w1: Mlp  # state -> n_agents * embed_dim
    hyper_b1: Mlp  # state -> embed_dim
    hyper_w2: Mlp  # state -> embed_dim
    hyper_v: Mlp   # state -> embed_dim -> 1
    hidden_activation: str = "elu"

    def __post_init__(self):
        if self.hidden_activation not in MIXER_ACTIVATIONS:
            raise ValueError(f"unknown mixer activation {self.hidden_activation!r}")

    @classmethod
    def create(cls, n_agents: int, state_dim: int, embed_dim: int, rng) -> "MixingNet":
        return cls(
            n_agents,
            state_dim,
            embed_dim,
            Mlp.init([state_dim, n_agents * embed_dim], rng=rng),
            Mlp.init([state_dim, embed_dim], rng=rng),
            Mlp.init([state_dim, embed_dim], rng=rng),
            Mlp.init([state_dim, embed_dim, 1], "relu", "identity", rng),
        )

    @classmethod
    def linear_mixer(cls, weights, bias: float) -> "MixingNet":
        """Hand-built state-independent mixer: Q_tot = sum_i w_i Q_i + bias."""
        weights = np.asarray(weights, dtype=np.float64)
        n = weights.size
        state_dim = 1
        mk = lambda sizes, b_last: Mlp(
            sizes,
            [np.zeros((sizes[i + 1], sizes[i])) for i in range(len(sizes) - 1)],
            [np.zeros(sizes[i + 1]) for i in range(len(sizes) - 2)] + [b_last],
        )
        # embed_dim 1: hidden = sum_i |w_i| Q_i, output = |1| * hidden + bias
        return cls(
            n,
            state_dim,
            1,
            mk([state_dim, n], weights.copy()),
            mk([state_dim, 1], np.zeros(1)),
            mk([state_dim, 1], np.ones(1)),
            Mlp(
                [state_dim, 1],
                [np.zeros((1, state_dim))],
                [np.full(1, float(bias))],
            ),
            hidden_activation="identity",
        )

    def params(self) -> list[Array]:
        out = []
        for net in (self.hyper_w1, self.hyper_b1, self.hyper_w2, self.hyper_v):
            out.extend(net.params())
        return out

    def copy(self) -> "MixingNet":
        return MixingNet(
            self.n_agents,
            self.state_dim,
            self.embed_dim,
            self.hyper_w1.copy(),
            self.hyper_b1.copy(),
            self.hyper_w2.copy(),
            self.hyper_v.copy(),
            self.hidden_activation,
        )

    def _act(self, h):
        return ad.elu(h) if self.hidden_activation == "elu" else h

    def forward(self, qs: Array, state: Array) -> Array:
        """Plain numpy Q_tot; qs (B, n), state (B, state_dim) -> (B, 1)."""
        qs = np.asarray(qs, dtype=np.float64)
        state = np.asarray(state, dtype=np.float64)
        w1 = np.abs(self.hyper_w1.forward(state)).reshape(-1, self.n_agents, self.embed_dim)
        b1 = self.hyper_b1.forward(state)
        hidden = np.einsum("bne,bn->be", w1, qs) + b1
        if self.hidden_activation == "elu":
            hidden = np.where(hidden > 0.0, hidden, np.expm1(hidden))
        w2 = np.abs(self.hyper_w2.forward(state))
        v = self.hyper_v.forward(state)
        return (w2 * hidden).sum(axis=1, keepdims=True) + v

    def forward_var(self, tape: Tape, qs, state, leaves=None):
        """Recorded Q_tot; qs/state may be Vars or constant arrays."""
        if leaves is None:
            leaves = {
                "w1": None,
                "b1": None,
                "w2": None,
                "v": None,
            }
            w1_out, leaves["w1"] = self.hyper_w1.forward_var(tape, state)
            b1, leaves["b1"] = self.hyper_b1.forward_var(tape, state)
            w2_out, leaves["w2"] = self.hyper_w2.forward_var(tape, state)
            v, leaves["v"] = self.hyper_v.forward_var(tape, state)
        else:
            w1_out, _ = self.hyper_w1.forward_var(tape, state, leaves["w1"])
            b1, _ = self.hyper_b1.forward_var(tape, state, leaves["b1"])
            w2_out, _ = self.hyper_w2.forward_var(tape, state, leaves["w2"])
            v, _ = self.hyper_v.forward_var(tape, state, leaves["v"])
        batch = ad._val(qs).shape[0]
        w1 = ad.reshape(ad.absval(w1_out), (batch, self.n_agents, self.embed_dim))
        hidden = self._act(ad.add(ad.bmm_vec(w1, qs), b1))
        w2 = ad.absval(w2_out)
        return ad.add(ad.rowsum(ad.mul(w2, hidden)), v), leaves

    def param_leaves(self, leaves) -> list[Var]:
        out = []
        for key in ("w1", "b1", "w2", "v"):
            out.extend(leaves[key].params())
        return out


@dataclass
class FacmacCritic:
    """Per-agent critics (o_i ++ a_i -> Q_i) plus the mixing network."""

    agents: list[Mlp]
    mixer: MixingNet
    agents_target: list[Mlp]
    mixer_target: MixingNet

    @classmethod
    def create(cls, n_agents: int, obs_dim: int, act_dim: int, state_dim: int,
               hidden, embed_dim: int, rng) -> "FacmacCritic":
        agents = [
            Mlp.init([obs_dim + act_dim, *hidden, 1], "relu", "identity", rng)
            for _ in range(n_agents)
        ]
        mixer = MixingNet.create(n_agents, state_dim, embed_dim, rng)
        return cls(agents, mixer, [a.copy() for a in agents], mixer.copy())

    def params(self) -> list[Array]:
        out = []
        for net in self.agents:
            out.extend(net.params())
        out.extend(self.mixer.params())
        return out

    def target_params(self) -> list[Array]:
        out = []
        for net in self.agents_target:
            out.extend(net.params())
        out.extend(self.mixer_target.params())
        return out

    def qtot(self, state: Array, observations: Array, actions: Array,
             target: bool = False) -> float:
        """Scalar Q_tot for a single joint (state, observations, actions)."""
        observations = np.asarray(observations, dtype=np.float64)
        actions = np.asarray(actions, dtype=np.float64)
        nets = self.agents_target if target else self.agents
        mixer = self.mixer_target if target else self.mixer
        qs = np.array([
            [float(nets[i].forward(np.concatenate([observations[i], actions[i]]))[0])
             for i in range(len(nets))]
        ])
        return float(mixer.forward(qs, np.asarray(state, dtype=np.float64).reshape(1, -1))[0, 0])


def facmac_qtot(critic: FacmacCritic, state: Array, observations: Array,
                actions: Array) -> float:
    """Spec surface for the mixed joint-action value."""
    return critic.qtot(state, observations, actions)


# ---------------------------------------------------------------------------
# scalar critic adapters used by the attack code


class MaddpgCriticScalar:
    """Scalar attack objective for MADDPG: mean over the per-agent Q heads."""

    def __init__(self, critic: Mlp, n_agents: int):
        self.critic = critic
        self.n_agents = n_agents

    def value(self, observations: Array, actions: Array) -> float:
        x = np.concatenate([np.ravel(observations), np.ravel(actions)])
        return float(self.critic.forward(x).mean())

    def value_var(self, tape: Tape, obs_vars: list, act_vars: list) -> Var:
        x = ad.hconcat(list(obs_vars) + list(act_vars))
        q, _ = self.critic.forward_var(tape, x)
        return ad.mean_all(q)


def _concat_rows(parts: list):
    """Concatenate (1, d_i) blocks, staying in plain numpy when no block is
    recorded on a tape."""
    if any(isinstance(p, Var) for p in parts):
        return ad.hconcat(parts)
    return np.concatenate(parts, axis=1)


class FacmacCriticScalar:
    """Scalar attack objective for FACMAC: the mixed Q_tot."""

    def __init__(self, critic: FacmacCritic):
        self.critic = critic

    def value(self, observations: Array, actions: Array) -> float:
        obs = np.asarray(observations, dtype=np.float64)
        return self.critic.qtot(obs.reshape(1, -1), obs, actions)

    def value_var(self, tape: Tape, obs_vars: list, act_vars: list) -> Var:
        qs = []
        for i, net in enumerate(self.critic.agents):
            x = _concat_rows([obs_vars[i], act_vars[i]])
            q, _ = net.forward_var(tape, x)
            qs.append(q)
        state = _concat_rows(list(obs_vars))
        qtot, _ = self.critic.mixer.forward_var(tape, ad.hconcat(qs), state)
        return ad.mean_all(qtot)


@dataclass
class PolicyBundle:
    """Everything an attacker or evaluator needs from a trained model."""

    actors: list[Mlp]
    critic_scalar: object
    n_agents: int
    obs_dim: int
    act_dim: int

    def greedy(self, observations: Array) -> Array:
        return act_greedy(self.actors, observations)
