"""Independent verifiers: finite differences and tabular adversarial games.

The tabular game is a finite instantiation of the adversarial Markov game:
an adversary may swap the state every agent observes for another state from a
per-state menu, and may override individual agents' sampled actions from
per-agent menus. Exhaustive dynamic programming then certifies the two value
bounds: the optimality gap of the greedy single-step attack against the
globally optimal attack, and reward degradation against the policy-divergence
bound.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field

import numpy as np

Array = np.ndarray


def finite_diff_gradient(f, x: Array, h: float = 1e-5) -> Array:
    """Central-difference gradient of a scalar function of a vector."""
    if h <= 0:
        raise ValueError("h must be positive")
    x = np.asarray(x, dtype=np.float64)
    grad = np.zeros_like(x)
    flat = x.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        hi = float(f(x))
        flat[i] = orig - h
        lo = float(f(x))
        flat[i] = orig
        gflat[i] = (hi - lo) / (2.0 * h)
    return grad


# ---------------------------------------------------------------------------
# tabular adversarial Markov game


@dataclass
class TabularSAAMG:
    """Finite game: joint-action transition and team-reward tables plus
    finite perturbation menus. state_menu[s] lists the states the adversary
    may present instead of s (always containing s itself); action_menu[i]
    lists per-agent overrides (None = leave the sampled action unchanged)."""

    n_agents: int
    n_actions: list[int]          # per agent
    transitions: Array            # (S, A_joint, S)
    rewards: Array                # (S, A_joint)
    gamma: float
    state_menu: list[list[int]]
    action_menu: list[list]       # entries are None or an action index

    def __post_init__(self):
        S, A, S2 = self.transitions.shape
        if S != S2:
            raise ValueError("transition table must be (S, A, S)")
        if self.rewards.shape != (S, A):
            raise ValueError("reward table must be (S, A)")
        if not 0.0 <= self.gamma < 1.0:
            raise ValueError("gamma must lie in [0, 1)")
        if int(np.prod(self.n_actions)) != A:
            raise ValueError("joint action count does not match per-agent sizes")
        rowsums = self.transitions.sum(axis=2)
        if np.max(np.abs(rowsums - 1.0)) > 1e-12:
            raise ValueError("transition rows must sum to 1 within 1e-12")
        if len(self.state_menu) != S:
            raise ValueError("state menu must cover every state")
        for s, menu in enumerate(self.state_menu):
            if s not in menu:
                raise ValueError(f"state menu of {s} misses the identity perturbation")
        if len(self.action_menu) != self.n_agents:
            raise ValueError("action menu must cover every agent")
        for i, menu in enumerate(self.action_menu):
            if None not in menu:
                raise ValueError(f"action menu of agent {i} misses the identity override")

    @property
    def n_states(self) -> int:
        return self.transitions.shape[0]

    @property
    def r_max(self) -> float:
        return float(np.max(np.abs(self.rewards)))

    def joint_actions(self) -> list[tuple]:
        return list(itertools.product(*(range(k) for k in self.n_actions)))

    def joint_index(self, joint: tuple) -> int:
        idx = 0
        for a, k in zip(joint, self.n_actions):
            idx = idx * k + a
        return idx

    def override_space(self) -> list[tuple]:
        return list(itertools.product(*self.action_menu))

    def to_json(self) -> dict:
        return {
            "n_agents": self.n_agents,
            "n_actions": list(self.n_actions),
            "transitions": self.transitions.tolist(),
            "rewards": self.rewards.tolist(),
            "gamma": self.gamma,
            "state_menu": self.state_menu,
            "action_menu": [[a for a in menu] for menu in self.action_menu],
        }

    @classmethod
    def from_json(cls, data: dict) -> "TabularSAAMG":
        return cls(
            n_agents=int(data["n_agents"]),
            n_actions=[int(k) for k in data["n_actions"]],
            transitions=np.asarray(data["transitions"], dtype=np.float64),
            rewards=np.asarray(data["rewards"], dtype=np.float64),
            gamma=float(data["gamma"]),
            state_menu=[[int(s) for s in menu] for menu in data["state_menu"]],
            action_menu=[[None if a is None else int(a) for a in menu]
                         for menu in data["action_menu"]],
        )


@dataclass
class DiscretePolicy:
    """Per-agent action probability tables, one (S, A_i) row-stochastic array each."""

    tables: list[Array]

    def __post_init__(self):
        for i, table in enumerate(self.tables):
            if np.any(table < 0):
                raise ValueError(f"policy table {i} has negative entries")
            if np.max(np.abs(table.sum(axis=1) - 1.0)) > 1e-9:
                raise ValueError(f"policy table {i} rows must sum to 1")

    @property
    def n_agents(self) -> int:
        return len(self.tables)


def _executed_joint_dist(game: TabularSAAMG, policy: DiscretePolicy,
                         observed_state: int, overrides: tuple) -> Array:
    """Distribution over executed joint actions: agents sample from
    pi_i(.|observed_state), overridden slots are forced."""
    per_agent = []
    for i in range(game.n_agents):
        if overrides[i] is None:
            per_agent.append(policy.tables[i][observed_state])
        else:
            forced = np.zeros(game.n_actions[i])
            forced[overrides[i]] = 1.0
            per_agent.append(forced)
    dist = np.zeros(int(np.prod(game.n_actions)))
    for joint in game.joint_actions():
        p = 1.0
        for i, a in enumerate(joint):
            p *= per_agent[i][a]
        dist[game.joint_index(joint)] = p
    return dist


_IDENTITY = object()


def _attack_rule(game: TabularSAAMG, attack):
    """Normalise an attack argument to s -> (observed_state, overrides)."""
    identity_override = tuple(None for _ in range(game.n_agents))
    if attack is None:
        return lambda s: (s, identity_override)
    if isinstance(attack, dict):
        return lambda s: attack[s]
    return attack


def induced_chain(game: TabularSAAMG, policy: DiscretePolicy, attack=None):
    """Per-state expected reward and transition matrix of the attacked chain.
    Transitions and rewards always use the true state."""
    rule = _attack_rule(game, attack)
    S = game.n_states
    r_pi = np.zeros(S)
    p_pi = np.zeros((S, S))
    for s in range(S):
        observed, overrides = rule(s)
        dist = _executed_joint_dist(game, policy, observed, overrides)
        r_pi[s] = float(dist @ game.rewards[s])
        p_pi[s] = dist @ game.transitions[s]
    return r_pi, p_pi


def policy_value(game: TabularSAAMG, policy: DiscretePolicy, attack=None) -> Array:
    """Exact policy evaluation by linear solve."""
    r_pi, p_pi = induced_chain(game, policy, attack)
    return np.linalg.solve(np.eye(game.n_states) - game.gamma * p_pi, r_pi)


def policy_value_iterative(game: TabularSAAMG, policy: DiscretePolicy, attack=None,
                           tol: float = 1e-10, max_iter: int = 1_000_000) -> Array:
    """Independent fixed-point iteration, for cross-checking the linear solve."""
    r_pi, p_pi = induced_chain(game, policy, attack)
    v = np.zeros(game.n_states)
    for _ in range(max_iter):
        v_next = r_pi + game.gamma * (p_pi @ v)
        if np.max(np.abs(v_next - v)) < tol:
            return v_next
        v = v_next
    return v


def q_consistent(game: TabularSAAMG, policy: DiscretePolicy) -> Array:
    """Bellman-consistent Q of the unattacked policy: r + gamma * P V."""
    v = policy_value(game, policy)
    return game.rewards + game.gamma * (game.transitions @ v)


def _menu_pairs(game: TabularSAAMG, s: int):
    for observed in game.state_menu[s]:
        for overrides in game.override_space():
            yield observed, overrides


def optimal_adversary_value(game: TabularSAAMG, policy: DiscretePolicy,
                            tol: float = 1e-12, max_iter: int = 200_000) -> Array:
    """Value of the globally optimal attack: value iteration on the
    min-over-perturbations Bellman operator, then an exact solve of the
    extracted greedy adversary rule."""
    S = game.n_states
    # Precompute per-(state, pair) expected reward and next-state rows.
    pair_r = []
    pair_p = []
    for s in range(S):
        rs, ps = [], []
        for observed, overrides in _menu_pairs(game, s):
            dist = _executed_joint_dist(game, policy, observed, overrides)
            rs.append(float(dist @ game.rewards[s]))
            ps.append(dist @ game.transitions[s])
        pair_r.append(np.array(rs))
        pair_p.append(np.stack(ps))
    v = np.zeros(S)
    for _ in range(max_iter):
        v_next = np.array([
            np.min(pair_r[s] + game.gamma * (pair_p[s] @ v)) for s in range(S)
        ])
        if np.max(np.abs(v_next - v)) < tol:
            v = v_next
            break
        v = v_next
    # Exact evaluation of the converged greedy rule removes iteration residue.
    rule = {}
    pairs = [list(_menu_pairs(game, s)) for s in range(S)]
    for s in range(S):
        best = int(np.argmin(pair_r[s] + game.gamma * (pair_p[s] @ v)))
        rule[s] = pairs[s][best]
    return policy_value(game, policy, attack=rule)


def heuristic_single_step_value(game: TabularSAAMG, policy: DiscretePolicy,
                                q_table: Array):
    """Value of the greedy single-step attack: at each state pick the menu
    pair minimising the expected Q of the executed joint action, then evaluate
    the induced chain exactly. Returns (V^h, rule).

    Q is evaluated at the true state (whose dynamics the executed action
    feeds), so greedy selection under the exact adversarial Q recovers the
    optimal adversary. The continuous-control attack instead scores Q at the
    perturbed state, exactly as its update rule prescribes; the two readings
    coincide only when the critic generalises across the swap.
    """
    q_table = np.asarray(q_table, dtype=np.float64)
    rule = {}
    for s in range(game.n_states):
        best_val, best_pair = None, None
        for observed, overrides in _menu_pairs(game, s):
            dist = _executed_joint_dist(game, policy, observed, overrides)
            val = float(dist @ q_table[s])
            if best_val is None or val < best_val:
                best_val, best_pair = val, (observed, overrides)
        rule[s] = best_pair
    return policy_value(game, policy, attack=rule), rule


def theorem1_check(game: TabularSAAMG, policy: DiscretePolicy, q_table: Array) -> dict:
    """Gap of the greedy single-step attack against the optimal attack,
    compared to 2 * eps_Q / (1 - gamma) with measured eps_Q."""
    q_table = np.asarray(q_table, dtype=np.float64)
    eps_q = float(np.max(np.abs(q_table - q_consistent(game, policy))))
    v_star = optimal_adversary_value(game, policy)
    v_h, _ = heuristic_single_step_value(game, policy, q_table)
    gap = float(np.max(np.abs(v_h - v_star)))
    bound = 2.0 * eps_q / (1.0 - game.gamma)
    return {
        "eps_Q": eps_q,
        "gap": gap,
        "bound": bound,
        "holds": bool(gap <= bound + 1e-9),
    }


def maad(policy: DiscretePolicy, s: int, s_hat: int) -> float:
    """Sum over agents of KL(pi_i(.|s) || pi_i(.|s_hat))."""
    total = 0.0
    for i, table in enumerate(policy.tables):
        p, q = table[s], table[s_hat]
        support = p > 0
        if np.any(q[support] == 0):
            raise ValueError(
                f"KL undefined for agent {i}: perturbed policy lacks support"
            )
        total += float(np.sum(p[support] * np.log(p[support] / q[support])))
    return total


def maad_gaussian(actors, obs_s: Array, obs_s_hat: Array, sigma: float = 0.1) -> float:
    """Policy divergence for deterministic actors smoothed to Gaussians with a
    shared scale: sum_i ||mu_i(o_i) - mu_i(o_hat_i)||^2 / (2 sigma^2)."""
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    obs_s = np.asarray(obs_s, dtype=np.float64)
    obs_s_hat = np.asarray(obs_s_hat, dtype=np.float64)
    total = 0.0
    for i, net in enumerate(actors):
        diff = net.forward(obs_s[i]) - net.forward(obs_s_hat[i])
        total += float(diff @ diff) / (2.0 * sigma * sigma)
    return total


def theorem2_check(game: TabularSAAMG, policy: DiscretePolicy,
                   perturbation_menu: list[list[int]] | None = None) -> dict:
    """Reward degradation under the divergence-maximising state attack against
    C * sqrt(max MAAD) with C = sqrt(2n) * R_max / (1 - gamma)^2.

    The divergence maximum is taken over every (state, menu entry) pair: the
    recursion behind the constant bounds the sup-norm degradation, and a
    per-state radius is not sound when a state with an identity-only menu has
    attackable successors.
    """
    menu = perturbation_menu if perturbation_menu is not None else game.state_menu
    identity = tuple(None for _ in range(game.n_agents))
    rule = {}
    maad_max = 0.0
    for s in range(game.n_states):
        best_s, best_val = s, -1.0
        for s_hat in menu[s]:
            val = maad(policy, s, s_hat)
            maad_max = max(maad_max, val)
            if val > best_val:
                best_val, best_s = val, s_hat
        rule[s] = (best_s, identity)
    v = policy_value(game, policy)
    v_adv = policy_value(game, policy, attack=rule)
    n = game.n_agents
    c = math.sqrt(2.0 * n) * game.r_max / (1.0 - game.gamma) ** 2
    rhs = c * math.sqrt(maad_max)
    lhs = np.abs(v - v_adv)
    return {
        "lhs": lhs.tolist(),
        "rhs": rhs,
        "constant": c,
        "max_maad": maad_max,
        "holds": bool(np.all(lhs <= rhs + 1e-9)),
    }


# ---------------------------------------------------------------------------
# random instance generators and seeded suites


def random_saamg(rng: np.random.Generator, n_states: int = 6, n_agents: int = 2,
                 n_actions: int = 2, gamma: float | None = None,
                 with_action_menus: bool = True) -> TabularSAAMG:
    """Dense random game with modest menus; transition rows renormalised."""
    n_joint = n_actions ** n_agents
    raw = rng.uniform(0.05, 1.0, (n_states, n_joint, n_states))
    transitions = raw / raw.sum(axis=2, keepdims=True)
    rewards = rng.uniform(-1.0, 1.0, (n_states, n_joint))
    g = float(rng.uniform(0.6, 0.9)) if gamma is None else gamma
    state_menu = []
    for s in range(n_states):
        extra = rng.choice(n_states, size=min(2, n_states - 1), replace=False)
        menu = sorted({s, *[int(e) for e in extra]})
        state_menu.append(menu)
    action_menu = []
    for _ in range(n_agents):
        menu = [None]
        if with_action_menus:
            menu.append(int(rng.integers(0, n_actions)))
        action_menu.append(menu)
    return TabularSAAMG(
        n_agents=n_agents,
        n_actions=[n_actions] * n_agents,
        transitions=transitions,
        rewards=rewards,
        gamma=g,
        state_menu=state_menu,
        action_menu=action_menu,
    )


def random_policy(rng: np.random.Generator, game: TabularSAAMG,
                  floor: float = 0.05) -> DiscretePolicy:
    """Full-support stochastic policy (Dirichlet draws with a probability floor)."""
    tables = []
    for k in game.n_actions:
        t = rng.dirichlet(np.ones(k), size=game.n_states)
        t = t + floor
        t = t / t.sum(axis=1, keepdims=True)
        tables.append(t)
    return DiscretePolicy(tables)


def theorem1_suite(n_instances: int = 100, seed: int = 7) -> list[dict]:
    """Seeded instances with a noisy Bellman-consistent Q; every record carries
    the measured quantities, and a violated bound additionally embeds the full
    game as a reproducible counterexample."""
    records = []
    for k in range(n_instances):
        rng = np.random.default_rng(np.random.SeedSequence([seed, k]))
        game = random_saamg(rng)
        policy = random_policy(rng, game)
        noise_scale = float(rng.uniform(0.05, 0.3))
        q = q_consistent(game, policy) + rng.uniform(-noise_scale, noise_scale,
                                                     game.rewards.shape)
        record = theorem1_check(game, policy, q)
        record["instance"] = k
        if not record["holds"]:
            record["counterexample"] = {
                "game": game.to_json(),
                "policy": [t.tolist() for t in policy.tables],
                "q_table": q.tolist(),
            }
        records.append(record)
    return records


def theorem2_suite(n_instances: int = 100, seed: int = 11) -> list[dict]:
    records = []
    for k in range(n_instances):
        rng = np.random.default_rng(np.random.SeedSequence([seed, k]))
        game = random_saamg(rng, n_states=5, with_action_menus=False)
        policy = random_policy(rng, game)
        record = theorem2_check(game, policy)
        record["instance"] = k
        if not record["holds"]:
            record["counterexample"] = {
                "game": game.to_json(),
                "policy": [t.tolist() for t in policy.tables],
            }
        records.append(record)
    return records


def write_report(path: str, records: list[dict], extra: dict | None = None) -> None:
    holds = [bool(r["holds"]) for r in records]
    report = {
        "instances": len(records),
        "pass_fraction": float(np.mean(holds)) if holds else 1.0,
        "records": records,
    }
    if extra:
        report.update(extra)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(report, fh, indent=1)
