"""State, action, and joint adversarial attacks on trained policies.

The joint attack runs two projected sign-gradient phases per timestep: first
it perturbs the victim agents' observations so that the critic value of the
induced joint action drops, then it perturbs the resulting victim actions
directly. Both phases maximise a heuristic loss that trades the critic value
against the L2 distance from the clean joint action. Zeroing either phase's
iteration count recovers the corresponding single-vector baseline exactly,
and three random-sign baselines mirror the same victim bookkeeping.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Array, Tape
from .models import PolicyBundle, act_greedy

METHODS = ("saja", "pgd_state", "pgd_action", "random_state", "random_action",
           "random_sa", "none")


@dataclass(frozen=True)
class PerturbationBudget:
    """L-infinity radii for observation and action perturbations."""

    eps_s: float
    eps_a: float
    norm: str = "linf"

    def __post_init__(self):
        if not (np.isfinite(self.eps_s) and np.isfinite(self.eps_a)):
            raise ValueError("budgets must be finite")
        if self.eps_s < 0 or self.eps_a < 0:
            raise ValueError("budgets must be non-negative")
        if self.norm != "linf":
            raise ValueError("only the L-infinity norm is supported")


@dataclass
class AttackConfig:
    method: str = "saja"
    m: int = 1
    K_s: int = 20
    K_a: int = 20
    alpha_s: float | None = None  # default 2.5 * eps_s / K_s
    alpha_a: float | None = None  # default 2.5 * eps_a / K_a
    alpha1: float = 0.01
    beta1: float = 0.99
    alpha2: float = 0.01
    beta2: float = 0.99

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown attack method {self.method!r}")
        if self.m < 0:
            raise ValueError("victim count must be non-negative")
        if self.alpha1 + self.beta1 <= 0 or self.alpha2 + self.beta2 <= 0:
            raise ValueError("loss weights must have a positive sum")


@dataclass
class AttackOutcome:
    observations: Array          # clean s
    perturbed_observations: Array  # s*
    action: Array                # final a**
    action_clean: Array          # a0 = mu(s)
    action_intermediate: Array   # mu(s*)
    victims: tuple
    diagnostics: dict = field(default_factory=dict)


def select_victims(n: int, m: int, rng: np.random.Generator) -> tuple:
    """Uniform victim subset of size m, returned sorted for determinism."""
    if m < 0 or m > n:
        raise ValueError(f"victim count {m} outside [0, {n}]")
    if m == 0:
        return ()
    return tuple(sorted(int(i) for i in rng.choice(n, size=m, replace=False)))


def project_linf(candidate: Array, center: Array, eps: float) -> Array:
    """Clamp candidate into the L-infinity ball of radius eps around center.

    The ball membership must hold for the measured difference (out - center),
    so components that binary addition rounds past the radius are nudged back
    by single ulps; the budget-soundness contract tolerates zero violations.
    """
    if eps < 0:
        raise ValueError("eps must be non-negative")
    candidate = np.asarray(candidate, dtype=np.float64)
    center = np.asarray(center, dtype=np.float64)
    if candidate.shape != center.shape:
        raise ValueError("candidate and center shapes differ")
    out = center + np.clip(candidate - center, -eps, eps)
    over = np.abs(out - center) > eps
    while np.any(over):
        out = np.where(over, np.nextafter(out, center), out)
        over = np.abs(out - center) > eps
    return out


def hlf_state(q_value: float, a_prime: Array, a_zero: Array,
              alpha1: float, beta1: float) -> float:
    """State-phase heuristic loss: -alpha1 * Q + beta1 * ||a' - a0||_2."""
    diff = np.asarray(a_prime, dtype=np.float64) - np.asarray(a_zero, dtype=np.float64)
    return -alpha1 * float(q_value) + beta1 * float(np.linalg.norm(diff))


def hlf_action(q_value: float, a_adv: Array, a_zero: Array,
               alpha2: float, beta2: float) -> float:
    """Action-phase heuristic loss: -alpha2 * Q + beta2 * ||a - a0||_2."""
    return hlf_state(q_value, a_adv, a_zero, alpha2, beta2)


def _step_size(alpha, eps: float, k: int) -> float:
    if alpha is not None:
        return float(alpha)
    if k <= 0 or eps <= 0:
        return 0.0
    return 2.5 * eps / k


def _as_rows(x: Array) -> Array:
    return np.asarray(x, dtype=np.float64)


def saja_state_phase(observations: Array, actors, critic_scalar, victims,
                     budget: PerturbationBudget, cfg: AttackConfig,
                     a_zero: Array | None = None):
    """K_s sign-gradient ascent steps on the state-phase loss over victim
    observation rows, projected onto the eps_s ball. Returns (s*, loss values
    at each iterate plus the final point). Non-victim rows are never touched.
    """
    obs = _as_rows(observations)
    n = obs.shape[0]
    s_adv = obs.copy()
    victims = tuple(victims)
    a0 = _as_rows(a_zero) if a_zero is not None else act_greedy(actors, obs)
    if cfg.K_s <= 0 or budget.eps_s <= 0 or not victims:
        return s_adv, []
    alpha = _step_size(cfg.alpha_s, budget.eps_s, cfg.K_s)
    vic = list(victims)
    a0_vic = a0[vic].reshape(1, -1)
    losses = []
    for _ in range(cfg.K_s):
        tape = Tape()
        obs_vars = [tape.leaf(s_adv[i:i + 1].copy()) for i in range(n)]
        act_vars = [actors[i].forward_var(tape, obs_vars[i])[0] for i in range(n)]
        q = critic_scalar.value_var(tape, obs_vars, act_vars)
        dist = ad.l2norm(ad.sub(ad.hconcat([act_vars[i] for i in vic]), a0_vic))
        loss = ad.add(ad.smul(-cfg.alpha1, q), ad.smul(cfg.beta1, dist))
        losses.append(float(loss.data))
        tape.backward(loss)
        for i in vic:
            g = obs_vars[i].grad
            if g is None:
                continue
            if not np.all(np.isfinite(g)):
                raise FloatingPointError("non-finite gradient in the state attack phase")
            s_adv[i] = s_adv[i] + alpha * np.sign(g[0])
        s_adv[vic] = project_linf(s_adv[vic], obs[vic], budget.eps_s)
    a_prime = act_greedy(actors, s_adv)
    losses.append(hlf_state(critic_scalar.value(s_adv, a_prime),
                            a_prime[vic], a0[vic], cfg.alpha1, cfg.beta1))
    return s_adv, losses


def saja_action_phase(perturbed_observations: Array, actors, critic_scalar, victims,
                      budget: PerturbationBudget, cfg: AttackConfig,
                      a_zero: Array | None = None):
    """K_a sign-gradient ascent steps on the action-phase loss over victim
    action rows, projected onto the eps_a ball around mu(s*); the final victim
    actions are additionally clamped into the environment's [-1, 1] box.
    Returns (a**, mu(s*), loss values)."""
    s_star = _as_rows(perturbed_observations)
    n = s_star.shape[0]
    victims = tuple(victims)
    a_prime = act_greedy(actors, s_star)
    a_adv = a_prime.copy()
    a0 = _as_rows(a_zero) if a_zero is not None else a_prime.copy()
    if cfg.K_a <= 0 or budget.eps_a <= 0 or not victims:
        return a_adv, a_prime, []
    alpha = _step_size(cfg.alpha_a, budget.eps_a, cfg.K_a)
    vic = list(victims)
    a0_vic = a0[vic].reshape(1, -1)
    obs_rows = [s_star[i:i + 1] for i in range(n)]
    losses = []
    for _ in range(cfg.K_a):
        tape = Tape()
        act_vars = [tape.leaf(a_adv[i:i + 1].copy()) for i in range(n)]
        q = critic_scalar.value_var(tape, obs_rows, act_vars)
        dist = ad.l2norm(ad.sub(ad.hconcat([act_vars[i] for i in vic]), a0_vic))
        loss = ad.add(ad.smul(-cfg.alpha2, q), ad.smul(cfg.beta2, dist))
        losses.append(float(loss.data))
        tape.backward(loss)
        for i in vic:
            g = act_vars[i].grad
            if g is None:
                continue
            if not np.all(np.isfinite(g)):
                raise FloatingPointError("non-finite gradient in the action attack phase")
            a_adv[i] = a_adv[i] + alpha * np.sign(g[0])
        a_adv[vic] = project_linf(a_adv[vic], a_prime[vic], budget.eps_a)
    a_adv[vic] = np.clip(a_adv[vic], -1.0, 1.0)
    losses.append(hlf_action(critic_scalar.value(s_star, a_adv),
                             a_adv[vic], a0[vic], cfg.alpha2, cfg.beta2))
    return a_adv, a_prime, losses


def _outcome(obs, s_star, a_star, a0, a_prime, victims, critic_scalar,
             loss_s=None, loss_a=None) -> AttackOutcome:
    vic = list(victims)
    action_dist = float(np.linalg.norm(a_star[vic] - a0[vic])) if vic else 0.0
    diagnostics = {
        "q_clean": critic_scalar.value(obs, a0),
        "q_attacked": critic_scalar.value(s_star, a_star),
        "loss_state": list(loss_s or []),
        "loss_action": list(loss_a or []),
        "action_dist": action_dist,
    }
    return AttackOutcome(
        observations=np.asarray(obs, dtype=np.float64),
        perturbed_observations=s_star,
        action=a_star,
        action_clean=a0,
        action_intermediate=a_prime,
        victims=tuple(victims),
        diagnostics=diagnostics,
    )


def saja(observations: Array, actors, critic_scalar, budget: PerturbationBudget,
         cfg: AttackConfig, rng: np.random.Generator) -> AttackOutcome:
    """Full two-phase joint attack: victim selection, state phase, action phase."""
    obs = _as_rows(observations)
    victims = select_victims(obs.shape[0], cfg.m, rng)
    a0 = act_greedy(actors, obs)
    s_star, loss_s = saja_state_phase(obs, actors, critic_scalar, victims, budget, cfg, a0)
    a_star, a_prime, loss_a = saja_action_phase(s_star, actors, critic_scalar, victims,
                                                budget, cfg, a0)
    return _outcome(obs, s_star, a_star, a0, a_prime, victims, critic_scalar,
                    loss_s, loss_a)


def pgd_state(observations: Array, actors, critic_scalar, budget: PerturbationBudget,
              cfg: AttackConfig, rng: np.random.Generator) -> AttackOutcome:
    """State-only ablation: the state phase alone, executed actions mu(s*)."""
    obs = _as_rows(observations)
    victims = select_victims(obs.shape[0], cfg.m, rng)
    a0 = act_greedy(actors, obs)
    s_star, loss_s = saja_state_phase(obs, actors, critic_scalar, victims, budget, cfg, a0)
    a_star = act_greedy(actors, s_star)
    return _outcome(obs, s_star, a_star.copy(), a0, a_star, victims, critic_scalar,
                    loss_s, None)


def pgd_action(observations: Array, actors, critic_scalar, budget: PerturbationBudget,
               cfg: AttackConfig, rng: np.random.Generator) -> AttackOutcome:
    """Action-only ablation: the action phase alone on the clean state."""
    obs = _as_rows(observations)
    victims = select_victims(obs.shape[0], cfg.m, rng)
    a0 = act_greedy(actors, obs)
    s_star = obs.copy()
    a_star, a_prime, loss_a = saja_action_phase(s_star, actors, critic_scalar, victims,
                                                budget, cfg, a0)
    return _outcome(obs, s_star, a_star, a0, a_prime, victims, critic_scalar,
                    None, loss_a)


def random_sign_perturb(target: Array, eps: float, victims,
                        rng: np.random.Generator) -> Array:
    """Victim rows shifted by eps * sign(U(-1, 1)) elementwise (full-strength
    up to one ulp, so the measured shift never exceeds the budget); zero-budget
    perturbations draw nothing so budget collapses keep RNG streams aligned."""
    if eps < 0:
        raise ValueError("eps must be non-negative")
    out = _as_rows(target).copy()
    vic = list(victims)
    if eps == 0 or not vic:
        return out
    draw = rng.uniform(-1.0, 1.0, (len(vic), out.shape[1]))
    out[vic] = project_linf(out[vic] + eps * np.sign(draw), out[vic], eps)
    return out


def random_state_action(observations: Array, actors, budget: PerturbationBudget,
                        m: int, rng: np.random.Generator,
                        critic_scalar=None) -> AttackOutcome:
    """Two-phase random baseline: random-sign state perturbation, actions from
    the perturbed state, then random-sign action perturbation (clamped)."""
    obs = _as_rows(observations)
    victims = select_victims(obs.shape[0], m, rng)
    a0 = act_greedy(actors, obs)
    s_star = random_sign_perturb(obs, budget.eps_s, victims, rng)
    a_prime = act_greedy(actors, s_star)
    a_star = random_sign_perturb(a_prime, budget.eps_a, victims, rng)
    vic = list(victims)
    if vic:
        a_star[vic] = np.clip(a_star[vic], -1.0, 1.0)
    return _outcome(obs, s_star, a_star, a0, a_prime, victims,
                    critic_scalar or _NullCritic())


def random_state(observations, actors, budget, m, rng, critic_scalar=None) -> AttackOutcome:
    return random_state_action(observations, actors,
                               PerturbationBudget(budget.eps_s, 0.0), m, rng,
                               critic_scalar)


def random_action(observations, actors, budget, m, rng, critic_scalar=None) -> AttackOutcome:
    return random_state_action(observations, actors,
                               PerturbationBudget(0.0, budget.eps_a), m, rng,
                               critic_scalar)


class _NullCritic:
    """Diagnostics stub for methods that do not consult a critic."""

    def value(self, observations, actions) -> float:
        return 0.0


def run_attack(method: str, observations: Array, bundle: PolicyBundle,
               budget: PerturbationBudget, cfg: AttackConfig,
               rng: np.random.Generator) -> AttackOutcome:
    """Dispatch one timestep of the named attack against a policy bundle."""
    actors, critic = bundle.actors, bundle.critic_scalar
    if method == "saja":
        return saja(observations, actors, critic, budget, cfg, rng)
    if method == "pgd_state":
        return pgd_state(observations, actors, critic, budget, cfg, rng)
    if method == "pgd_action":
        return pgd_action(observations, actors, critic, budget, cfg, rng)
    if method == "random_sa":
        return random_state_action(observations, actors, budget, cfg.m, rng, critic)
    if method == "random_state":
        return random_state(observations, actors, budget, cfg.m, rng, critic)
    if method == "random_action":
        return random_action(observations, actors, budget, cfg.m, rng, critic)
    if method == "none":
        obs = _as_rows(observations)
        a0 = act_greedy(actors, obs)
        return _outcome(obs, obs.copy(), a0.copy(), a0, a0.copy(), (), critic)
    raise ValueError(f"unknown attack method {method!r}")
