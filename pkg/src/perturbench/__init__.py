"""Training, joint adversarial attacks, and bound certification for
multi-agent actor-critic policies on a continuous predator-prey environment."""

__version__ = "0.1.0"

from . import attacks, autodiff, checkpoint, env, harness, m3ddpg, models, oracles, training

__all__ = [
    "attacks",
    "autodiff",
    "checkpoint",
    "env",
    "harness",
    "m3ddpg",
    "models",
    "oracles",
    "training",
]
