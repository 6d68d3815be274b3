"""Comparison learners on the same DDPG+HER substrate: plain sparse HER,
distance-shaped rewards, and Random Network Distillation bonuses."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import nn, trainer
from .ddpg import AgentConfig
from .world import ManipulationEnv, WorldConfig

ALGOS = ("her", "shaped", "rnd")


def shaped_reward(o_next, g) -> np.ndarray:
    """Negative Euclidean distance to the goal."""
    return -np.linalg.norm(np.asarray(o_next, dtype=np.float64) - np.asarray(g, dtype=np.float64),
                           axis=-1)


@dataclass
class RndConfig:
    embed_dim: int = 32
    hidden: tuple[int, ...] = (64, 64)
    bonus_scale: float = 0.5
    bonus_cap: float = 1.0
    lr: float = 1e-3


class RndModel:
    """Fixed random target network plus a predictor trained to imitate it.

    The bonus is the prediction error divided by the running standard
    deviation of observed errors, clipped to [0, bonus_cap] and scaled.
    """

    def __init__(self, obs_dim: int, rng: np.random.Generator, config: RndConfig | None = None):
        self.config = config or RndConfig()
        c = self.config
        self.spec = nn.MlpSpec((obs_dim, *c.hidden, c.embed_dim))
        self.target = nn.init_params(self.spec, rng)
        self.predictor = nn.init_params(self.spec, rng)
        self.adam = nn.AdamState.for_params(self.predictor)
        self._n = 0
        self._sum = 0.0
        self._sumsq = 0.0

    @property
    def error_std(self) -> float:
        if self._n < 2:
            return 1.0
        var = self._sumsq / self._n - (self._sum / self._n) ** 2
        return float(np.sqrt(max(var, 1e-8)))

    def errors(self, obs) -> np.ndarray:
        diff = nn.mlp_forward(self.predictor, self.spec, obs) - nn.mlp_forward(self.target, self.spec, obs)
        return np.sum(diff * diff, axis=-1)

    def bonus(self, obs) -> np.ndarray:
        if self.config.bonus_scale == 0.0:
            return np.zeros(np.atleast_2d(obs).shape[0])
        b = np.clip(self.errors(obs) / self.error_std, 0.0, self.config.bonus_cap)
        if not np.all(np.isfinite(b)):
            raise FloatingPointError("non-finite exploration bonus")
        return self.config.bonus_scale * b

    def train(self, obs) -> float:
        obs = np.atleast_2d(obs)
        target = nn.mlp_forward(self.target, self.spec, obs)
        out, cache = nn.forward_cache(self.predictor, self.spec, obs)
        diff = out - target
        err = np.sum(diff * diff, axis=1)
        self._n += len(err)
        self._sum += float(err.sum())
        self._sumsq += float(np.sum(err * err))
        grads, _ = nn.mlp_backward(self.predictor, self.spec, None, (2.0 / len(err)) * diff, cache)
        self.predictor, self.adam = nn.adam_step(self.predictor, grads, self.adam, self.config.lr)
        return float(err.mean())


def rnd_bonus(model: RndModel, s) -> np.ndarray | float:
    b = model.bonus(np.atleast_2d(s))
    return float(b[0]) if np.ndim(s) == 1 else b


def train_baseline(algo: str, world: WorldConfig, agent_config: AgentConfig | None = None,
                   train_config: trainer.TrainConfig | None = None, seed: int = 0,
                   rnd_config: RndConfig | None = None, eval_worlds: dict | None = None,
                   on_epoch=None):
    """Returns (agent, history) for one of ``her``, ``shaped``, ``rnd``."""
    if algo not in ALGOS:
        raise ValueError(f"unknown baseline {algo!r}; choose from {ALGOS}")
    env = ManipulationEnv(world)
    agent_config = agent_config or AgentConfig.for_horizon(world.horizon)
    train_config = train_config or trainer.TrainConfig()
    eval_envs = None
    if eval_worlds:
        eval_envs = {world.name: env, **{n: ManipulationEnv(w) for n, w in eval_worlds.items()}}
    kw = {}
    if algo == "shaped":
        kw["reward_fn"] = shaped_reward
    elif algo == "rnd":
        bonus_rng = trainer.seed_streams(seed)["bonus"]
        kw["bonus_model"] = RndModel(env.obs_dim, bonus_rng, rnd_config)
    return trainer.train(env, agent_config, train_config, seed, eval_envs=eval_envs,
                         on_epoch=on_epoch, **kw)
