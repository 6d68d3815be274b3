"""Epoch/cycle training loop shared by every algorithm in the package.

An epoch is ``cycles_per_epoch`` cycles; each cycle collects a batch of
exploratory episodes with one parameter snapshot, runs a share of the
epoch's updates, blends the target networks, and (with a curriculum) runs one
boundary evaluation. The epoch ends with noise-free evaluation rollouts
against the environments' own goals.

Random streams are split per purpose from the run seed so that optional
components (curriculum, exploration bonus) never perturb the others.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import curriculum as cur
from .ddpg import Agent, AgentConfig, rollout_many, success_rate, sync_targets, update
from .replay import ReplayBuffer, sample_batch
from .world import reward_batch

STREAMS = ("init", "explore", "reset", "eval", "curriculum", "boundary", "bonus")


def seed_streams(seed: int) -> dict[str, np.random.Generator]:
    children = np.random.SeedSequence(seed).spawn(len(STREAMS))
    return {name: np.random.default_rng(s) for name, s in zip(STREAMS, children)}


def next_seed(rng: np.random.Generator) -> int:
    return int(rng.integers(0, 2 ** 62))


@dataclass
class TrainConfig:
    epochs: int = 50
    episodes_per_epoch: int = 100
    updates_per_epoch: int = 400
    cycles_per_epoch: int = 50
    eval_rollouts: int = 50

    def __post_init__(self):
        if self.epochs < 0 or self.cycles_per_epoch < 1 or self.eval_rollouts < 0:
            raise ValueError("invalid epoch / cycle / evaluation counts")
        for name in ("episodes_per_epoch", "updates_per_epoch"):
            v = getattr(self, name)
            if v < 0 or v % self.cycles_per_epoch:
                raise ValueError(f"{name}={v} must be a non-negative multiple of "
                                 f"cycles_per_epoch={self.cycles_per_epoch}")


@dataclass
class EpochStats:
    epoch: int
    success_rate: float
    critic_loss: float
    actor_loss: float
    k_max: int | None = None
    boundary_rate: float | None = None
    imagined_fraction: float | None = None
    wall_clock_s: float = 0.0
    eval_success: dict = field(default_factory=dict)


def train(env, agent_config: AgentConfig, train_config: TrainConfig, seed: int, *,
          reward_fn: Callable | None = None, bonus_model=None,
          curriculum: cur.CurriculumState | None = None, imaginer=None,
          eval_envs: dict | None = None, agent: Agent | None = None,
          on_epoch: Callable[[EpochStats, Agent], None] | None = None):
    """Train a goal-conditioned DDPG+HER agent; returns (agent, [EpochStats])."""
    if curriculum is not None and imaginer is None and train_config.epochs > 0:
        raise ValueError("a curriculum needs an imaginer")
    rngs = seed_streams(seed)
    if agent is None:
        agent = Agent.create(agent_config, env.obs_dim, env.action_dim, rngs["init"])
    cfg = agent.config
    if reward_fn is None:
        eps = env.epsilon
        reward_fn = lambda ag, g: reward_batch(ag, g, eps)  # noqa: E731
    buffer = ReplayBuffer(cfg.buffer_episodes, env.horizon, env.obs_dim, env.action_dim)
    eval_envs = eval_envs or {"train": env}
    n_cycles = train_config.cycles_per_epoch
    per_cycle = train_config.episodes_per_epoch // n_cycles
    updates_per_cycle = train_config.updates_per_epoch // n_cycles

    history: list[EpochStats] = []
    t0 = time.perf_counter()
    for epoch in range(train_config.epochs):
        closs, aloss, n_imagined, n_eps = [], [], 0, 0
        for _ in range(n_cycles):
            starts = [env.reset(next_seed(rngs["reset"])) for _ in range(per_cycle)]
            goals = None
            if curriculum is not None:
                goals = []
                for state, g in starts:
                    goal, used, _ = cur.select_goal(curriculum, imaginer, env.achieved(state), g,
                                                    rngs["curriculum"])
                    goals.append(goal)
                    n_imagined += used
            episodes = rollout_many(agent, env, starts, goals, explore=True, rng=rngs["explore"],
                                    reward_fn=reward_fn)
            n_eps += len(episodes)
            for ep in episodes:
                buffer.store(ep)
            agent.observe(episodes)
            if buffer.size:
                for _ in range(updates_per_cycle):
                    batch = sample_batch(buffer, cfg.batch_size, cfg.her_ratio, reward_fn, rngs["explore"])
                    bonus = None
                    if bonus_model is not None:
                        bonus = bonus_model.bonus(batch["obs_next"])
                        bonus_model.train(batch["obs_next"])
                    c, a = update(agent, batch, bonus)
                    closs.append(c)
                    aloss.append(a)
                sync_targets(agent)
            if curriculum is not None and not curriculum.complete:
                cur.evaluate_boundary(curriculum, agent, env, imaginer, next_seed(rngs["boundary"]))
                cur.maybe_advance(curriculum)

        rates = {}
        for name, e in eval_envs.items():
            seeds = [next_seed(rngs["eval"]) for _ in range(train_config.eval_rollouts)]
            rates[name] = success_rate(agent, e, seeds)
        stats = EpochStats(
            epoch=epoch,
            success_rate=next(iter(rates.values())),
            critic_loss=float(np.mean(closs)) if closs else float("nan"),
            actor_loss=float(np.mean(aloss)) if aloss else float("nan"),
            wall_clock_s=time.perf_counter() - t0,
            eval_success=rates,
        )
        if curriculum is not None:
            stats.k_max = curriculum.k_max
            stats.boundary_rate = curriculum.boundary_rate
            stats.imagined_fraction = n_imagined / max(n_eps, 1)
        history.append(stats)
        if on_epoch is not None:
            on_epoch(stats, agent)
    return agent, history
