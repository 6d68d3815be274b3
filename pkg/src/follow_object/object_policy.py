"""Object locomotion policies and the trajectory corpus they generate."""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from . import trainer
from .ddpg import AgentConfig, rollout_many
from .world import LocomotionEnv, WorldConfig


@dataclass
class LocomotionTrajectory:
    goal: np.ndarray
    path: np.ndarray  # (T+1, 3): o_1 .. o_{T+1}
    success: bool


class GreedyObjectPolicy:
    """Scripted locomotion: step straight at the goal, saturating at full speed."""

    def __init__(self, max_step: float):
        self.max_step = max_step

    def act(self, obs, goals, explore=False, rng=None):
        obs = np.atleast_2d(obs)
        return np.clip((np.atleast_2d(goals) - obs[:, :3]) / self.max_step, -1.0, 1.0)


def default_train_config() -> trainer.TrainConfig:
    return trainer.TrainConfig(epochs=10, episodes_per_epoch=100, updates_per_epoch=400,
                               cycles_per_epoch=50, eval_rollouts=50)


def train_object_policy(world: WorldConfig, agent_config: AgentConfig | None = None,
                        epochs: int | None = None, seed: int = 0,
                        train_config: trainer.TrainConfig | None = None, on_epoch=None):
    """DDPG+HER on the locomotion MDP with the sparse goal reward.

    Returns (agent, history).
    """
    env = LocomotionEnv(world)
    agent_config = agent_config or AgentConfig.for_horizon(world.horizon)
    train_config = train_config or default_train_config()
    if epochs is not None:
        train_config = trainer.TrainConfig(epochs, train_config.episodes_per_epoch,
                                           train_config.updates_per_epoch,
                                           train_config.cycles_per_epoch, train_config.eval_rollouts)
    return trainer.train(env, agent_config, train_config, seed, on_epoch=on_epoch)


def write_learning_curve(path: str | Path, history: Sequence[trainer.EpochStats]) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["epoch", "success_rate", "critic_loss", "actor_loss"])
        for s in history:
            w.writerow([s.epoch, repr(s.success_rate), repr(s.critic_loss), repr(s.actor_loss)])


def generate_locomotion_dataset(policy, world: WorldConfig, n_episodes: int, seed: int,
                                filter_success: bool = True, chunk: int = 100
                                ) -> list[LocomotionTrajectory]:
    """Noise-free locomotion rollouts from fresh resets."""
    env = LocomotionEnv(world)
    rng = np.random.default_rng(seed)
    seeds = [trainer.next_seed(rng) for _ in range(n_episodes)]
    out: list[LocomotionTrajectory] = []
    for i in range(0, n_episodes, chunk):
        starts = [env.reset(s) for s in seeds[i:i + chunk]]
        for ep in rollout_many(policy, env, starts):
            if ep.success or not filter_success:
                out.append(LocomotionTrajectory(ep.goal.copy(), ep.achieved.copy(), ep.success))
    if n_episodes > 0 and not out:
        raise RuntimeError(f"no successful locomotion trajectories out of {n_episodes} in {world.name}")
    return out


DATASET_COLUMNS = ["episode_id", "t", "ox", "oy", "oz", "gx", "gy", "gz"]


def write_dataset_csv(path: str | Path, dataset: Sequence[LocomotionTrajectory]) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(DATASET_COLUMNS)
        for i, tr in enumerate(dataset):
            g = [repr(float(v)) for v in tr.goal]
            for t, o in enumerate(tr.path):
                w.writerow([i, t, *(repr(float(v)) for v in o), *g])


def read_dataset_csv(path: str | Path, epsilon: float = 0.05) -> list[LocomotionTrajectory]:
    rows: dict[int, list] = {}
    goals: dict[int, np.ndarray] = {}
    with open(path, newline="") as f:
        reader = csv.DictReader(f)
        if reader.fieldnames != DATASET_COLUMNS:
            raise ValueError(f"dataset header {reader.fieldnames} != {DATASET_COLUMNS}")
        for r in reader:
            i = int(r["episode_id"])
            rows.setdefault(i, []).append((int(r["t"]), [float(r["ox"]), float(r["oy"]), float(r["oz"])]))
            goals[i] = np.array([float(r["gx"]), float(r["gy"]), float(r["gz"])])
    out = []
    for i in sorted(rows):
        path_ = np.array([p for _, p in sorted(rows[i])])
        ok = bool(np.linalg.norm(path_[-1] - goals[i]) <= epsilon)
        out.append(LocomotionTrajectory(goals[i], path_, ok))
    return out
