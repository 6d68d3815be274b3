"""Episode storage, hindsight relabeling and running input normalization."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

RewardFn = Callable[[np.ndarray, np.ndarray], np.ndarray]


@dataclass
class Episode:
    """One rollout. ``obs`` and ``achieved`` hold T+1 entries, the rest T."""

    goal: np.ndarray
    obs: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    achieved: np.ndarray
    # the environment's own goal; differs from ``goal`` when a curriculum goal was injected
    original_goal: np.ndarray | None = None
    # environment states, only kept when a rollout asks for them
    states: list | None = None

    @property
    def horizon(self) -> int:
        return len(self.actions)

    @property
    def success(self) -> bool:
        return bool(self.rewards[-1] == 0.0)


class ReplayBuffer:
    """FIFO ring of whole episodes."""

    def __init__(self, capacity: int, horizon: int, obs_dim: int, action_dim: int, goal_dim: int = 3):
        if capacity < 1:
            raise ValueError("capacity must be at least one episode")
        self.capacity = capacity
        self.horizon = horizon
        self.obs = np.zeros((capacity, horizon + 1, obs_dim))
        self.achieved = np.zeros((capacity, horizon + 1, goal_dim))
        self.goals = np.zeros((capacity, goal_dim))
        self.actions = np.zeros((capacity, horizon, action_dim))
        self.rewards = np.zeros((capacity, horizon))
        self.cursor = 0
        self.size = 0

    def __len__(self) -> int:
        return self.size

    def store(self, ep: Episode) -> None:
        T = self.horizon
        if ep.actions.shape[0] != T or ep.obs.shape[0] != T + 1 or ep.achieved.shape[0] != T + 1 \
                or ep.rewards.shape[0] != T:
            raise ValueError(f"episode length mismatch: buffer horizon {T}, got "
                             f"{ep.actions.shape[0]} actions / {ep.obs.shape[0]} observations")
        i = self.cursor
        self.obs[i] = ep.obs
        self.achieved[i] = ep.achieved
        self.goals[i] = ep.goal
        self.actions[i] = ep.actions
        self.rewards[i] = ep.rewards
        self.cursor = (i + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def episode(self, i: int) -> Episode:
        return Episode(self.goals[i].copy(), self.obs[i].copy(), self.actions[i].copy(),
                       self.rewards[i].copy(), self.achieved[i].copy())


def relabel_probability(her_ratio: float) -> float:
    return her_ratio / (1.0 + her_ratio)


def sample_batch(buffer: ReplayBuffer, batch_size: int, her_ratio: float, reward_fn: RewardFn,
                 rng: np.random.Generator) -> dict[str, np.ndarray]:
    """Uniform transitions with "future" hindsight relabeling.

    A fraction her_ratio / (1 + her_ratio) of the transitions get as goal an
    achieved position drawn uniformly from indices t+1..T of the same
    episode; every reward is recomputed from (achieved[t+1], goal).
    """
    if buffer.size == 0:
        raise ValueError("cannot sample from an empty replay buffer")
    T = buffer.horizon
    ep = rng.integers(0, buffer.size, size=batch_size)
    t = rng.integers(0, T, size=batch_size)
    relabel = rng.uniform(size=batch_size) < relabel_probability(her_ratio)
    offset = (rng.uniform(size=batch_size) * (T - t)).astype(np.int64)
    future = t + 1 + offset

    goals = buffer.goals[ep].copy()
    goals[relabel] = buffer.achieved[ep[relabel], future[relabel]]
    ag_next = buffer.achieved[ep, t + 1]
    return {
        "obs": buffer.obs[ep, t],
        "obs_next": buffer.obs[ep, t + 1],
        "actions": buffer.actions[ep, t],
        "goals": goals,
        "ag_next": ag_next,
        "rewards": np.asarray(reward_fn(ag_next, goals), dtype=np.float64),
        "relabeled": relabel,
        "episode": ep,
        "t": t,
        "future_t": np.where(relabel, future, -1),
    }


class Normalizer:
    """Running mean / std per dimension, applied as clip((x - mean) / std)."""

    def __init__(self, size: int, clip: float = 5.0, std_floor: float = 1e-2):
        self.size = size
        self.clip = clip
        self.std_floor = std_floor
        self.sum = np.zeros(size)
        self.sumsq = np.zeros(size)
        self.count = 0
        self.mean = np.zeros(size)
        self.std = np.ones(size)

    def update(self, x: np.ndarray) -> None:
        x = np.asarray(x, dtype=np.float64).reshape(-1, self.size)
        self.sum += x.sum(axis=0)
        self.sumsq += np.square(x).sum(axis=0)
        self.count += x.shape[0]
        self.mean = self.sum / self.count
        var = np.maximum(self.std_floor ** 2, self.sumsq / self.count - np.square(self.mean))
        self.std = np.sqrt(var)

    def __call__(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.shape[-1] != self.size:
            raise ValueError(f"normalizer expects last dimension {self.size}, got {x.shape}")
        return np.clip((x - self.mean) / self.std, -self.clip, self.clip)

    apply = __call__

    def state_dict(self) -> dict:
        return {"size": self.size, "clip": self.clip, "std_floor": self.std_floor,
                "sum": self.sum.tolist(), "sumsq": self.sumsq.tolist(), "count": self.count}

    @classmethod
    def from_state_dict(cls, d: dict) -> "Normalizer":
        n = cls(d["size"], d["clip"], d["std_floor"])
        if d["count"]:
            n.sum = np.array(d["sum"], dtype=np.float64)
            n.sumsq = np.array(d["sumsq"], dtype=np.float64)
            n.count = d["count"]
            n.mean = n.sum / n.count
            n.std = np.sqrt(np.maximum(n.std_floor ** 2, n.sumsq / n.count - np.square(n.mean)))
        return n
