"""Imagined-goal curriculum: goal mixing, uniform difficulty sampling below a
moving frontier ``k_max``, and boundary-based advancement of the frontier."""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .ddpg import rollout_many
from .imaginer import imagine


@dataclass
class CurriculumState:
    horizon: int
    p: float = 0.2
    threshold: float = 0.25
    window: int = 20
    min_fill: int = 10
    k_max: int = 2
    # False switches to the increment-only schedule (always k = k_max)
    uniform: bool = True
    boundary: deque = field(default_factory=deque)

    def __post_init__(self):
        if not 0.0 <= self.p <= 1.0:
            raise ValueError(f"p must be a probability, got {self.p}")
        if self.horizon < 1 or not 1 <= self.min_fill <= self.window:
            raise ValueError("need horizon >= 1 and 1 <= min_fill <= window")
        if not 2 <= self.k_max <= self.horizon + 1:
            self.k_max = min(max(self.k_max, 2), self.horizon + 1)
        self.boundary = deque(self.boundary, maxlen=self.window)

    @property
    def complete(self) -> bool:
        return self.k_max > self.horizon

    @property
    def boundary_rate(self) -> float:
        return float(np.mean(self.boundary)) if self.boundary else float("nan")


def sample_k(state: CurriculumState, rng: np.random.Generator) -> int:
    top = min(state.k_max, state.horizon)
    if not state.uniform:
        return top
    return int(rng.integers(1, top + 1))


def select_goal(state: CurriculumState, imaginer, o1, g, rng: np.random.Generator):
    """Returns (goal, used_imagined, k); the original goal with probability p."""
    if rng.uniform() < state.p:
        return np.asarray(g, dtype=np.float64), False, None
    k = sample_k(state, rng)
    return imagine(imaginer, np.asarray(o1, dtype=np.float64), np.asarray(g, dtype=np.float64), k), True, k


def evaluate_boundary(state: CurriculumState, policy, env, imaginer, seed) -> bool:
    """One noise-free rollout toward the frontier goal imagine(o1, g, k_max)."""
    if state.complete:
        raise ValueError("curriculum already complete; nothing to evaluate")
    start = env.reset(seed)
    o1 = np.asarray(env.achieved(start[0]), dtype=np.float64)
    h = imagine(imaginer, o1, np.asarray(start[1], dtype=np.float64), state.k_max)
    ep = rollout_many(policy, env, [start], [h])[0]
    state.boundary.append(ep.success)
    return ep.success


def maybe_advance(state: CurriculumState) -> bool:
    if state.complete or len(state.boundary) < state.min_fill:
        return False
    if np.mean(state.boundary) >= state.threshold:
        state.k_max += 1
        state.boundary.clear()
        return True
    return False


def training_iteration(agent, env, imaginer, state: CurriculumState, buffer, rng: np.random.Generator,
                       seed, curriculum_rng: np.random.Generator | None = None, reward_fn=None):
    """reset -> select_goal -> exploratory rollout toward that goal -> store.

    ``rng`` drives exploration noise; goal selection draws from
    ``curriculum_rng`` (defaults to ``rng``).
    """
    start = env.reset(seed)
    o1 = env.achieved(start[0])
    goal, _, _ = select_goal(state, imaginer, o1, start[1], curriculum_rng or rng)
    ep = rollout_many(agent, env, [start], [goal], explore=True, rng=rng, reward_fn=reward_fn)[0]
    buffer.store(ep)
    agent.observe([ep])
    return ep
