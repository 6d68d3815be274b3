"""Goal-conditioned DDPG: actor, critic, target networks, exploration, rollouts."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Callable, Protocol, Sequence

import numpy as np

from . import nn
from .replay import Episode, Normalizer
from .world import reward_batch


@dataclass
class AgentConfig:
    gamma: float = 0.98
    polyak: float = 0.05
    actor_lr: float = 1e-3
    critic_lr: float = 1e-3
    noise_eps: float = 0.2
    random_eps: float = 0.3
    action_l2: float = 1.0
    batch_size: int = 256
    hidden: tuple[int, ...] = (64, 64, 64)
    her_ratio: float = 4.0
    buffer_episodes: int = 10_000
    clip_obs: float = 5.0
    std_floor: float = 1e-2

    def __post_init__(self):
        self.hidden = tuple(int(h) for h in self.hidden)
        if not 0.0 <= self.gamma < 1.0:
            raise ValueError(f"gamma must be in [0, 1), got {self.gamma}")
        if not 0.0 <= self.polyak <= 1.0:
            raise ValueError(f"polyak must be in [0, 1], got {self.polyak}")
        if self.actor_lr < 0 or self.critic_lr < 0:
            raise ValueError("learning rates must be non-negative")
        if not 0.0 <= self.random_eps <= 1.0 or self.noise_eps < 0:
            raise ValueError("exploration parameters out of range")
        if self.batch_size < 1 or self.buffer_episodes < 1:
            raise ValueError("batch_size and buffer_episodes must be positive")

    @classmethod
    def for_horizon(cls, horizon: int, **kw) -> "AgentConfig":
        return cls(gamma=1.0 - 1.0 / horizon, **kw)


class Policy(Protocol):
    def act(self, obs: np.ndarray, goals: np.ndarray, explore: bool = False,
            rng: np.random.Generator | None = None) -> np.ndarray: ...


@dataclass
class Agent:
    config: AgentConfig
    obs_dim: int
    action_dim: int
    goal_dim: int
    actor_spec: nn.MlpSpec
    critic_spec: nn.MlpSpec
    actor: nn.MlpParams
    critic: nn.MlpParams
    actor_target: nn.MlpParams
    critic_target: nn.MlpParams
    actor_adam: nn.AdamState
    critic_adam: nn.AdamState
    obs_norm: Normalizer
    goal_norm: Normalizer
    updates: int = 0

    @classmethod
    def create(cls, config: AgentConfig, obs_dim: int, action_dim: int, rng: np.random.Generator,
               goal_dim: int = 3) -> "Agent":
        n_in = obs_dim + goal_dim
        actor_spec = nn.MlpSpec((n_in, *config.hidden, action_dim), "tanh", 1.0)
        critic_spec = nn.MlpSpec((n_in + action_dim, *config.hidden, 1))
        actor = nn.init_params(actor_spec, rng, final_scale=1e-2)
        critic = nn.init_params(critic_spec, rng)
        return cls(config, obs_dim, action_dim, goal_dim, actor_spec, critic_spec,
                   actor, critic, actor.copy(), critic.copy(),
                   nn.AdamState.for_params(actor), nn.AdamState.for_params(critic),
                   Normalizer(obs_dim, config.clip_obs, config.std_floor),
                   Normalizer(goal_dim, config.clip_obs, config.std_floor))

    def inputs(self, obs: np.ndarray, goals: np.ndarray) -> np.ndarray:
        return np.concatenate([self.obs_norm(obs), self.goal_norm(goals)], axis=-1)

    def policy(self, obs: np.ndarray, goals: np.ndarray) -> np.ndarray:
        return nn.mlp_forward(self.actor, self.actor_spec, self.inputs(obs, goals))

    def act(self, obs, goals, explore=False, rng=None) -> np.ndarray:
        return act(self, obs, goals, explore, rng)

    def observe(self, episodes: Sequence[Episode]) -> None:
        """Update input statistics from newly stored episodes."""
        for ep in episodes:
            self.obs_norm.update(ep.obs)
            self.goal_norm.update(ep.achieved)
            self.goal_norm.update(ep.goal)


def act(agent: Agent, obs, goals, explore: bool = False, rng: np.random.Generator | None = None
        ) -> np.ndarray:
    obs = np.asarray(obs, dtype=np.float64)
    goals = np.asarray(goals, dtype=np.float64)
    if not (np.all(np.isfinite(obs)) and np.all(np.isfinite(goals))):
        raise ValueError("non-finite state or goal passed to act")
    a = agent.policy(obs, goals)
    if not explore:
        return a
    cfg = agent.config
    a = np.clip(a + cfg.noise_eps * rng.standard_normal(a.shape), -1.0, 1.0)
    random_actions = rng.uniform(-1.0, 1.0, size=a.shape)
    replace = rng.uniform(size=a.shape[:-1]) < cfg.random_eps
    return np.where(replace[..., None], random_actions, a)


def critic_targets(agent: Agent, batch: dict, bonus: np.ndarray | None = None) -> np.ndarray:
    gamma = agent.config.gamma
    x2 = agent.inputs(batch["obs_next"], batch["goals"])
    a2 = nn.mlp_forward(agent.actor_target, agent.actor_spec, x2)
    q2 = nn.mlp_forward(agent.critic_target, agent.critic_spec, np.concatenate([x2, a2], axis=1))[:, 0]
    r = batch["rewards"] if bonus is None else batch["rewards"] + bonus
    y = r + gamma * q2
    return np.clip(y, -1.0 / (1.0 - gamma), 0.0)


def update(agent: Agent, batch: dict, bonus: np.ndarray | None = None) -> tuple[float, float]:
    """One critic and one actor Adam step on a sampled batch."""
    cfg = agent.config
    y = critic_targets(agent, batch, bonus)
    x = agent.inputs(batch["obs"], batch["goals"])
    a = batch["actions"]
    n = x.shape[0]

    q, cache = nn.forward_cache(agent.critic, agent.critic_spec, np.concatenate([x, a], axis=1))
    err = q[:, 0] - y
    critic_loss = float(np.mean(err * err))
    critic_grads, _ = nn.mlp_backward(agent.critic, agent.critic_spec, None,
                                      (2.0 / n) * err[:, None], cache)

    pi, a_cache = nn.forward_cache(agent.actor, agent.actor_spec, x)
    q_pi, q_cache = nn.forward_cache(agent.critic, agent.critic_spec, np.concatenate([x, pi], axis=1))
    actor_loss = float(-np.mean(q_pi) + cfg.action_l2 * np.mean(pi * pi))
    if not (np.isfinite(critic_loss) and np.isfinite(actor_loss)):
        raise FloatingPointError(
            f"non-finite loss (critic {critic_loss}, actor {actor_loss}); batch reward range "
            f"[{batch['rewards'].min()}, {batch['rewards'].max()}], target range [{y.min()}, {y.max()}]")
    _, dq_dinput = nn.mlp_backward(agent.critic, agent.critic_spec, None,
                                   np.full((n, 1), -1.0 / n), q_cache)
    d_pi = dq_dinput[:, -agent.action_dim:] + cfg.action_l2 * 2.0 * pi / pi.size
    actor_grads, _ = nn.mlp_backward(agent.actor, agent.actor_spec, None, d_pi, a_cache)

    agent.critic, agent.critic_adam = nn.adam_step(agent.critic, critic_grads, agent.critic_adam,
                                                   cfg.critic_lr)
    agent.actor, agent.actor_adam = nn.adam_step(agent.actor, actor_grads, agent.actor_adam,
                                                 cfg.actor_lr)
    agent.updates += 1
    return critic_loss, actor_loss


def sync_targets(agent: Agent, tau: float | None = None) -> None:
    tau = agent.config.polyak if tau is None else tau
    agent.actor_target = nn.polyak(agent.actor_target, agent.actor, tau)
    agent.critic_target = nn.polyak(agent.critic_target, agent.critic, tau)


# --------------------------------------------------------------------------- rollouts


def rollout_many(policy: Policy, env, starts: Sequence[tuple], goals: Sequence | None = None,
                 explore: bool = False, rng: np.random.Generator | None = None,
                 reward_fn: Callable | None = None, keep_states: bool = False) -> list[Episode]:
    """Run len(starts) episodes in lockstep with one batched policy call per step.

    ``starts`` are (state, env_goal) pairs from ``env.reset``. When ``goals``
    is given, it replaces the environment goal for acting and rewards.
    """
    n = len(starts)
    if n == 0:
        return []
    T = env.horizon
    states = [s for s, _ in starts]
    original = np.array([g for _, g in starts], dtype=np.float64)
    g = original.copy() if goals is None else np.array(goals, dtype=np.float64).reshape(n, -1)
    obs = np.zeros((n, T + 1, env.obs_dim))
    achieved = np.zeros((n, T + 1, g.shape[1]))
    actions = np.zeros((n, T, env.action_dim))
    trace = [[s] for s in states] if keep_states else None
    for t in range(T + 1):
        obs[:, t] = [env.obs(s) for s in states]
        achieved[:, t] = [env.achieved(s) for s in states]
        if t == T:
            break
        a = policy.act(obs[:, t], g, explore, rng)
        actions[:, t] = a
        a_list = a.tolist()
        states = [env.step(s, ai) for s, ai in zip(states, a_list)]
        if keep_states:
            for tr, s in zip(trace, states):
                tr.append(s)
    if reward_fn is None:
        rewards = reward_batch(achieved[:, 1:], g[:, None, :], env.epsilon)
    else:
        rewards = reward_fn(achieved[:, 1:], np.broadcast_to(g[:, None, :], achieved[:, 1:].shape))
    eps = [Episode(g[i], obs[i], actions[i], rewards[i], achieved[i], original[i]) for i in range(n)]
    if keep_states:
        for ep, tr in zip(eps, trace):
            ep.states = tr
    return eps


def rollout(policy: Policy, env, seed, goal_override=None, explore: bool = False,
            rng: np.random.Generator | None = None) -> Episode:
    start = env.reset(seed)
    goals = None if goal_override is None else [goal_override]
    return rollout_many(policy, env, [start], goals, explore, rng)[0]


def success_rate(policy: Policy, env, seeds: Sequence[int]) -> float:
    """Deterministic rollouts against the environment's own goals."""
    if len(seeds) == 0:
        return 0.0
    eps = rollout_many(policy, env, [env.reset(s) for s in seeds])
    return float(np.mean([ep.success for ep in eps]))


# --------------------------------------------------------------------------- checkpoints


def save_agent(agent: Agent, directory: str | Path) -> None:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    nn.save(d / "actor.bin", agent.actor, agent.actor_spec)
    nn.save(d / "critic.bin", agent.critic, agent.critic_spec)
    nn.save(d / "actor_target.bin", agent.actor_target, agent.actor_spec)
    nn.save(d / "critic_target.bin", agent.critic_target, agent.critic_spec)
    manifest = {
        "config": asdict(agent.config),
        "obs_dim": agent.obs_dim, "action_dim": agent.action_dim, "goal_dim": agent.goal_dim,
        "updates": agent.updates,
        "obs_norm": agent.obs_norm.state_dict(), "goal_norm": agent.goal_norm.state_dict(),
    }
    (d / "manifest.json").write_text(json.dumps(manifest, indent=1) + "\n")


def load_agent(directory: str | Path) -> Agent:
    d = Path(directory)
    m = json.loads((d / "manifest.json").read_text())
    actor, actor_spec = nn.load(d / "actor.bin")
    critic, critic_spec = nn.load(d / "critic.bin")
    actor_t, _ = nn.load(d / "actor_target.bin")
    critic_t, _ = nn.load(d / "critic_target.bin")
    cfg = AgentConfig(**m["config"])
    return Agent(cfg, m["obs_dim"], m["action_dim"], m["goal_dim"], actor_spec, critic_spec,
                 actor, critic, actor_t, critic_t,
                 nn.AdamState.for_params(actor), nn.AdamState.for_params(critic),
                 Normalizer.from_state_dict(m["obs_norm"]), Normalizer.from_state_dict(m["goal_norm"]),
                 m["updates"])
