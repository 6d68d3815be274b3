"""Kinematic 2.5-D tabletop world with a point gripper and one cubic object.

Everything is axis-aligned. Motion is resolved one axis at a time (x, y, z),
each axis sweep stopping exactly at the first contact face, which gives
non-penetration without impulses or tolerances. The gripper has a square
footprint of half-width ``gripper_radius``.

Two MDPs share the geometry:

* manipulation: the gripper moves and pushes or grasps the object
  (``step_manip``, state :class:`ManipState`);
* locomotion: the object is commanded directly (``step_object``, state
  :class:`ObjectState`).
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Sequence

import numpy as np

Vec3 = tuple[float, float, float]

PUSH = "push"
PICK_AND_PLACE = "pick-and-place"
_TOL = 1e-9
_ZERO3: Vec3 = (0.0, 0.0, 0.0)


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class Box:
    lo: Vec3
    hi: Vec3

    def __post_init__(self):
        object.__setattr__(self, "lo", tuple(float(v) for v in self.lo))
        object.__setattr__(self, "hi", tuple(float(v) for v in self.hi))
        if any(l > h for l, h in zip(self.lo, self.hi)):
            raise ConfigError(f"box lo {self.lo} exceeds hi {self.hi}")

    def contains(self, p: Sequence[float], tol: float = 0.0) -> bool:
        return all(l - tol <= v <= h + tol for l, v, h in zip(self.lo, p, self.hi))


@dataclass(frozen=True)
class WorldConfig:
    name: str
    mode: str
    # (xmin, ymin, xmax, ymax); the table surface is z = 0
    table: tuple[float, float, float, float]
    spawn_region: Box
    goal_region: Box
    obstacles: tuple[Box, ...] = ()
    # probability that a sampled goal is put at table level (resting height)
    goal_table_prob: float = 1.0
    object_half_extent: float = 0.025
    gripper_radius: float = 0.02
    grasp_radius: float = 0.06
    epsilon: float = 0.05
    horizon: int = 50
    max_step_displacement: float = 0.05
    z_max: float = 0.5
    home: Vec3 = (0.5, 0.2, 0.1)
    # locomotion: whether the object may leave the table plane
    locomotion_free_z: bool = False

    def __post_init__(self):
        object.__setattr__(self, "table", tuple(float(v) for v in self.table))
        object.__setattr__(self, "obstacles", tuple(self.obstacles))
        object.__setattr__(self, "home", tuple(float(v) for v in self.home))
        validate(self)

    @property
    def rest_z(self) -> float:
        return self.object_half_extent


def validate(cfg: WorldConfig) -> None:
    if cfg.mode not in (PUSH, PICK_AND_PLACE):
        raise ConfigError(f"unknown mode {cfg.mode!r}")
    if cfg.epsilon <= 0 or cfg.horizon < 1 or cfg.max_step_displacement <= 0:
        raise ConfigError("epsilon, horizon and max_step_displacement must be positive")
    if not 0.0 <= cfg.goal_table_prob <= 1.0:
        raise ConfigError("goal_table_prob must be in [0, 1]")
    x0, y0, x1, y1 = cfg.table
    h = cfg.object_half_extent
    for label, region in (("spawn_region", cfg.spawn_region), ("goal_region", cfg.goal_region)):
        lo, hi = region.lo, region.hi
        if lo[0] < x0 + h - _TOL or lo[1] < y0 + h - _TOL or hi[0] > x1 - h + _TOL \
                or hi[1] > y1 - h + _TOL:
            raise ConfigError(f"{label} {region} is not inside the table {cfg.table}")
        if lo[2] < h - _TOL or hi[2] > cfg.z_max - h + _TOL:
            raise ConfigError(f"{label} z-range outside [{h}, {cfg.z_max - h}]")


# --------------------------------------------------------------------------- states


@dataclass(frozen=True)
class ManipState:
    gripper: Vec3
    gripper_vel: Vec3
    opening: float
    obj: Vec3
    obj_vel: Vec3
    grasped: bool = False

    @property
    def rel_pos(self) -> Vec3:
        return _sub(self.obj, self.gripper)

    @property
    def rel_vel(self) -> Vec3:
        return _sub(self.obj_vel, self.gripper_vel)

    def obs(self) -> list[float]:
        return [*self.gripper, *self.gripper_vel, self.opening, *self.obj, *self.obj_vel,
                *self.rel_pos, *self.rel_vel, float(self.grasped)]


@dataclass(frozen=True)
class ObjectState:
    obj: Vec3
    obj_vel: Vec3 = _ZERO3

    def obs(self) -> list[float]:
        return [*self.obj, *self.obj_vel]


MANIP_OBS_DIM = 20
OBJECT_OBS_DIM = 6


def _sub(a: Vec3, b: Vec3) -> Vec3:
    return (a[0] - b[0], a[1] - b[1], a[2] - b[2])


def extract_object(state: ManipState | ObjectState) -> Vec3:
    return state.obj


def reduce_state(state: ManipState) -> ObjectState:
    return ObjectState(state.obj, state.obj_vel)


def reward(o_next: Sequence[float], g: Sequence[float], epsilon: float) -> float:
    d = math.sqrt(sum((a - b) ** 2 for a, b in zip(o_next, g)))
    return 0.0 if d <= epsilon else -1.0


def reward_batch(o_next: np.ndarray, g: np.ndarray, epsilon: float) -> np.ndarray:
    d = np.linalg.norm(np.asarray(o_next) - np.asarray(g), axis=-1)
    return np.where(d <= epsilon, 0.0, -1.0)


# --------------------------------------------------------------------------- geometry


def _overlap(c: Vec3, e: float, lo: Vec3, hi: Vec3, axis: int) -> bool:
    """Whether a box (center c, half extent e) strictly overlaps [lo, hi] on
    both axes other than ``axis``."""
    for a in (0, 1, 2):
        if a == axis:
            continue
        if c[a] + e <= lo[a] + _TOL or c[a] - e >= hi[a] - _TOL:
            return False
    return True


def _sweep(c: Vec3, e: float, axis: int, delta: float, cfg: WorldConfig,
           lower: Sequence[float], upper: Sequence[float]) -> float:
    """Target coordinate along ``axis`` for a box moving by ``delta``, clamped
    to the bounds and stopped at the first obstacle face."""
    x = c[axis]
    target = min(max(x + delta, lower[axis]), upper[axis])
    if delta > 0:
        for ob in cfg.obstacles:
            face = ob.lo[axis] - e
            if x <= face + _TOL and target > face and _overlap(c, e, ob.lo, ob.hi, axis):
                target = face
    elif delta < 0:
        for ob in cfg.obstacles:
            face = ob.hi[axis] + e
            if x >= face - _TOL and target < face and _overlap(c, e, ob.lo, ob.hi, axis):
                target = face
    return target


def _with(v: Vec3, axis: int, value: float) -> Vec3:
    if axis == 0:
        return (value, v[1], v[2])
    if axis == 1:
        return (v[0], value, v[2])
    return (v[0], v[1], value)


def _bounds(cfg: WorldConfig, e: float, zmin: float) -> tuple[Vec3, Vec3]:
    x0, y0, x1, y1 = cfg.table
    return (x0 + e, y0 + e, zmin), (x1 - e, y1 - e, cfg.z_max - e)


def penetrates(c: Sequence[float], e: float, cfg: WorldConfig, tol: float = _TOL) -> bool:
    """Whether a box of half extent e at c overlaps any obstacle interior."""
    for ob in cfg.obstacles:
        if all(ob.lo[a] - e + tol < c[a] < ob.hi[a] + e - tol for a in range(3)):
            return True
    return False


def support_height(c: Vec3, cfg: WorldConfig) -> float:
    """Resting center height for the object dropped straight down from c."""
    h = cfg.object_half_extent
    best = h
    for ob in cfg.obstacles:
        top = ob.hi[2] + h
        if top <= c[2] + _TOL and top > best and _overlap(c, h, ob.lo, ob.hi, 2):
            best = top
    return best


# --------------------------------------------------------------------------- reset


def _sample_in(box: Box, rng: np.random.Generator) -> Vec3:
    p = rng.uniform(box.lo, box.hi)
    return (float(p[0]), float(p[1]), float(p[2]))


def _gripper_overlaps_object(g: Vec3, o: Vec3, cfg: WorldConfig) -> bool:
    s = cfg.gripper_radius + cfg.object_half_extent
    return all(abs(g[a] - o[a]) < s - _TOL for a in range(3))


def sample_goal(cfg: WorldConfig, rng: np.random.Generator, max_tries: int = 10_000) -> Vec3:
    h = cfg.object_half_extent
    for _ in range(max_tries):
        g = _sample_in(cfg.goal_region, rng)
        if rng.uniform() < cfg.goal_table_prob:
            g = (g[0], g[1], cfg.rest_z)
        if not penetrates(g, h, cfg):
            return g
    raise ConfigError(f"{cfg.name}: goal rejection sampling exceeded {max_tries} tries")


def sample_spawn(cfg: WorldConfig, rng: np.random.Generator, max_tries: int = 10_000) -> Vec3:
    h = cfg.object_half_extent
    for _ in range(max_tries):
        x, y, _z = _sample_in(cfg.spawn_region, rng)
        o = (x, y, cfg.rest_z)
        if not penetrates(o, h, cfg) and not _gripper_overlaps_object(cfg.home, o, cfg):
            return o
    raise ConfigError(f"{cfg.name}: spawn rejection sampling exceeded {max_tries} tries")


def reset(cfg: WorldConfig, rng_seed) -> tuple[ManipState, Vec3]:
    """Fresh episode: object uniform in the spawn region, goal uniform in the
    goal region, gripper at the home pose."""
    rng = rng_seed if isinstance(rng_seed, np.random.Generator) else np.random.default_rng(rng_seed)
    obj = sample_spawn(cfg, rng)
    goal = sample_goal(cfg, rng)
    return ManipState(cfg.home, _ZERO3, 0.0 if cfg.mode == PUSH else 1.0, obj, _ZERO3, False), goal


# --------------------------------------------------------------------------- dynamics


def _clip_action(action, n: int) -> list[float]:
    a = [float(v) for v in action]
    if len(a) != n:
        raise ValueError(f"expected a {n}-dimensional action, got {len(a)}")
    if not all(math.isfinite(v) for v in a):
        raise ValueError(f"non-finite action {a}")
    return [-1.0 if v < -1.0 else 1.0 if v > 1.0 else v for v in a]


def step_manip(state: ManipState, action, cfg: WorldConfig) -> ManipState:
    a = _clip_action(action, 4)
    step = cfg.max_step_displacement
    r, h = cfg.gripper_radius, cfg.object_half_extent
    g_lo, g_hi = _bounds(cfg, r, r)
    o_lo, o_hi = _bounds(cfg, h, h)
    g, o = state.gripper, state.obj
    grasped = state.grasped

    if cfg.mode == PUSH:
        opening = 0.0
        grasped = False
    else:
        cmd = a[3]
        opening = 0.5 * (cmd + 1.0)
        if grasped and cmd > 0.0:
            grasped = False
        elif not grasped and cmd < 0.0 and abs(g[2] - o[2]) <= h \
                and math.dist(g, o) < cfg.grasp_radius:
            grasped = True

    for axis in (0, 1, 2):
        delta = a[axis] * step
        if delta == 0.0:
            continue
        if grasped:
            tg = _sweep(g, r, axis, delta, cfg, g_lo, g_hi)
            to = _sweep(o, h, axis, delta, cfg, o_lo, o_hi)
            moved = min(abs(tg - g[axis]), abs(to - o[axis]))
            moved = math.copysign(moved, delta)
            g = _with(g, axis, g[axis] + moved)
            o = _with(o, axis, o[axis] + moved)
            continue
        tg = _sweep(g, r, axis, delta, cfg, g_lo, g_hi)
        s = r + h
        lo = (o[0] - h, o[1] - h, o[2] - h)
        hi = (o[0] + h, o[1] + h, o[2] + h)
        if _overlap(g, r, lo, hi, axis):
            if delta > 0 and g[axis] <= o[axis] - s + _TOL and tg > o[axis] - s:
                if axis != 2:
                    new_o = _sweep(o, h, axis, tg - (o[axis] - s), cfg, o_lo, o_hi)
                    o = _with(o, axis, new_o)
                tg = min(tg, o[axis] - s)
            elif delta < 0 and g[axis] >= o[axis] + s - _TOL and tg < o[axis] + s:
                if axis != 2:
                    new_o = _sweep(o, h, axis, tg - (o[axis] + s), cfg, o_lo, o_hi)
                    o = _with(o, axis, new_o)
                tg = max(tg, o[axis] + s)
        g = _with(g, axis, tg)

    if cfg.mode == PICK_AND_PLACE and not grasped:
        z = support_height(o, cfg)
        if z < o[2]:
            o = (o[0], o[1], z)
    return ManipState(g, _sub(g, state.gripper), opening, o, _sub(o, state.obj), grasped)


def step_object(zstate: ObjectState, action, cfg: WorldConfig) -> ObjectState:
    """Locomotion step: the object is displaced directly, clamped by contacts."""
    a = _clip_action(action, 3)
    step = cfg.max_step_displacement
    h = cfg.object_half_extent
    lo, hi = _bounds(cfg, h, h)
    o = zstate.obj
    for axis in (0, 1, 2):
        if axis == 2 and not cfg.locomotion_free_z:
            continue
        delta = a[axis] * step
        if delta != 0.0:
            o = _with(o, axis, _sweep(o, h, axis, delta, cfg, lo, hi))
    return ObjectState(o, _sub(o, zstate.obj))


# --------------------------------------------------------------------------- env adapters


class ManipulationEnv:
    """Robot-acts MDP over a world config."""

    obs_dim = MANIP_OBS_DIM
    action_dim = 4

    def __init__(self, cfg: WorldConfig):
        self.cfg = cfg
        self.horizon = cfg.horizon
        self.epsilon = cfg.epsilon

    def reset(self, seed) -> tuple[ManipState, Vec3]:
        return reset(self.cfg, seed)

    def step(self, state: ManipState, action) -> ManipState:
        return step_manip(state, action, self.cfg)

    @staticmethod
    def obs(state: ManipState) -> list[float]:
        return state.obs()

    @staticmethod
    def achieved(state: ManipState) -> Vec3:
        return state.obj


class LocomotionEnv:
    """Object-acts MDP: the object is a directly commanded (mocap-like) body."""

    obs_dim = OBJECT_OBS_DIM
    action_dim = 3

    def __init__(self, cfg: WorldConfig):
        self.cfg = cfg
        self.horizon = cfg.horizon
        self.epsilon = cfg.epsilon

    def reset(self, seed) -> tuple[ObjectState, Vec3]:
        state, goal = reset(self.cfg, seed)
        return reduce_state(state), goal

    def step(self, state: ObjectState, action) -> ObjectState:
        return step_object(state, action, self.cfg)

    @staticmethod
    def obs(state: ObjectState) -> list[float]:
        return state.obs()

    @staticmethod
    def achieved(state: ObjectState) -> Vec3:
        return state.obj


# --------------------------------------------------------------------------- suite

_H = 0.025
_FULL = (0.0, 0.0, 1.0, 1.0)


def _wall(x0, x1, y0, y1, height) -> Box:
    return Box((x0, y0, 0.0), (x1, y1, height))


def _suite() -> dict[str, WorldConfig]:
    air = (_H, _H + 0.3)
    near = dict(spawn_region=Box((0.35, 0.3, _H), (0.65, 0.6, _H)))
    push_simple = WorldConfig(
        "Push-Simple", PUSH, _FULL, goal_region=Box((0.35, 0.3, _H), (0.65, 0.6, _H)), **near)
    push_obstacle = WorldConfig(
        "Push-Obstacle", PUSH, _FULL,
        spawn_region=Box((0.1, 0.3, _H), (0.9, 0.45, _H)),
        goal_region=Box((0.1, 0.72, _H), (0.9, 0.9, _H)),
        obstacles=(_wall(0.0, 0.4, 0.58, 0.62, 0.1), _wall(0.6, 1.0, 0.58, 0.62, 0.1)))
    push_double = WorldConfig(
        "Push-DoubleObstacles", PUSH, _FULL,
        spawn_region=Box((0.1, 0.25, _H), (0.9, 0.35, _H)),
        goal_region=Box((0.1, 0.82, _H), (0.9, 0.92, _H)),
        obstacles=(_wall(0.3, 1.0, 0.45, 0.49, 0.1), _wall(0.0, 0.7, 0.66, 0.7, 0.1)),
        horizon=80)
    pnp_v1 = WorldConfig(
        "PnP-Simple-v1", PICK_AND_PLACE, _FULL,
        goal_region=Box((0.35, 0.3, air[0]), (0.65, 0.6, air[1])), goal_table_prob=0.5,
        locomotion_free_z=True, **near)
    # v2 drops both v1 constraints: the object spawns across the whole table
    # width (not a square near the gripper) and goals are never forced to table level
    pnp_v2 = WorldConfig(
        "PnP-Simple-v2", PICK_AND_PLACE, _FULL,
        spawn_region=Box((0.1, 0.3, _H), (0.9, 0.6, _H)),
        goal_region=Box((0.1, 0.3, air[0]), (0.9, 0.9, air[1])), goal_table_prob=0.0,
        locomotion_free_z=True)
    pnp_obstacle = WorldConfig(
        "PnP-Obstacle", PICK_AND_PLACE, _FULL,
        spawn_region=Box((0.2, 0.3, _H), (0.8, 0.45, _H)),
        goal_region=Box((0.2, 0.72, _H), (0.8, 0.9, _H)),
        obstacles=(_wall(0.0, 1.0, 0.58, 0.62, 0.12),),
        locomotion_free_z=True)
    # shelf: a cavity between a low plate and a roof, open toward the robot
    pnp_shelf = WorldConfig(
        "PnP-Shelf", PICK_AND_PLACE, _FULL,
        spawn_region=Box((0.2, 0.3, _H), (0.8, 0.5, _H)),
        goal_region=Box((0.3, 0.75, 0.1 + _H), (0.7, 0.9, 0.1 + _H)), goal_table_prob=0.0,
        obstacles=(Box((0.25, 0.7, 0.0), (0.75, 0.98, 0.1)),
                   Box((0.25, 0.7, 0.22), (0.75, 0.98, 0.26)),
                   Box((0.21, 0.7, 0.0), (0.25, 0.98, 0.26)),
                   Box((0.75, 0.7, 0.0), (0.79, 0.98, 0.26))),
        locomotion_free_z=True)
    return {c.name: c for c in (push_simple, push_obstacle, push_double, pnp_v1, pnp_v2,
                                pnp_obstacle, pnp_shelf)}


def _extras() -> dict[str, WorldConfig]:
    # a slot between two blocks; start and target regions intersect
    ins = WorldConfig(
        "PnP-Insertion", PICK_AND_PLACE, _FULL,
        spawn_region=Box((0.3, 0.35, _H), (0.7, 0.65, _H)),
        goal_region=Box((0.47, 0.47, _H), (0.53, 0.53, _H)),
        obstacles=(Box((0.3, 0.45, 0.0), (0.44, 0.55, 0.1)),
                   Box((0.56, 0.45, 0.0), (0.7, 0.55, 0.1))),
        locomotion_free_z=True)
    return {ins.name: ins}


def env_suite() -> dict[str, WorldConfig]:
    """The seven benchmark worlds, keyed by name."""
    return _suite()


def get_world(name: str) -> WorldConfig:
    worlds = {**_suite(), **_extras()}
    try:
        return worlds[name]
    except KeyError:
        raise ConfigError(f"unknown world {name!r}; choose from {sorted(worlds)}") from None


def all_worlds() -> dict[str, WorldConfig]:
    return {**_suite(), **_extras()}


# --------------------------------------------------------------------------- config files

_BOX_KEYS = ("spawn_region", "goal_region")


def config_to_dict(cfg: WorldConfig) -> dict:
    d = asdict(cfg)
    d["table"] = list(cfg.table)
    d["home"] = list(cfg.home)
    for k in _BOX_KEYS:
        d[k] = {"lo": list(getattr(cfg, k).lo), "hi": list(getattr(cfg, k).hi)}
    d["obstacles"] = [{"lo": list(b.lo), "hi": list(b.hi)} for b in cfg.obstacles]
    return d


def config_from_dict(d: dict) -> WorldConfig:
    known = {f.name for f in fields(WorldConfig)}
    unknown = set(d) - known
    if unknown:
        raise ConfigError(f"unknown world config keys: {sorted(unknown)}")
    d = dict(d)
    try:
        for k in _BOX_KEYS:
            d[k] = Box(tuple(d[k]["lo"]), tuple(d[k]["hi"]))
        d["obstacles"] = tuple(Box(tuple(b["lo"]), tuple(b["hi"])) for b in d.get("obstacles", ()))
        if "table" in d:
            d["table"] = tuple(d["table"])
        if "home" in d:
            d["home"] = tuple(d["home"])
        return WorldConfig(**d)
    except (KeyError, TypeError) as e:
        raise ConfigError(f"malformed world config: {e}") from e


def save_config(cfg: WorldConfig, path: str | Path) -> None:
    Path(path).write_text(json.dumps(config_to_dict(cfg), indent=2) + "\n")


def load_config(path: str | Path) -> WorldConfig:
    return config_from_dict(json.loads(Path(path).read_text()))


# --------------------------------------------------------------------------- trajectory csv

TRAJECTORY_COLUMNS = ["step", "gx", "gy", "gz", "ox", "oy", "oz",
                      "a0", "a1", "a2", "a3", "reward", "goal_x", "goal_y", "goal_z"]


def write_trajectory_csv(path: str | Path, states: Sequence[ManipState], actions, rewards,
                         goal: Sequence[float]) -> None:
    """One row per transition; ``states`` has one more entry than ``actions``."""
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(TRAJECTORY_COLUMNS)
        for t, (s, a, r) in enumerate(zip(states[1:], actions, rewards)):
            a = list(a) + [0.0] * (4 - len(a))
            w.writerow([t, *(repr(v) for v in s.gripper), *(repr(v) for v in s.obj),
                        *(repr(float(v)) for v in a), repr(float(r)), *(repr(float(v)) for v in goal)])
