"""Independent containment / penetration audit over batches of states."""
import numpy as np

from follow_object.world import PUSH, WorldConfig

TOL = 1e-9


def _box_violations(pos: np.ndarray, e: float, cfg: WorldConfig, zmin: float) -> np.ndarray:
    """Boolean per row: outside bounds or strictly inside an obstacle grown by e."""
    x0, y0, x1, y1 = cfg.table
    lo = np.array([x0 + e, y0 + e, zmin]) - TOL
    hi = np.array([x1 - e, y1 - e, cfg.z_max - e]) + TOL
    bad = np.any(pos < lo, axis=1) | np.any(pos > hi, axis=1)
    for ob in cfg.obstacles:
        olo = np.asarray(ob.lo) - e
        ohi = np.asarray(ob.hi) + e
        # penetration depth along the shallowest axis must not exceed the tolerance
        depth = np.minimum(pos - olo, ohi - pos).min(axis=1)
        bad |= depth > TOL
    return bad


def count_violations(cfg: WorldConfig, grippers, objects, grasped=None) -> dict[str, int]:
    g = np.asarray(grippers, dtype=np.float64).reshape(-1, 3)
    o = np.asarray(objects, dtype=np.float64).reshape(-1, 3)
    h, r = cfg.object_half_extent, cfg.gripper_radius
    out = {
        "object": int(_box_violations(o, h, cfg, h).sum()),
        "gripper": int(_box_violations(g, r, cfg, r).sum()) if len(g) else 0,
    }
    if cfg.mode == PUSH:
        out["push_z"] = int(np.sum(np.abs(o[:, 2] - h) > TOL))
        out["push_grasp"] = int(np.sum(np.asarray(grasped))) if grasped is not None else 0
    return out


def random_episode_audit(cfg: WorldConfig, n_episodes: int, seed: int, batch: int = 500,
                         locomotion: bool = False) -> dict[str, int]:
    """Run random-action episodes in lockstep and tally violations at every step."""
    from follow_object import world as W

    rng = np.random.default_rng(seed)
    totals: dict[str, int] = {}
    done = 0
    while done < n_episodes:
        n = min(batch, n_episodes - done)
        states = [W.reset(cfg, int(s))[0] for s in rng.integers(0, 2 ** 62, size=n)]
        if locomotion:
            states = [W.reduce_state(s) for s in states]
        for t in range(cfg.horizon + 1):
            objs = [s.obj for s in states]
            if locomotion:
                v = count_violations(cfg, np.empty((0, 3)), objs)
            else:
                v = count_violations(cfg, [s.gripper for s in states], objs,
                                     [s.grasped for s in states])
            for k, c in v.items():
                totals[k] = totals.get(k, 0) + c
            if t == cfg.horizon:
                break
            if locomotion:
                acts = rng.uniform(-1, 1, size=(n, 3)).tolist()
                states = [W.step_object(s, a, cfg) for s, a in zip(states, acts)]
            else:
                acts = rng.uniform(-1, 1, size=(n, 4)).tolist()
                states = [W.step_manip(s, a, cfg) for s, a in zip(states, acts)]
        done += n
    return totals
