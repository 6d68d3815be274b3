"""Multi-seed experiment driver: training runs, per-epoch evaluation, CSV
metrics, median/IQR aggregation and SVG learning curves."""
from __future__ import annotations

import csv
import hashlib
import json
import logging
import traceback
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Sequence
from xml.sax.saxutils import escape

import numpy as np

from . import baselines, imaginer as im, object_policy, trainer
from .curriculum import CurriculumState
from .ddpg import AgentConfig, save_agent
from .world import ConfigError, ManipulationEnv, WorldConfig, get_world

log = logging.getLogger(__name__)

ALGOS = ("her", "shaped", "rnd", "fo")
METRIC_COLUMNS = ["epoch", "seed", "algo", "env", "success_rate", "k_max"]
TIMING_COLUMNS = ["epoch", "seed", "wall_clock_s"]


@dataclass
class PipelineConfig:
    """Object policy -> locomotion corpus -> imaginer, for the fo algorithm."""

    object_epochs: int = 10
    dataset_episodes: int = 1000
    filter_success: bool = True
    imaginer_hidden: tuple[int, ...] = (64, 64, 64)
    imaginer_epochs: int = 200
    imaginer_lr: float = 1e-3
    seed: int = 1234


@dataclass
class ExperimentConfig:
    env: str = "PnP-Simple-v1"
    algo: str = "her"
    seeds: list[int] = field(default_factory=lambda: [0, 1, 2, 3, 4])
    epochs: int = 50
    episodes_per_epoch: int = 100
    updates_per_epoch: int = 2000
    cycles_per_epoch: int = 50
    batch_size: int = 256
    eval_rollouts: int = 50
    eval_envs: list[str] = field(default_factory=list)
    agent: dict = field(default_factory=dict)
    curriculum: dict = field(default_factory=dict)
    pipeline: dict = field(default_factory=dict)
    rnd: dict = field(default_factory=dict)
    output_dir: str = "runs/experiment"

    def __post_init__(self):
        if self.algo not in ALGOS:
            raise ConfigError(f"unknown algorithm {self.algo!r}; choose from {ALGOS}")
        if not self.seeds:
            raise ConfigError("at least one seed is required")
        for name in ("episodes_per_epoch", "cycles_per_epoch", "batch_size"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be positive")
        if self.epochs < 0 or self.eval_rollouts < 0 or self.updates_per_epoch < 0:
            raise ConfigError("epochs, eval_rollouts and updates_per_epoch must be non-negative")
        self.seeds = [int(s) for s in self.seeds]
        # fail fast on typos in nested sections
        self.world()
        self.agent_config(self.world())
        self.curriculum_state(self.world())
        self.pipeline_config()
        self.rnd_config()

    def world(self) -> WorldConfig:
        return get_world(self.env)

    def train_config(self) -> trainer.TrainConfig:
        try:
            return trainer.TrainConfig(self.epochs, self.episodes_per_epoch, self.updates_per_epoch,
                                       self.cycles_per_epoch, self.eval_rollouts)
        except ValueError as e:
            raise ConfigError(str(e)) from e

    def agent_config(self, world: WorldConfig) -> AgentConfig:
        kw = {"gamma": 1.0 - 1.0 / world.horizon, "batch_size": self.batch_size, **self.agent}
        return _build(AgentConfig, kw, "agent")

    def curriculum_state(self, world: WorldConfig) -> CurriculumState:
        return _build(CurriculumState, {"horizon": world.horizon, **self.curriculum}, "curriculum")

    def pipeline_config(self) -> PipelineConfig:
        return _build(PipelineConfig, self.pipeline, "pipeline")

    def rnd_config(self) -> baselines.RndConfig:
        return _build(baselines.RndConfig, self.rnd, "rnd")

    def digest(self) -> str:
        blob = json.dumps(asdict(self), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


def _build(cls, kw: dict, section: str):
    known = {f.name for f in fields(cls)}
    unknown = set(kw) - known
    if unknown:
        raise ConfigError(f"unknown keys in [{section}]: {sorted(unknown)}")
    try:
        return cls(**kw)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"invalid [{section}] section: {e}") from e


def config_from_dict(d: dict) -> ExperimentConfig:
    known = {f.name for f in fields(ExperimentConfig)}
    unknown = set(d) - known
    if unknown:
        raise ConfigError(f"unknown experiment config keys: {sorted(unknown)}")
    try:
        return ExperimentConfig(**d)
    except TypeError as e:
        raise ConfigError(str(e)) from e


def load_config(path: str | Path) -> ExperimentConfig:
    try:
        text = Path(path).read_text()
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e}") from e
    try:
        return config_from_dict(json.loads(text))
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}: invalid JSON ({e})") from e


# --------------------------------------------------------------------------- fo pipeline


def object_bounds(world: WorldConfig) -> tuple[list[float], list[float]]:
    x0, y0, x1, y1 = world.table
    h = world.object_half_extent
    return [x0 + h, y0 + h, h], [x1 - h, y1 - h, world.z_max - h]


def build_imaginer(world: WorldConfig, pipe: PipelineConfig, out: Path | None = None):
    """Train the locomotion policy, roll out its corpus and fit the imaginer."""
    obj_agent, obj_hist = object_policy.train_object_policy(world, epochs=pipe.object_epochs,
                                                           seed=pipe.seed)
    dataset = object_policy.generate_locomotion_dataset(obj_agent, world, pipe.dataset_episodes,
                                                       pipe.seed + 1, pipe.filter_success)
    samples = im.build_training_set(dataset, world.horizon)
    model = im.train_imaginer(samples, pipe.imaginer_hidden, pipe.imaginer_epochs, pipe.seed + 2,
                              lr=pipe.imaginer_lr, bounds=object_bounds(world))
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        save_agent(obj_agent, out / "object_policy")
        object_policy.write_learning_curve(out / "object_policy_curve.csv", obj_hist)
        object_policy.write_dataset_csv(out / "locomotion_dataset.csv", dataset)
        im.save_imaginer(model, out / "imaginer")
    log.info("%s: object policy success %.2f, %d/%d trajectories kept, imaginer held-out mse %.2e",
             world.name, obj_hist[-1].success_rate if obj_hist else float("nan"), len(dataset),
             pipe.dataset_episodes, model.heldout_mse)
    return model


def train_fo(world: WorldConfig, imaginer, agent_config: AgentConfig | None = None,
             train_config: trainer.TrainConfig | None = None, seed: int = 0,
             curriculum: CurriculumState | None = None, eval_worlds: dict | None = None,
             on_epoch=None):
    env = ManipulationEnv(world)
    agent_config = agent_config or AgentConfig.for_horizon(world.horizon)
    curriculum = curriculum or CurriculumState(world.horizon)
    eval_envs = None
    if eval_worlds:
        eval_envs = {world.name: env, **{n: ManipulationEnv(w) for n, w in eval_worlds.items()}}
    return trainer.train(env, agent_config, train_config or trainer.TrainConfig(), seed,
                         curriculum=curriculum, imaginer=imaginer, eval_envs=eval_envs,
                         on_epoch=on_epoch)


def train_robot(config: ExperimentConfig, seed: int, imaginer=None, on_epoch=None):
    world = config.world()
    eval_worlds = {n: get_world(n) for n in config.eval_envs if n != world.name}
    ac, tc = config.agent_config(world), config.train_config()
    if config.algo == "fo":
        return train_fo(world, imaginer, ac, tc, seed, config.curriculum_state(world),
                        eval_worlds, on_epoch)
    return baselines.train_baseline(config.algo, world, ac, tc, seed, config.rnd_config(),
                                    eval_worlds, on_epoch)


# --------------------------------------------------------------------------- runs


@dataclass
class RunRecord:
    seed: int
    algo: str
    env: str
    config_hash: str
    success: list[float] = field(default_factory=list)
    k_max: list = field(default_factory=list)
    wall_clock: list[float] = field(default_factory=list)
    eval_success: list[dict] = field(default_factory=list)
    boundary_rate: list = field(default_factory=list)
    imagined_fraction: list = field(default_factory=list)
    error: str | None = None

    @property
    def failed(self) -> bool:
        return self.error is not None


def _fmt(v) -> str:
    return "" if v is None else repr(v)


def write_metrics(path: Path, records: Sequence[RunRecord]) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(METRIC_COLUMNS)
        for r in records:
            for e, (s, k) in enumerate(zip(r.success, r.k_max)):
                w.writerow([e, r.seed, r.algo, r.env, repr(s), _fmt(k)])


def write_timings(path: Path, records: Sequence[RunRecord]) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(TIMING_COLUMNS)
        for r in records:
            for e, t in enumerate(r.wall_clock):
                w.writerow([e, r.seed, f"{t:.3f}"])


def write_curriculum_trace(path: Path, rec: RunRecord) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["epoch", "k_max", "boundary_success_rate", "imagined_fraction"])
        for e, row in enumerate(zip(rec.k_max, rec.boundary_rate, rec.imagined_fraction)):
            w.writerow([e, *(_fmt(v) for v in row)])


def run_experiment(config: ExperimentConfig, imaginer=None) -> list[RunRecord]:
    """Train every seed, evaluating after each epoch with the original goals.

    Writes ``seed_<n>/metrics.csv`` (deterministic), ``seed_<n>/timing.csv``,
    and combined ``metrics.csv`` / ``aggregate.csv`` under ``output_dir``.
    A failing seed is recorded (``error``) and the other seeds still run.
    """
    out = Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.json").write_text(json.dumps(asdict(config), indent=2) + "\n")
    world = config.world()
    if config.algo == "fo" and imaginer is None and config.epochs > 0:
        imaginer = build_imaginer(world, config.pipeline_config(), out / "pipeline")
    records = []
    for seed in config.seeds:
        rec = RunRecord(seed, config.algo, world.name, config.digest())

        def on_epoch(stats, agent, rec=rec):
            rec.success.append(stats.success_rate)
            rec.k_max.append(stats.k_max)
            rec.wall_clock.append(stats.wall_clock_s)
            rec.eval_success.append(dict(stats.eval_success))
            rec.boundary_rate.append(stats.boundary_rate)
            rec.imagined_fraction.append(stats.imagined_fraction)
            log.info("%s %s seed %d epoch %d: success %.3f k_max %s", config.algo, world.name, seed,
                     stats.epoch, stats.success_rate, stats.k_max)

        try:
            agent, _ = train_robot(config, seed, imaginer, on_epoch)
            save_agent(agent, out / f"seed_{seed}" / "agent")
        except Exception as e:  # one seed failing must not abort the others
            rec.error = f"{type(e).__name__}: {e}"
            log.error("seed %d failed:\n%s", seed, traceback.format_exc())
        seed_dir = out / f"seed_{seed}"
        seed_dir.mkdir(parents=True, exist_ok=True)
        write_metrics(seed_dir / "metrics.csv", [rec])
        write_timings(seed_dir / "timing.csv", [rec])
        if config.algo == "fo":
            write_curriculum_trace(seed_dir / "curriculum.csv", rec)
        records.append(rec)
    write_metrics(out / "metrics.csv", records)
    write_timings(out / "timing.csv", records)
    ok = [r for r in records if not r.failed and r.success]
    if ok:
        write_aggregate(out / "aggregate.csv", aggregate(ok))
    return records


# --------------------------------------------------------------------------- aggregation


def aggregate(records: Sequence[RunRecord] | Sequence[Sequence[float]]) -> list[tuple[float, float, float]]:
    """Per-epoch (median, q25, q75) across seeds, linear-interpolated quantiles.

    Accepts RunRecords or plain per-seed curves; curves are truncated to the
    shortest one.
    """
    curves = [r.success if isinstance(r, RunRecord) else list(r) for r in records]
    if not curves:
        raise ValueError("nothing to aggregate")
    n = min(len(c) for c in curves)
    table = np.array([c[:n] for c in curves], dtype=np.float64)
    rows = []
    for e in range(n):
        q25, med, q75 = np.percentile(table[:, e], [25, 50, 75])
        rows.append((float(med), float(q25), float(q75)))
    return rows


def write_aggregate(path: Path, rows) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["epoch", "median", "q25", "q75"])
        for e, (m, lo, hi) in enumerate(rows):
            w.writerow([e, repr(m), repr(lo), repr(hi)])


def read_metrics(path: str | Path) -> dict[tuple[str, str], list[list[float]]]:
    """Per-(algo, env) list of per-seed success curves from a metrics CSV."""
    runs: dict[tuple[str, str, int], list[tuple[int, float]]] = {}
    with open(path, newline="") as f:
        for r in csv.DictReader(f):
            key = (r["algo"], r["env"], int(r["seed"]))
            runs.setdefault(key, []).append((int(r["epoch"]), float(r["success_rate"])))
    out: dict[tuple[str, str], list[list[float]]] = {}
    for (algo, env, _), pts in sorted(runs.items()):
        out.setdefault((algo, env), []).append([s for _, s in sorted(pts)])
    return out


# --------------------------------------------------------------------------- svg

_PALETTE = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf"]


def render_svg(curves: dict[str, Sequence[tuple[float, float, float]]], title: str = "",
               width: int = 640, height: int = 400) -> str:
    """Median line and shaded IQR band per algorithm; y axis is success in [0, 1]."""
    if not curves or any(len(rows) == 0 for rows in curves.values()):
        raise ValueError("cannot plot an empty aggregate")
    left, right, top, bottom = 60, 140, 40, 50
    pw, ph = width - left - right, height - top - bottom
    n_epochs = max(len(rows) for rows in curves.values())
    span = max(n_epochs - 1, 1)

    def px(e):
        return left + pw * e / span

    def py(v):
        return top + ph * (1.0 - v)

    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
             f'viewBox="0 0 {width} {height}">',
             f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
             f'<text x="{width / 2:.1f}" y="22" text-anchor="middle" font-size="15">{escape(title)}</text>',
             f'<line x1="{left}" y1="{py(0):.2f}" x2="{left + pw}" y2="{py(0):.2f}" stroke="black"/>',
             f'<line x1="{left}" y1="{py(0):.2f}" x2="{left}" y2="{py(1):.2f}" stroke="black"/>']
    for v in (0.0, 0.25, 0.5, 0.75, 1.0):
        parts.append(f'<text x="{left - 8}" y="{py(v) + 4:.2f}" text-anchor="end" font-size="11">{v:g}</text>')
        parts.append(f'<line x1="{left}" y1="{py(v):.2f}" x2="{left + pw}" y2="{py(v):.2f}" '
                     f'stroke="#dddddd" stroke-width="0.5"/>')
    for e in sorted({0, n_epochs - 1, (n_epochs - 1) // 2}):
        parts.append(f'<text x="{px(e):.2f}" y="{py(0) + 18:.2f}" text-anchor="middle" font-size="11">{e}</text>')
    parts.append(f'<text x="{left + pw / 2:.1f}" y="{height - 10}" text-anchor="middle" font-size="12">epoch</text>')
    parts.append(f'<text x="16" y="{top + ph / 2:.1f}" text-anchor="middle" font-size="12" '
                 f'transform="rotate(-90 16 {top + ph / 2:.1f})">success rate</text>')
    for i, (name, rows) in enumerate(curves.items()):
        color = _PALETTE[i % len(_PALETTE)]
        upper = [f"{px(e):.2f},{py(hi):.2f}" for e, (_, _, hi) in enumerate(rows)]
        lower = [f"{px(e):.2f},{py(lo):.2f}" for e, (_, lo, _) in reversed(list(enumerate(rows)))]
        parts.append(f'<polygon class="iqr" points="{" ".join(upper + lower)}" fill="{color}" '
                     f'fill-opacity="0.2" stroke="none"/>')
        median = [f"{px(e):.2f},{py(m):.2f}" for e, (m, _, _) in enumerate(rows)]
        parts.append(f'<polyline class="median" points="{" ".join(median)}" fill="none" '
                     f'stroke="{color}" stroke-width="2"/>')
        ly = top + 16 * i + 8
        parts.append(f'<line x1="{left + pw + 12}" y1="{ly}" x2="{left + pw + 32}" y2="{ly}" '
                     f'stroke="{color}" stroke-width="2"/>')
        parts.append(f'<text x="{left + pw + 36}" y="{ly + 4}" font-size="11">{escape(name)}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def plot_curves(curves: dict[str, Sequence[tuple[float, float, float]]], path: str | Path,
                title: str = "") -> Path:
    path = Path(path)
    path.write_text(render_svg(curves, title))
    return path
