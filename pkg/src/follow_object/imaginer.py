"""Regression model predicting where a locomotion trajectory is after k steps.

Input is (o1, g, k / T); the network regresses the displacement
o_{k+1} - o1 (standardized) and :func:`imagine` adds o1 back and clips the
result to the world's reachable box.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from . import nn


@dataclass
class TrainingSet:
    o1: np.ndarray
    goal: np.ndarray
    k: np.ndarray
    target: np.ndarray
    horizon: int

    def __len__(self) -> int:
        return len(self.k)

    def subset(self, idx) -> "TrainingSet":
        return TrainingSet(self.o1[idx], self.goal[idx], self.k[idx], self.target[idx], self.horizon)


@dataclass
class ImaginerModel:
    params: nn.MlpParams
    spec: nn.MlpSpec
    in_mean: np.ndarray
    in_std: np.ndarray
    out_scale: np.ndarray
    horizon: int
    lower: np.ndarray
    upper: np.ndarray
    train_mse: float = float("nan")
    heldout_mse: float = float("nan")

    def features(self, o1, g, k) -> np.ndarray:
        o1 = np.atleast_2d(np.asarray(o1, dtype=np.float64))
        g = np.atleast_2d(np.asarray(g, dtype=np.float64))
        k = np.asarray(k, dtype=np.float64).reshape(-1, 1) / self.horizon
        x = np.concatenate([o1, g, np.broadcast_to(k, (o1.shape[0], 1))], axis=1)
        return (x - self.in_mean) / self.in_std

    def predict(self, o1, g, k) -> np.ndarray:
        """Batched, unclipped prediction of o_{k+1}."""
        o1 = np.atleast_2d(np.asarray(o1, dtype=np.float64))
        out = nn.mlp_forward(self.params, self.spec, self.features(o1, g, k))
        return o1 + out * self.out_scale


def build_training_set(dataset: Sequence, horizon: int | None = None) -> TrainingSet:
    """One sample per (trajectory, k) for k = 1..T; target is path[k] (o_{k+1})."""
    if len(dataset) == 0:
        raise ValueError("empty locomotion dataset")
    paths = [np.asarray(tr.path, dtype=np.float64) for tr in dataset]
    T = horizon if horizon is not None else len(paths[0]) - 1
    for i, p in enumerate(paths):
        if len(p) < T + 1:
            raise ValueError(f"trajectory {i} has {len(p)} positions, need {T + 1}")
    ks = np.arange(1, T + 1)
    o1 = np.concatenate([np.repeat(p[:1], T, axis=0) for p in paths])
    goal = np.concatenate([np.repeat(np.asarray(tr.goal, dtype=np.float64)[None], T, axis=0)
                           for tr in dataset])
    target = np.concatenate([p[1:T + 1] for p in paths])
    return TrainingSet(o1, goal, np.tile(ks, len(paths)), target, T)


def _mse(model: ImaginerModel, data: TrainingSet) -> float:
    if len(data) == 0:
        return float("nan")
    pred = model.predict(data.o1, data.goal, data.k)
    return float(np.mean(np.sum((pred - data.target) ** 2, axis=1)))


def train_imaginer(samples: TrainingSet, hidden: Sequence[int] = (64, 64, 64), epochs: int = 200,
                   seed: int = 0, lr: float = 1e-3, batch_size: int = 256,
                   bounds: tuple[Sequence[float], Sequence[float]] | None = None,
                   heldout_fraction: float = 0.1, patience: int = 10) -> ImaginerModel:
    """Minibatch Adam on squared error; early stop on held-out plateau.

    Returns the parameters with the best held-out error (training error when
    the set is too small to split).
    """
    n = len(samples)
    if n < 1:
        raise ValueError("no training samples")
    rng = np.random.default_rng(seed)
    perm = rng.permutation(n)
    n_held = int(round(heldout_fraction * n)) if n >= 20 else 0
    held, train = samples.subset(perm[:n_held]), samples.subset(perm[n_held:])

    x_raw = np.concatenate([train.o1, train.goal, train.k[:, None] / samples.horizon], axis=1)
    in_mean = x_raw.mean(axis=0)
    in_std = np.maximum(x_raw.std(axis=0), 1e-3)
    disp = train.target - train.o1
    out_scale = np.maximum(np.sqrt(np.mean(disp ** 2, axis=0)), 1e-3)

    spec = nn.MlpSpec((7, *hidden, 3))
    params = nn.init_params(spec, rng)
    adam = nn.AdamState.for_params(params)
    if bounds is None:
        lower, upper = np.full(3, -np.inf), np.full(3, np.inf)
    else:
        lower, upper = np.asarray(bounds[0], dtype=np.float64), np.asarray(bounds[1], dtype=np.float64)
    model = ImaginerModel(params, spec, in_mean, in_std, out_scale, samples.horizon, lower, upper)

    x = (x_raw - in_mean) / in_std
    y = disp / out_scale
    m = len(train)
    best = (np.inf, params)
    stale = 0
    for _ in range(epochs):
        order = rng.permutation(m)
        for start in range(0, m, batch_size):
            idx = order[start:start + batch_size]
            out, cache = nn.forward_cache(model.params, spec, x[idx])
            err = out - y[idx]
            grads, _ = nn.mlp_backward(model.params, spec, None, (2.0 / len(idx)) * err, cache)
            model.params, adam = nn.adam_step(model.params, grads, adam, lr)
        score = _mse(model, held) if n_held else _mse(model, train)
        if not np.isfinite(score):
            raise FloatingPointError("imaginer training diverged (non-finite loss)")
        if score < best[0] - 1e-12:
            best, stale = (score, model.params), 0
        else:
            stale += 1
            if stale >= patience:
                break
    model.params = best[1]
    model.train_mse = _mse(model, train)
    model.heldout_mse = _mse(model, held) if n_held else float("nan")
    return model


def imagine(model: ImaginerModel, o1, g, k) -> np.ndarray:
    """Predicted object position after k steps, clipped to the world bounds."""
    ks = np.atleast_1d(np.asarray(k))
    if np.any(ks < 1) or np.any(ks > model.horizon):
        raise ValueError(f"k must lie in [1, {model.horizon}], got {k}")
    single = np.ndim(o1) == 1
    out = np.clip(model.predict(o1, g, ks), model.lower, model.upper)
    return out[0] if single else out


def save_imaginer(model: ImaginerModel, directory: str | Path) -> None:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    nn.save(d / "imaginer.bin", model.params, model.spec)
    meta = {k: getattr(model, k).tolist() for k in ("in_mean", "in_std", "out_scale", "lower", "upper")}
    meta.update(horizon=model.horizon, train_mse=model.train_mse, heldout_mse=model.heldout_mse)
    (d / "imaginer.json").write_text(json.dumps(meta, indent=1) + "\n")


def load_imaginer(directory: str | Path) -> ImaginerModel:
    d = Path(directory)
    params, spec = nn.load(d / "imaginer.bin")
    m = json.loads((d / "imaginer.json").read_text())
    arr = {k: np.array(m[k], dtype=np.float64) for k in ("in_mean", "in_std", "out_scale", "lower", "upper")}
    return ImaginerModel(params, spec, arr["in_mean"], arr["in_std"], arr["out_scale"], m["horizon"],
                         arr["lower"], arr["upper"], m["train_mse"], m["heldout_mse"])
