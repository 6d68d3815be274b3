"""Command line entry point: ``follow-object <subcommand> [--config FILE] [--seed N] [--out DIR]``."""
from __future__ import annotations

import argparse
import csv
import logging
import sys
from pathlib import Path

import numpy as np

from . import harness, imaginer as im, object_policy, trainer
from .ddpg import load_agent, save_agent, success_rate
from .world import ConfigError, ManipulationEnv, get_world


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(2, f"{self.prog}: error: {message}\n")


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="experiment config (JSON)")
    p.add_argument("--seed", type=int, help="run a single seed instead of the configured list")
    p.add_argument("--out", type=Path, help="output directory (overrides output_dir)")
    p.add_argument("--env", help="environment name (overrides env)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="follow-object", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("train-object", help="train the object locomotion policy")
    _common(p)

    p = sub.add_parser("gen-dataset", help="roll out a locomotion policy into a trajectory CSV")
    _common(p)
    p.add_argument("--policy", type=Path, help="object policy checkpoint (default: OUT/object_policy)")
    p.add_argument("--episodes", type=int, help="number of rollouts (default: pipeline.dataset_episodes)")
    p.add_argument("--keep-failures", action="store_true", help="do not drop unsuccessful rollouts")

    p = sub.add_parser("train-imaginer", help="fit the goal imaginer on a trajectory CSV")
    _common(p)
    p.add_argument("--dataset", type=Path, help="trajectory CSV (default: OUT/locomotion_dataset.csv)")

    p = sub.add_parser("train-robot", help="multi-seed manipulation training")
    _common(p)
    p.add_argument("--algo", choices=harness.ALGOS, help="learner (overrides algo)")
    p.add_argument("--imaginer", type=Path, help="imaginer checkpoint for --algo fo")

    p = sub.add_parser("evaluate", help="deterministic success rate of a saved agent")
    _common(p)
    p.add_argument("--agent", type=Path, required=True, help="agent checkpoint directory")
    p.add_argument("--rollouts", type=int, help="evaluation rollouts (default: eval_rollouts)")

    p = sub.add_parser("plot", help="median/IQR learning curves from metrics CSVs")
    p.add_argument("metrics", type=Path, nargs="+", help="metrics CSV files")
    p.add_argument("--out", type=Path, default=Path("curves.svg"), help="SVG path")
    p.add_argument("--title", default="")

    p = sub.add_parser("repro-v1v2", help="train HER on both PnP-Simple versions and cross-evaluate")
    _common(p)
    return parser


def _load(args) -> harness.ExperimentConfig:
    if args.config is not None:
        if not args.config.is_file():
            raise ConfigError(f"config file not found: {args.config}")
        cfg = harness.load_config(args.config)
    else:
        cfg = harness.ExperimentConfig()
    changes = {}
    if getattr(args, "env", None):
        changes["env"] = args.env
    if getattr(args, "algo", None):
        changes["algo"] = args.algo
    if getattr(args, "seed", None) is not None:
        changes["seeds"] = [args.seed]
    if getattr(args, "out", None) is not None:
        changes["output_dir"] = str(args.out)
    if changes:
        d = {**cfg.__dict__, **changes}
        cfg = harness.config_from_dict(d)
    return cfg


def cmd_train_object(args) -> int:
    cfg = _load(args)
    pipe, world = cfg.pipeline_config(), cfg.world()
    seed = cfg.seeds[0] if args.seed is not None else pipe.seed
    agent, hist = object_policy.train_object_policy(world, epochs=pipe.object_epochs, seed=seed)
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    save_agent(agent, out / "object_policy")
    object_policy.write_learning_curve(out / "object_policy_curve.csv", hist)
    print(f"object policy success on {world.name}: {hist[-1].success_rate if hist else 0.0:.3f}")
    return 0


def cmd_gen_dataset(args) -> int:
    cfg = _load(args)
    pipe, world = cfg.pipeline_config(), cfg.world()
    out = Path(cfg.output_dir)
    policy = load_agent(args.policy or out / "object_policy")
    n = args.episodes if args.episodes is not None else pipe.dataset_episodes
    seed = cfg.seeds[0] if args.seed is not None else pipe.seed + 1
    data = object_policy.generate_locomotion_dataset(policy, world, n, seed,
                                                    filter_success=not args.keep_failures)
    out.mkdir(parents=True, exist_ok=True)
    object_policy.write_dataset_csv(out / "locomotion_dataset.csv", data)
    print(f"kept {len(data)}/{n} trajectories -> {out / 'locomotion_dataset.csv'}")
    return 0


def cmd_train_imaginer(args) -> int:
    cfg = _load(args)
    pipe, world = cfg.pipeline_config(), cfg.world()
    out = Path(cfg.output_dir)
    data = object_policy.read_dataset_csv(args.dataset or out / "locomotion_dataset.csv", world.epsilon)
    seed = cfg.seeds[0] if args.seed is not None else pipe.seed + 2
    model = im.train_imaginer(im.build_training_set(data, world.horizon), pipe.imaginer_hidden,
                              pipe.imaginer_epochs, seed, lr=pipe.imaginer_lr,
                              bounds=harness.object_bounds(world))
    im.save_imaginer(model, out / "imaginer")
    print(f"imaginer train mse {model.train_mse:.3e}, held-out mse {model.heldout_mse:.3e}")
    return 0


def cmd_train_robot(args) -> int:
    cfg = _load(args)
    model = im.load_imaginer(args.imaginer) if args.imaginer is not None else None
    records = harness.run_experiment(cfg, model)
    for r in records:
        final = f"{r.success[-1]:.3f}" if r.success else "n/a"
        print(f"seed {r.seed}: final success {final}" + (f" FAILED ({r.error})" if r.failed else ""))
    return 1 if any(r.failed for r in records) else 0


def cmd_evaluate(args) -> int:
    cfg = _load(args)
    agent = load_agent(args.agent)
    env = ManipulationEnv(cfg.world())
    n = args.rollouts if args.rollouts is not None else cfg.eval_rollouts
    rng = trainer.seed_streams(cfg.seeds[0])["eval"]
    rate = success_rate(agent, env, [trainer.next_seed(rng) for _ in range(n)])
    print(f"{cfg.env}: success {rate:.3f} over {n} rollouts")
    return 0


def cmd_plot(args) -> int:
    curves = {}
    for path in args.metrics:
        for (algo, env), runs in harness.read_metrics(path).items():
            curves[f"{algo} ({env})"] = harness.aggregate(runs)
    harness.plot_curves(curves, args.out, args.title)
    print(f"wrote {args.out}")
    return 0


V1, V2 = "PnP-Simple-v1", "PnP-Simple-v2"


def repro_v1v2(cfg: harness.ExperimentConfig) -> dict[tuple[str, str], float]:
    """Median over seeds of the final success of HER trained on one version,
    evaluated on both versions. Also writes ``matrix.csv`` under output_dir."""
    out = Path(cfg.output_dir)
    cells: dict[tuple[str, str], list[float]] = {}
    for train_env in (V1, V2):
        d = {**cfg.__dict__, "env": train_env, "algo": "her", "eval_envs": [V1, V2],
             "output_dir": str(out / f"her_{train_env}")}
        records = harness.run_experiment(harness.config_from_dict(d))
        for r in records:
            if r.failed or not r.eval_success:
                continue
            for test_env in (V1, V2):
                cells.setdefault((train_env, test_env), []).append(r.eval_success[-1][test_env])
    matrix = {k: float(np.median(v)) for k, v in cells.items()}
    with open(out / "matrix.csv", "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["trained_on", f"test_{V1}", f"test_{V2}"])
        for train_env in (V1, V2):
            w.writerow([train_env] + [repr(matrix.get((train_env, t), float("nan"))) for t in (V1, V2)])
    return matrix


def cmd_repro_v1v2(args) -> int:
    cfg = _load(args)
    Path(cfg.output_dir).mkdir(parents=True, exist_ok=True)
    matrix = repro_v1v2(cfg)
    for (tr, te), v in sorted(matrix.items()):
        print(f"trained on {tr}, tested on {te}: {v:.3f}")
    return 0


COMMANDS = {
    "train-object": cmd_train_object,
    "gen-dataset": cmd_gen_dataset,
    "train-imaginer": cmd_train_imaginer,
    "train-robot": cmd_train_robot,
    "evaluate": cmd_evaluate,
    "plot": cmd_plot,
    "repro-v1v2": cmd_repro_v1v2,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(message)s")
    try:
        return COMMANDS[args.command](args)
    except ConfigError as e:
        print(f"follow-object: config error: {e}", file=sys.stderr)
        return 2
    except (OSError, ValueError, RuntimeError) as e:
        print(f"follow-object: {type(e).__name__}: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
