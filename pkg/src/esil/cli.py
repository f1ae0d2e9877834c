"""Operator commands: train, eval, curves.

    esil train --config configs/emptyroom_esil.cfg --seed 7
    esil eval  --checkpoint runs/.../best.ckpt --env empty-room --episodes 100
    esil curves runs/run_a runs/run_b ... --out curves.csv

A training run produces a self-contained directory: the input config
echoed verbatim (config.cfg), the fully resolved configuration
(resolved.cfg, itself a valid config file that reproduces the run),
metrics.csv, latest/best checkpoints, and summary.json. The default
output root is $ESIL_RUN_ROOT, falling back to ./runs.
"""

from __future__ import annotations

import argparse
import csv
import os
import sys
from pathlib import Path

import numpy as np

from . import _kernels
from .config import ConfigError, canonical_config_text, load_config
from .envs import ENV_NAMES, env_spec, make_env
from .policy import CheckpointError, load_checkpoint
from .seeding import STREAM_EVAL, rng_for
from .trainer import evaluate, train

CURVES_HEADER = (
    "epoch",
    "success_median",
    "success_p25",
    "success_p75",
    "beta_median",
    "beta_p25",
    "beta_p75",
)


def _run_root() -> Path:
    return Path(os.environ.get("ESIL_RUN_ROOT", "runs"))


def _pick_run_dir(out, config) -> Path:
    if out is not None:
        return Path(out)
    base = _run_root() / f"{config.env}_{config.variant}_seed{config.master_seed}"
    candidate, n = base, 1
    while candidate.exists():
        n += 1
        candidate = base.with_name(f"{base.name}-{n}")
    return candidate


def cmd_train(args) -> int:
    config = load_config(args.config, overrides=args.override, seed=args.seed)
    run_dir = _pick_run_dir(args.out, config)
    run_dir.mkdir(parents=True, exist_ok=True)
    (run_dir / "config.cfg").write_text(Path(args.config).read_text())
    (run_dir / "resolved.cfg").write_text(canonical_config_text(config))
    print(f"run directory: {run_dir}")
    print(f"kernel backend: {_kernels.BACKEND}")
    result = train(config, run_dir=run_dir, log=lambda msg: print(msg, flush=True))
    if result.metrics:
        last = result.metrics[-1]
        print(f"final success rate: {last.success_rate:.3f} (epoch {last.epoch})")
    return 0


def cmd_eval(args) -> int:
    policy = load_checkpoint(args.checkpoint)
    spec = env_spec(args.env)
    expected_input = spec.observation_dim + spec.achieved_goal_dim
    if policy.net.input_size != expected_input:
        raise CheckpointError(
            f"checkpoint expects {policy.net.input_size}-dim inputs but {args.env} "
            f"provides {expected_input}"
        )
    if policy.net.output_size != spec.action_dim:
        raise CheckpointError(
            f"checkpoint has {policy.net.output_size} action outputs but {args.env} "
            f"needs {spec.action_dim}"
        )
    expected_kind = "categorical" if spec.action_kind == "discrete" else "diagonal-gaussian"
    if policy.kind != expected_kind:
        raise CheckpointError(
            f"checkpoint distribution is {policy.kind} but {args.env} needs {expected_kind}"
        )
    env = make_env(args.env, evaluation=True)
    rng = rng_for(args.seed, STREAM_EVAL)
    successes = 0
    for episode in range(args.episodes):
        rate = evaluate(policy, env, 1, rng)
        outcome = "success" if rate > 0 else "failure"
        print(f"episode {episode + 1:3d}: {outcome}")
        successes += int(rate > 0)
    print(f"success rate: {successes / args.episodes:.3f} ({successes}/{args.episodes})")
    return 0


def _load_metrics_columns(run_dir: Path) -> dict:
    path = run_dir / "metrics.csv"
    if not path.exists():
        raise ConfigError(f"{run_dir}: no metrics.csv")
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise ConfigError(f"{run_dir}: metrics.csv has no data rows")
    return {
        "epoch": [int(r["epoch"]) for r in rows],
        "success_rate": [float(r["success_rate"]) for r in rows],
        "beta": [float(r["beta"]) for r in rows],
    }


def cmd_curves(args) -> int:
    runs = [Path(d) for d in args.run_dirs]
    columns = [_load_metrics_columns(d) for d in runs]
    lengths = {len(c["epoch"]) for c in columns}
    if len(lengths) > 1:
        detail = ", ".join(f"{d} has {len(c['epoch'])} epochs" for d, c in zip(runs, columns))
        raise ConfigError(f"run directories disagree on epoch count: {detail}")

    success = np.array([c["success_rate"] for c in columns], dtype=float)
    beta = np.array([c["beta"] for c in columns], dtype=float)
    epochs = columns[0]["epoch"]

    out = open(args.out, "w", newline="") if args.out else sys.stdout
    try:
        writer = csv.writer(out)
        writer.writerow(CURVES_HEADER)
        for i, epoch in enumerate(epochs):
            row = [epoch]
            for series in (success, beta):
                col = series[:, i]
                row += [
                    repr(float(np.percentile(col, 50.0, method="linear"))),
                    repr(float(np.percentile(col, 25.0, method="linear"))),
                    repr(float(np.percentile(col, 75.0, method="linear"))),
                ]
            writer.writerow(row)
    finally:
        if args.out:
            out.close()
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="esil", description="Goal-conditioned policy-gradient training lab"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="run a training configuration")
    p_train.add_argument("--config", required=True, help="path to a key = value config file")
    p_train.add_argument("--seed", type=int, default=None, help="override master_seed")
    p_train.add_argument(
        "--override",
        action="append",
        default=[],
        metavar="KEY=VALUE",
        help="override any config key (repeatable)",
    )
    p_train.add_argument("--out", default=None, help="run directory (default: auto under run root)")
    p_train.set_defaults(func=cmd_train)

    p_eval = sub.add_parser("eval", help="evaluate a checkpoint greedily")
    p_eval.add_argument("--checkpoint", required=True)
    p_eval.add_argument("--env", required=True, choices=ENV_NAMES)
    p_eval.add_argument("--episodes", type=int, default=10)
    p_eval.add_argument("--seed", type=int, default=0)
    p_eval.set_defaults(func=cmd_eval)

    p_curves = sub.add_parser("curves", help="aggregate metrics across runs")
    p_curves.add_argument("run_dirs", nargs="+", help="run directories with metrics.csv")
    p_curves.add_argument("--out", default=None, help="output CSV (default: stdout)")
    p_curves.set_defaults(func=cmd_curves)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, CheckpointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
