# SPDX-License-Identifier: MIT
"""Command-line entry point."""
import argparse
import json
import logging
import sys
from pathlib import Path
from typing import List, Optional

from cawr.config import config as runtime_config
from cawr.dataset_io import write_dataset
from cawr.errors import CawrError, ConfigurationError
from cawr.harness import ablate, generate_from_settings, make_task, run_experiment
from cawr.oracle import run_theorem_suite
from cawr.policy import evaluate_policy
from cawr.schemas import ExperimentConfig, apply_profile, load_config, with_updates
from cawr.trainer import load_policy, resolve_score
from cawr.scores import normalized_score

logger = logging.getLogger(__name__)

LOG_FORMAT = '{"timestamp": "%(asctime)s", "level": "%(levelname)s", "name": "%(name)s", "message": "%(message)s"}'


def _load(args: argparse.Namespace) -> ExperimentConfig:
    cfg = load_config(args.config)
    if getattr(args, "profile", None):
        cfg = apply_profile(cfg, args.profile)
    return cfg


def _emit(payload: dict, out: Optional[str]) -> None:
    text = json.dumps(payload, indent=2)
    if out:
        Path(out).parent.mkdir(parents=True, exist_ok=True)
        Path(out).write_text(text, encoding="utf-8")
    print(text)


def cmd_generate_dataset(args: argparse.Namespace) -> int:
    cfg = _load(args)
    gen = cfg.dataset.generator
    if gen is None:
        raise ConfigurationError("generate-dataset needs a config with dataset.generator")
    if args.seed is not None:
        gen = gen.model_copy(update={"seed": args.seed})
    dataset, _ = generate_from_settings(gen)
    out = args.out or str(Path(runtime_config.RUNS_DIR) / f"{cfg.task}-eps{gen.epsilon}-seed{gen.seed}.jsonl")
    write_dataset(out, dataset)
    print(out)
    return 0


def cmd_train(args: argparse.Namespace) -> int:
    cfg = _load(args)
    if args.seed is not None:
        cfg = with_updates(cfg, {"seeds": [args.seed]})
    run_dir = run_experiment(cfg, args.out, args.workers)
    report = json.loads((run_dir / "aggregate.json").read_text(encoding="utf-8"))
    print(run_dir)
    return 0 if report["status"] == "ok" else 1


def cmd_evaluate(args: argparse.Namespace) -> int:
    cfg = _load(args)
    task = make_task(cfg)
    if task is None:
        raise ConfigurationError(f"task {cfg.task!r} has no simulator to evaluate in")
    policy = load_policy(args.checkpoint)
    result = evaluate_policy(
        policy,
        task,
        args.episodes or cfg.eval_episodes,
        cfg.seeds[0] if args.seed is None else args.seed,
        cfg.eval_horizon,
        cfg.gamma,
        cfg.eval_stochastic,
    )
    entry = resolve_score(cfg, task)
    _emit(
        {
            "checkpoint": str(args.checkpoint),
            "episodes": int(result.undiscounted.size),
            "mean_return": result.mean_return,
            "std_return": result.std_return,
            "mean_discounted_return": result.mean_discounted,
            "score": normalized_score(result.mean_return, entry) if entry is not None else None,
        },
        args.out,
    )
    return 0


def cmd_verify_theorems(args: argparse.Namespace) -> int:
    report = run_theorem_suite(seed=args.seed or 0, scale=args.scale)
    _emit(report, args.out)
    if not report["passed"]:
        logger.error("theorem checks failed: %s", [s["name"] for s in report["sections"] if not s["passed"]])
        return 1
    return 0


def cmd_ablate(args: argparse.Namespace) -> int:
    cfg = _load(args)
    if args.seed is not None:
        cfg = with_updates(cfg, {"seeds": [args.seed]})
    root = ablate(cfg, _split(args.losses), _split(args.priorities), args.out, args.workers)
    print(root)
    return 0


def _split(value: str) -> List[str]:
    return [part.strip() for part in value.split(",") if part.strip()]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cawr", description="Corruption-averse advantage-weighted regression")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p: argparse.ArgumentParser, config_required: bool = True) -> None:
        if config_required:
            p.add_argument("--config", required=True, help="experiment config (YAML or JSON)")
            p.add_argument("--profile", choices=["desk", "full"], default=None, help="overlay a named profile")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--out", default=None)

    p = sub.add_parser("generate-dataset", help="roll out the corrupted behavior and write JSONL")
    add_common(p)
    p.set_defaults(func=cmd_generate_dataset)

    p = sub.add_parser("train", help="train every seed and aggregate")
    add_common(p)
    p.add_argument("--workers", type=int, default=None)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="roll out a saved policy")
    add_common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--episodes", type=int, default=None)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("verify-theorems", help="run the oracle checks and write a JSON report")
    add_common(p, config_required=False)
    p.add_argument("--scale", type=float, default=1.0, help="multiplier on instance counts")
    p.set_defaults(func=cmd_verify_theorems)

    p = sub.add_parser("ablate", help="run a loss x priority grid")
    add_common(p)
    p.add_argument("--losses", default="l2,l1")
    p.add_argument("--priorities", default="none,normal")
    p.add_argument("--workers", type=int, default=None)
    p.set_defaults(func=cmd_ablate)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    """Parse arguments, run a subcommand and map library errors to exit status 1."""
    logging.basicConfig(level=runtime_config.LOG_LEVEL, format=LOG_FORMAT)
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except CawrError as e:
        logger.error(f"{args.command} failed: {e}")
        return 1


if __name__ == "__main__":
    sys.exit(main())
