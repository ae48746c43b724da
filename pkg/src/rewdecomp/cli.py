"""Command-line entry point: ``rewdecomp {train,eval,metrics,induced,viz}``.

Exit codes: 0 success, 1 config error, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .config import load_config
from .decomposition import evaluate_objective
from .runner import (
    RunDirectoryError,
    compute_metrics,
    load_run,
    run,
    run_induced,
    write_images,
    write_metrics,
)
from .trainer import ConfigError

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2


def cmd_train(args) -> int:
    summary = run(args.config, workers=args.workers)
    print(f"run directory: {summary.run_dir}")
    print(f"best seed {summary.best_seed}: J_disentangled = {summary.best_score:.6f}")
    return EXIT_OK


def cmd_eval(args) -> int:
    config, params, seed, _ = load_run(args.run_dir)
    mdp = config.build_mdp()
    report = evaluate_objective(mdp, params, config.alpha)
    stored = json.loads((Path(args.run_dir) / f"seed_{seed}" / "result.json").read_text())["j_disentangled"]
    print(f"seed {seed}")
    print(f"J_disentangled {report.j_disentangled!r}")
    print(f"J_nontrivial   {report.j_nontrivial!r}")
    print(f"J_independent  {report.j_independent!r}")
    print(f"stored         {stored!r}  |diff| = {abs(stored - report.j_disentangled):.3e}")
    return EXIT_OK if abs(stored - report.j_disentangled) <= args.tolerance else EXIT_RUNTIME


def cmd_metrics(args) -> int:
    config, params, seed, policies = load_run(args.run_dir)
    learned = policies if config.trainer.mode == "sampled" else None
    metrics, records = compute_metrics(config, params, seed, learned)
    write_metrics(Path(args.run_dir), metrics, records)
    print(json.dumps({k: metrics[k] for k in ("j_disentangled", "avg_saturation", "theorem1") if k in metrics},
                     indent=2))
    return EXIT_OK


def cmd_induced(args) -> int:
    config = load_config(args.config)
    run_dir = Path(config.output_dir)
    try:
        _, params, _, policies = load_run(run_dir)
    except RunDirectoryError:
        summary = run(args.config, workers=args.workers)
        _, params, _, policies = load_run(summary.run_dir)
    result = run_induced(config, params, policies, run_dir)
    print(f"induced first-half AUC  {result['induced_first_half_auc']:.4f}")
    print(f"baseline first-half AUC {result['baseline_first_half_auc']:.4f}")
    return EXIT_OK


def cmd_viz(args) -> int:
    config, params, _, policies = load_run(args.run_dir)
    write_images(Path(args.run_dir), config.build_mdp(), params, policies)
    print(f"images written to {Path(args.run_dir) / 'images'}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rewdecomp", description="Tabular reward-decomposition experiments")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="run every seed of a config and write a run directory")
    p.add_argument("config", type=Path)
    p.add_argument("--workers", type=int, default=None, help="worker processes (default: env or 1)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="re-evaluate the best decomposition of a run")
    p.add_argument("run_dir", type=Path)
    p.add_argument("--tolerance", type=float, default=1e-9)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("metrics", help="recompute metric reports of a run")
    p.add_argument("run_dir", type=Path)
    p.set_defaults(func=cmd_metrics)

    p = sub.add_parser("induced", help="induced-MDP transfer experiment (trains first if needed)")
    p.add_argument("config", type=Path)
    p.add_argument("--workers", type=int, default=None)
    p.set_defaults(func=cmd_induced)

    p = sub.add_parser("viz", help="re-emit heatmaps and policy maps of a run")
    p.add_argument("run_dir", type=Path)
    p.set_defaults(func=cmd_viz)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001 - report any runtime failure with its type
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
