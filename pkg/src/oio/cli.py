"""``oio`` command line: run experiments, train Q-tables, replay traces.

Exit codes: 0 success, 1 configuration error, 2 runtime error, 3 an
acceptance threshold failed in ``--check`` mode.
"""
from __future__ import annotations

import argparse
import csv
import logging
import sys
from collections import Counter
from dataclasses import replace
from pathlib import Path

import numpy as np

from .config import load_config
from .errors import ConfigurationError
from .harness import (
    ALGORITHMS,
    TrialConfig,
    check_experiments,
    emit_report,
    run_experiment,
    trained_table,
    training_env,
)
from .navigation import ALGORITHM_ALIASES as RL_ALIASES
from .navigation import train
from .sensors import SensorKind

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME, EXIT_CHECK = 0, 1, 2, 3
ALGORITHM_CHOICES = ("gradient", "belief", "belief_map", "rl", "all")
SENSOR_CHOICES = ("mox", "ec", "all")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigurationError(message)


def _parser() -> argparse.ArgumentParser:
    p = _Parser(prog="oio", description="Olfactory inertial odometry experiments")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    r = sub.add_parser("run", help="run seeded trials and write reports")
    r.add_argument("--algorithm", choices=ALGORITHM_CHOICES, default="gradient")
    r.add_argument("--sensor", choices=SENSOR_CHOICES, default="mox")
    r.add_argument("--trials", type=int)
    r.add_argument("--seed", type=int)
    r.add_argument("--config", type=Path)
    r.add_argument("--out", type=Path, default=Path("oio-out"))
    r.add_argument("--format", action="append", choices=("csv", "json"), dest="formats")
    r.add_argument("--check", action="store_true", help="exit 3 when an acceptance threshold fails")

    t = sub.add_parser("train", help="train a Q-table on the lattice task")
    t.add_argument("--episodes", type=int)
    t.add_argument("--algorithm", choices=("esarsa", "qlearn", "expected_sarsa", "q_learning"), default="esarsa")
    t.add_argument("--seed", type=int)
    t.add_argument("--config", type=Path)
    t.add_argument("--out", type=Path, required=True)
    t.add_argument("--curve", type=Path, help="learning curve CSV (default: next to --out)")

    rp = sub.add_parser("replay", help="summarise a trial trace CSV")
    rp.add_argument("--trace", type=Path, required=True)
    return p


def _base_config(args) -> TrialConfig:
    cfg = load_config(args.config) if getattr(args, "config", None) else TrialConfig()
    if getattr(args, "seed", None) is not None:
        cfg = replace(cfg, seed=args.seed)
    return cfg


def _cmd_run(args) -> int:
    cfg = _base_config(args)
    if args.trials is not None:
        cfg = replace(cfg, trials=args.trials)
    algorithms = ALGORITHMS if args.algorithm == "all" else (args.algorithm,)
    sensors = tuple(SensorKind) if args.sensor == "all" else (SensorKind(args.sensor.upper()),)
    experiments = []
    curves = {}
    for alg in algorithms:
        for kind in sensors:
            cell = replace(cfg, algorithm=alg, sensor_kind=kind)
            logging.getLogger("oio").info("running %s / %s, %d trials", cell.algorithm, kind.value, cell.trials)
            summary, results = run_experiment(cell)
            experiments.append((summary, results))
            if cell.algorithm == "rl" and cell.q_table is None and kind is sensors[0]:
                n_tables = cell.trials if cell.rl_retrain_per_trial else 1
                for k in range(n_tables):
                    curves[f"trial_{k}"] = trained_table(cell, k)[1]
    formats = tuple(args.formats) if args.formats else ("csv", "json")
    emit_report(experiments, args.out, formats, learning_curves=curves or None)
    for summary, _ in experiments:
        row = summary.row()
        print(
            f"{row['algorithm']:>10} {row['sensor']:>3}  success {row['successes']}/{row['trials']}"
            f"  mean {row['mean_time_s']:.1f} s  std {row['std_time_s']:.1f} s"
        )
    if args.check:
        checks = check_experiments([s for s, _ in experiments])
        for c in checks:
            print(f"{'PASS' if c.passed else 'FAIL'} {c.name}: {c.detail}")
        if not all(c.passed for c in checks):
            return EXIT_CHECK
    return EXIT_OK


def _cmd_train(args) -> int:
    cfg = _base_config(args)
    if args.episodes is not None:
        if args.episodes < 0:
            raise ConfigurationError("--episodes must be >= 0")
        cfg = replace(cfg, rl=replace(cfg.rl, episodes=args.episodes))
    algorithm = RL_ALIASES.get(args.algorithm, args.algorithm)
    env = training_env(replace(cfg, rl_retrain_per_trial=False))
    rng = np.random.default_rng(np.random.SeedSequence(cfg.seed, spawn_key=(2**31 - 1, 1)))
    q, returns = train(env, cfg.rl, algorithm, rng)
    q.save(args.out, cfg.grid)
    curve = args.curve or args.out.with_name(args.out.stem + "_curve.csv")
    with open(curve, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("episode", "return"))
        for i, g in enumerate(returns):
            w.writerow((i, f"{float(g):.6f}"))
    print(f"trained {algorithm} for {cfg.rl.episodes} episodes; {len(q.values)} states; table -> {args.out}; curve -> {curve}")
    return EXIT_OK


def _cmd_replay(args) -> int:
    try:
        with open(args.trace, newline="") as fh:
            rows = list(csv.DictReader(fh))
    except OSError as exc:
        raise ConfigurationError(f"cannot read trace {args.trace}: {exc.strerror}") from exc
    if not rows or "t" not in rows[0]:
        raise ConfigurationError(f"{args.trace} is not a trial trace")
    t = np.array([float(r["t"]) for r in rows])
    baseline = [r for r in rows if r["action"] == "baseline"]
    moves = [r for r in rows if r["action"] != "baseline"]
    pos = np.array([[float(r[k]) for k in ("x", "y", "z")] for r in rows])
    path = float(np.sum(np.linalg.norm(np.diff(pos, axis=0), axis=1))) if len(pos) > 1 else 0.0
    actions = Counter(r["action"] for r in moves)
    in_plume = sum(r["in_plume"] == "1" for r in moves)
    print(f"trace {args.trace}")
    print(f"  samples {len(rows)} ({len(baseline)} baseline), t from {t[0]:.2f} to {t[-1]:.2f} s")
    print(f"  path length {path:.3f} m, final position ({pos[-1, 0]:.3f}, {pos[-1, 1]:.3f}, {pos[-1, 2]:.3f})")
    print(f"  in plume {in_plume}/{len(moves)} samples")
    for name in sorted(actions):
        print(f"  {name:>9}: {actions[name]} samples")
    return EXIT_OK


def main(argv=None) -> int:
    try:
        args = _parser().parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(name)s: %(message)s")
        handler = {"run": _cmd_run, "train": _cmd_train, "replay": _cmd_replay}[args.command]
        return handler(args)
    except ConfigurationError as exc:
        print(f"oio: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001 - surfaced as the runtime exit code
        print(f"oio: error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
