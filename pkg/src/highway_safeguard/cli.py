"""Command-line harness: run experiments, calibrate, summarize."""

from __future__ import annotations

import argparse
import csv
import os
import sys
from dataclasses import replace

from .calibration import (
    COMPONENT_FIELDS,
    EpisodeLikelihood,
    ProposalModel,
    is_estimate,
    likelihood_ratio,
)
from .configfile import apply_overrides, parse_config_file
from .harness import (
    GROUP_PRESETS,
    SUMMARY_COLUMNS,
    ExperimentConfig,
    parse_episodes_csv,
    run_experiment,
)


def _build_run_config(args) -> ExperimentConfig:
    cfg = ExperimentConfig.for_group(
        args.group, rounds=args.rounds, master_seed=args.seed,
        workers=args.workers)
    if args.config:
        cfg = apply_overrides(cfg, parse_config_file(args.config))
    if args.iterations is not None:
        cfg.planner = replace(cfg.planner, iterations=args.iterations)
    if args.duration is not None:
        cfg.episode_duration = args.duration
    return cfg


def _cmd_run(args) -> int:
    cfg = _build_run_config(args)
    metrics = run_experiment(cfg, args.out)
    print(f"group {cfg.group}: {cfg.policy} policy, {cfg.safeguard} safeguard, "
          f"{cfg.rounds} rounds")
    print(f"  collisions            {metrics.collisions}")
    print(f"  travel distance       {metrics.travel_distance_km:.1f} km")
    print(f"  travel time           {metrics.travel_time_h:.1f} h")
    if metrics.average_speed_kmh is not None:
        print(f"  average speed         {metrics.average_speed_kmh:.1f} km/h")
    if metrics.collision_rate_per_1000km is not None:
        print(f"  collision rate        {metrics.collision_rate_per_1000km:.1f} /1000 km")
        print(f"  hard brake rate       {metrics.hard_brake_rate_per_1000km:.1f} /1000 km")
        print(f"  intervention rate     {metrics.intervention_rate_per_1000km:.1f} /1000 km")
        print(f"  naturalistic rate     {metrics.naturalistic_rate_per_1e6km:.3g} /1e6 km")
    print(f"outputs written to {args.out}")
    return 0


def _cmd_calibrate(args) -> int:
    episodes = parse_episodes_csv(os.path.join(args.dir, "episodes.csv"))
    cfg = ExperimentConfig()
    if args.config:
        cfg = apply_overrides(cfg, parse_config_file(args.config))
    proposal = ProposalModel.from_spawn_config(cfg.spawn)

    by_round: dict[int, float] = {}
    with open(os.path.join(args.dir, "params.csv"), newline="") as fh:
        for row in csv.DictReader(fh):
            rnd = int(row["round"])
            pairs = [(name, float(row[name])) for name in COMPONENT_FIELDS]
            by_round[rnd] = by_round.get(rnd, 1.0) * likelihood_ratio(
                pairs, cfg.naturalistic, proposal)

    records = [EpisodeLikelihood(r.round_index,
                                 by_round.get(r.round_index, 1.0), r.collided)
               for r in episodes]
    rate, se = is_estimate(records)
    dist_km = sum(r.distance_km for r in episodes)
    n = len(records)
    print(f"episodes                     {n}")
    print(f"collisions                   {sum(1 for r in episodes if r.collided)}")
    print(f"naturalistic crash / episode {rate:.6g} (se {se:.3g})")
    if dist_km > 0:
        print(f"naturalistic rate            {rate * n / dist_km * 1e6:.6g} /1e6 km")
    return 0


def _cmd_report(args) -> int:
    rows = []
    for path in args.inputs:
        summary = path if path.endswith(".csv") else os.path.join(path, "summary.csv")
        with open(summary, newline="") as fh:
            for row in csv.DictReader(fh):
                rows.append(row)
    if not rows:
        print("no summaries found", file=sys.stderr)
        return 1
    labels = [f"{r['group']}:{r['safeguard']}" for r in rows]
    width = max(12, *(len(l) for l in labels))
    name_w = max(len(c) for c in SUMMARY_COLUMNS)
    print(f"{'metric':<{name_w}}  " + "  ".join(f"{l:>{width}}" for l in labels))
    for col in SUMMARY_COLUMNS:
        if col in ("group", "safeguard"):
            continue
        cells = []
        for r in rows:
            text = r.get(col, "")
            try:
                text = f"{float(text):.3f}"
            except ValueError:
                pass
            cells.append(f"{text:>{width}}")
        print(f"{col:<{name_w}}  " + "  ".join(cells))
    if args.out:
        with open(args.out, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=SUMMARY_COLUMNS)
            w.writeheader()
            for r in rows:
                w.writerow({k: r.get(k, "") for k in SUMMARY_COLUMNS})
        print(f"combined summary written to {args.out}")
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="highway-safeguard",
        description="Seedable highway safeguard experiments")
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run one experiment configuration")
    run_p.add_argument("--group", choices=sorted(GROUP_PRESETS), default="A1")
    run_p.add_argument("--rounds", type=int, default=100)
    run_p.add_argument("--seed", type=int, default=20200828)
    run_p.add_argument("--iterations", type=int, default=None,
                       help="tree-search iterations per decision")
    run_p.add_argument("--duration", type=float, default=None,
                       help="episode duration in seconds")
    run_p.add_argument("--workers", type=int, default=1)
    run_p.add_argument("--config", default=None, help="key-value config file")
    run_p.add_argument("--out", required=True, help="output directory")
    run_p.set_defaults(func=_cmd_run)

    cal_p = sub.add_parser("calibrate",
                           help="re-weight an emitted run with a naturalistic model")
    cal_p.add_argument("--dir", required=True,
                       help="directory holding episodes.csv and params.csv")
    cal_p.add_argument("--config", default=None,
                       help="config file with naturalistic.* overrides")
    cal_p.set_defaults(func=_cmd_calibrate)

    rep_p = sub.add_parser("report", help="combine summaries into one table")
    rep_p.add_argument("inputs", nargs="+",
                       help="run directories or summary.csv files")
    rep_p.add_argument("--out", default=None, help="write combined CSV here")
    rep_p.set_defaults(func=_cmd_report)

    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
