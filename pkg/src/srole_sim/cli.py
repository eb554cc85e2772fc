"""``sim`` command line: run, campaign, pretrain, figures.

Exit codes: 0 success, 2 configuration error, 3 unresolved overloads above
``unresolved_threshold``.
"""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .config import METHODS, grid, load_raw, parse_config
from .errors import ConfigError
from .metrics import FIGURES, csv_row, emit_csv, emit_figure_data, read_aggregate

EXIT_OK, EXIT_CONFIG, EXIT_ANOMALY = 0, 2, 3


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="sim", description="Shielded multi-agent scheduling simulator")
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="one evaluation episode")
    run.add_argument("--config", required=True)
    run.add_argument("--method", choices=METHODS)
    run.add_argument("--seed", type=int, default=0)
    run.add_argument("--out", required=True, help="directory for raw.csv")

    camp = sub.add_parser("campaign", help="grid of configs x replications")
    camp.add_argument("--config", required=True)
    camp.add_argument("--replications", type=int, default=5)
    camp.add_argument("--out", required=True)

    pre = sub.add_parser("pretrain", help="offline training, saves a Q-table snapshot")
    pre.add_argument("--config", required=True)
    pre.add_argument("--episodes", type=int)
    pre.add_argument("--method", choices=METHODS)
    pre.add_argument("--snapshot", required=True)

    fig = sub.add_parser("figures", help="plot-ready table from a campaign aggregate")
    fig.add_argument("--in", dest="indir", required=True)
    fig.add_argument("--figure", required=True, choices=sorted(FIGURES))
    fig.add_argument("--out", help="output CSV (default <in>/figure-<name>.csv)")
    return p


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    # imported here so `sim --help` stays fast
    from .engine import pretrain, run_campaign, run_episode
    try:
        if args.command == "run":
            cfg = parse_config(args.config, method=args.method)
            ep = run_episode(cfg, args.seed)
            out = Path(args.out)
            out.mkdir(parents=True, exist_ok=True)
            emit_csv([ep.record], out / "raw.csv")
            print(csv_row(ep.record))
            if ep.record.unresolved > cfg.unresolved_threshold:
                print(f"unresolved overloads: {ep.record.unresolved}", file=sys.stderr)
                return EXIT_ANOMALY
        elif args.command == "campaign":
            configs = grid(load_raw(args.config))
            records, table = run_campaign(configs, args.replications, args.out)
            print(f"{len(records)} episodes, {len(table)} grid points -> {args.out}")
            worst = max((r.unresolved for r in records), default=0)
            if worst > min(c.unresolved_threshold for c in configs):
                print(f"unresolved overloads in some episodes (max {worst})", file=sys.stderr)
                return EXIT_ANOMALY
        elif args.command == "pretrain":
            cfg = parse_config(args.config, method=args.method)
            policy = pretrain(cfg, cfg.method, args.episodes)
            Path(args.snapshot).write_text(policy.table.to_text())
            print(f"{cfg.method}: {policy.episodes} episodes, {len(policy.table)} entries -> {args.snapshot}")
        elif args.command == "figures":
            rows = read_aggregate(Path(args.indir) / "aggregate.csv")
            out = args.out or Path(args.indir) / f"figure-{args.figure}.csv"
            emit_figure_data(rows, args.figure, out)
            print(out)
    except ConfigError as e:
        where = f" [{e.key}]" if e.key else ""
        print(f"config error{where}: {e}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
