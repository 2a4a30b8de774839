"""Command-line interface.

Verbs: train, attack, dtc, sweep, pairs, dp-sweep, report. Every run verb
reads one config file, executes for each seed, and appends records to
<out>/runs.jsonl; `report` turns the store into CSV tables and the trend
figure. Exit code 0 only if every requested run succeeded.
"""

import argparse
import os
import sys

from .harness import parse_config
from .harness.records import RunStore
from .harness.reports import DP_TREND_COLUMNS, emit_reports, write_csv
from .harness.runner import run_dp_sweep, run_jobs, run_pairs, run_sweep

_STAGES = {
    "train": ("train",),
    "attack": ("train", "attack"),
    "dtc": ("train", "dtc"),
}


def _add_common(parser, config_required=True):
    parser.add_argument("--config", required=config_required, help="run configuration file")
    parser.add_argument("--out", required=True, help="output directory (runs.jsonl, snapshots, reports)")
    parser.add_argument("--seeds", help="comma-separated seed list overriding the config")
    parser.add_argument("--workers", type=int, default=1, help="parallel runs (default 1)")


def build_parser():
    parser = argparse.ArgumentParser(prog="leakaudit", description=__doc__)
    sub = parser.add_subparsers(dest="verb", required=True)
    for verb, text in [
        ("train", "train a model and record accuracy, history, and loss stats"),
        ("attack", "train (or reuse the snapshot) and run both membership attacks"),
        ("dtc", "train (or reuse the snapshot) and score distance-to-confident"),
        ("sweep", "run one mechanism across sweep.values plus the baseline"),
        ("pairs", "run the anchor mechanism alone and with each partner"),
        ("dp-sweep", "run the DP pipeline across dp_sweep.sigmas"),
    ]:
        _add_common(sub.add_parser(verb, help=text))
    report = sub.add_parser("report", help="emit summary/scenario/trend tables and the figure")
    report.add_argument("--out", required=True, help="directory holding runs.jsonl")
    return parser


def _seeds(args, cfg):
    if args.seeds:
        return [int(s) for s in args.seeds.split(",") if s.strip()]
    return cfg.seeds


def main(argv=None):
    args = build_parser().parse_args(argv)
    if args.verb == "report":
        store = RunStore(args.out)
        records = store.load()
        if not records:
            print("no records found in", store.path, file=sys.stderr)
            return 1
        paths = emit_reports(records, args.out)
        for name in sorted(paths):
            print(f"wrote {paths[name]}")
        return 0

    cfg = parse_config(args.config)
    seeds = _seeds(args, cfg)
    store = RunStore(args.out)
    if args.verb in _STAGES:
        jobs = [(cfg, seed, _STAGES[args.verb]) for seed in seeds]
        records = run_jobs(jobs, store, workers=args.workers)
    elif args.verb == "sweep":
        records = run_sweep(_override_seeds(cfg, seeds), store, workers=args.workers)
    elif args.verb == "pairs":
        records = run_pairs(_override_seeds(cfg, seeds), store, workers=args.workers)
    elif args.verb == "dp-sweep":
        records, trend = run_dp_sweep(_override_seeds(cfg, seeds), store, workers=args.workers)
        write_csv(os.path.join(store.out_dir, "dp_trend.csv"), DP_TREND_COLUMNS, trend)
    else:  # pragma: no cover - argparse rejects unknown verbs
        raise AssertionError(args.verb)

    failed = [r for r in records if r.status != "ok"]
    for record in records:
        line = f"{record.run_id} seed={record.seed} {record.status}"
        if record.status == "ok":
            if record.val_acc is not None:
                line += f" acc={record.val_acc:.4f}"
            if record.attacks and "yeom" in record.attacks:
                line += f" adv_yeom={record.attacks['yeom']['adv']:.4f}"
            if record.dtc and record.dtc.get("gap") is not None:
                line += f" dtc_gap={record.dtc['gap']:.4f}"
        else:
            line += f" ({record.error})"
        print(line)
    if failed:
        print(f"{len(failed)} of {len(records)} runs failed", file=sys.stderr)
        return 1
    return 0


def _override_seeds(cfg, seeds):
    from dataclasses import replace

    return replace(cfg, seeds=list(seeds))


if __name__ == "__main__":
    raise SystemExit(main())
