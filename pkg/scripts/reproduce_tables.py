# -*- coding: utf-8 -*-
"""
Trains the four presets (and optionally the fixed-map sweep) under identical
epochs, seed and data, then writes the comparison tables next to the run
reports.

Outputs (under --out, default results/tables):
  <config>.json            one RunReport per run
  comparison.csv|xlsx      one row per preset, baseline first
  sweep.csv|xlsx           one row per fixed-map count (with --sweep)

Usage:
    python scripts/reproduce_tables.py --epochs 10
    python scripts/reproduce_tables.py --dataset synthetic --epochs 5 --sweep --xlsx
"""
import argparse
import os
import sys
from pathlib import Path

sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

import polars as pl

from app.config import (
    DATASETS,
    DEFAULT_ARCHITECTURE,
    DEFAULT_BATCH_SIZE,
    DEFAULT_EPOCHS,
    DEFAULT_LEARNING_RATE,
    DEFAULT_SEED,
    PRESETS,
    RESULTS_DIR,
    configure_logging,
)
from app.errors import GaborNetError
from app.services import experiment
from app.services.architecture import parse_architecture
from app.services.comparison import compare_many, default_sweep_counts, sweep_table
from app.services.cost import load_cost_table
from app.services.experiment import parse_run_config
from app.utils.exporters import write_table


def main() -> int:
    parser = argparse.ArgumentParser(description="Reproduce the preset and sweep comparison tables")
    parser.add_argument("--arch", default=DEFAULT_ARCHITECTURE)
    parser.add_argument("--epochs", type=int, default=DEFAULT_EPOCHS)
    parser.add_argument("--batch", type=int, default=DEFAULT_BATCH_SIZE)
    parser.add_argument("--lr", type=float, default=DEFAULT_LEARNING_RATE)
    parser.add_argument("--seed", type=int, default=DEFAULT_SEED)
    parser.add_argument("--dataset", choices=DATASETS, default=DATASETS[0])
    parser.add_argument("--data-dir", default=None)
    parser.add_argument("--train-limit", type=int, default=None)
    parser.add_argument("--test-limit", type=int, default=None)
    parser.add_argument("--partial-fraction", type=float, default=None,
                        help="also run gabor-all with this freeze point")
    parser.add_argument("--cost-table", default=None)
    parser.add_argument("--sweep", action="store_true")
    parser.add_argument("--xlsx", action="store_true", help="write Excel instead of CSV")
    parser.add_argument("--out", default=str(RESULTS_DIR / "tables"))
    args = parser.parse_args()

    configure_logging()
    out = Path(args.out)
    suffix = ".xlsx" if args.xlsx else ".csv"
    common = {
        "arch": args.arch,
        "epochs": args.epochs,
        "batch_size": args.batch,
        "learning_rate": args.lr,
        "seed": args.seed,
        "dataset": args.dataset,
        "data_dir": args.data_dir,
        "train_limit": args.train_limit,
        "test_limit": args.test_limit,
        "cost_table": args.cost_table,
    }

    try:
        table = load_cost_table(args.cost_table)
        first = parse_run_config(common)
        data = experiment.load_run_data(first)

        reports = {}
        for preset in PRESETS:
            report = experiment.run(parse_run_config({**common, "preset": preset}), table, data)
            report.save(out / f"{report.config_name}.json")
            reports[report.config_name] = report
        if args.partial_fraction is not None:
            report = experiment.run(
                parse_run_config({**common, "preset": "gabor-all", "partial_fraction": args.partial_fraction}),
                table, data,
            )
            report.save(out / f"{report.config_name}.json")
            reports[report.config_name] = report

        baseline = reports["baseline"]
        df = compare_many(list(reports.values()), baseline, table)
        with pl.Config(tbl_rows=-1, tbl_cols=-1, tbl_width_chars=200):
            print(df)
        print(f"[INFO] Comparison written to {write_table(df, out / f'comparison{suffix}')}")

        if args.sweep:
            conv = [spec for spec in parse_architecture(args.arch) if spec.is_conv]
            sweep_reports = []
            for i in default_sweep_counts(conv[1].out_shape[0]):
                report = experiment.run(parse_run_config({**common, "sweep_i": i}), table, data)
                report.save(out / f"{report.config_name}.json")
                sweep_reports.append(report)
            df = sweep_table(sweep_reports, baseline, table)
            with pl.Config(tbl_rows=-1, tbl_cols=-1, tbl_width_chars=200):
                print(df)
            print(f"[INFO] Sweep written to {write_table(df, out / f'sweep{suffix}')}")
    except GaborNetError as e:
        print(f"[ERROR] {e}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
