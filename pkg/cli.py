"""
GaborNet Lab command line.

Usage:
    python cli.py run --preset half-half --epochs 10 --out results/half-half.json
    python cli.py compare --baseline results/baseline.json --candidate results/*.json --out table.csv
    python cli.py bank --k 6 --out results/bank
    python cli.py check-grad --trials 10
    python cli.py costs --arch mnist --sweep
"""
import argparse
import logging
import sys
from pathlib import Path
from typing import List, Optional

import numpy as np
import polars as pl

from app.config import (
    DATASETS,
    DEFAULT_ARCHITECTURE,
    DEFAULT_BATCH_SIZE,
    DEFAULT_EPOCHS,
    DEFAULT_LEARNING_RATE,
    DEFAULT_SEED,
    GRAD_CHECK_STEP,
    GRAD_CHECK_TOLERANCE,
    PRESET_BASELINE,
    RESULTS_DIR,
    SYNTH_DEFAULT_SAMPLES,
    SYNTH_DEFAULT_SIZE,
    configure_logging,
)
from app.errors import GaborNetError
from app.services import experiment
from app.services.architecture import parse_architecture
from app.services.comparison import compare_many, preset_configs, projected_table, sweep_config_list, sweep_table
from app.services.cost import backprop_shares, load_cost_table
from app.services.experiment import RunReport, build_network_config, parse_run_config
from app.services.gabor import make_gabor_bank
from app.services.network import Network, numerical_gradient_check
from app.services.policy import init_layer_states, masks_for_epoch
from app.utils.exporters import export_bank_pgm, write_table
from app.utils.formatters import format_factor, format_number, format_percent

logger = logging.getLogger("gabornet")

# Small network used by check-grad when no architecture is given
CHECK_GRAD_ARCH = "64 (3x3)2c 2s 3o"


def _print_table(df: pl.DataFrame) -> None:
    with pl.Config(tbl_rows=-1, tbl_cols=-1, tbl_width_chars=200):
        print(df)


# =============================================================================
# SUBCOMMANDS
# =============================================================================

def cmd_run(args: argparse.Namespace) -> int:
    run_config = parse_run_config({
        "arch": args.arch,
        "preset": args.preset,
        "sweep_i": args.sweep_i,
        "epochs": args.epochs,
        "batch_size": args.batch,
        "learning_rate": args.lr,
        "seed": args.seed,
        "dataset": args.dataset,
        "data_dir": args.data_dir,
        "cost_table": args.cost_table,
        "partial_fraction": args.partial_fraction,
        "partial_from_layer": args.partial_from_layer,
        "distinct_layer2_bank": args.distinct_layer2_bank,
        "fix_deeper_layers": args.fix_deeper_layers,
        "train_limit": args.train_limit,
        "test_limit": args.test_limit,
        "synth_samples": args.synth_samples,
        "synth_size": args.synth_size,
    })
    report = experiment.run(run_config)
    out = Path(args.out) if args.out else RESULTS_DIR / f"{report.config_name}.json"
    report.save(out)
    print(f"{report.config_name}: accuracy {format_percent(report.final_accuracy)}, "
          f"{format_number(report.total_macs)} MACs, "
          f"{format_number(report.storage.total_stored_values)} stored values")
    print(f"Report written to {out}")
    return 0


def cmd_compare(args: argparse.Namespace) -> int:
    table = load_cost_table(args.cost_table)
    baseline = RunReport.load(args.baseline)
    candidates = [RunReport.load(path) for path in args.candidate]
    df = sweep_table(candidates, baseline, table) if args.sweep else compare_many(candidates, baseline, table)
    _print_table(df)
    if args.out:
        print(f"Table written to {write_table(df, Path(args.out))}")
    return 0


def cmd_bank(args: argparse.Namespace) -> int:
    bank = make_gabor_bank(args.k, size=args.size)
    written = export_bank_pgm(bank, Path(args.out), prefix=args.prefix)
    for entry in bank:
        print(f"{entry.key}")
    print(f"{len(written)} PGM files written to {args.out}")
    return 0


def cmd_check_grad(args: argparse.Namespace) -> int:
    arch = args.arch or CHECK_GRAD_ARCH
    layers = parse_architecture(arch)
    run_config = parse_run_config(
        {"arch": arch, "preset": args.preset, "dataset": "synthetic", "seed": args.seed}
    )
    config = build_network_config(run_config, layers)
    masks, _ = masks_for_epoch(config, 0.0)
    rng = np.random.default_rng(args.seed)
    worst = 0.0
    failed = 0
    for trial in range(args.trials):
        network = Network(layers, init_layer_states(config, args.seed + trial, np.float64))
        image = rng.uniform(0.0, 1.0, size=layers[0].in_shape)
        label = int(rng.integers(layers[-1].size))
        report = numerical_gradient_check(network, (image, label), args.tolerance, args.step, masks)
        worst = max(worst, report.max_relative_error)
        failed += 0 if report.passed else 1
        print(f"trial {trial + 1}: max relative error {report.max_relative_error:.3e} "
              f"({report.parameters_checked} parameters, worst {report.worst_parameter})")
    print(f"{'PASS' if not failed else 'FAIL'}: worst {worst:.3e}, tolerance {args.tolerance:g}")
    return 0 if not failed else 1


def cmd_costs(args: argparse.Namespace) -> int:
    table = load_cost_table(args.cost_table)
    configs = preset_configs(args.arch, partial_fraction=args.partial_fraction)
    baseline = next(c for c in configs if c.name == PRESET_BASELINE)
    if args.sweep:
        configs = sweep_config_list(args.arch)
    df = projected_table(configs, baseline, args.n_train, args.batch, args.epochs, table)
    _print_table(df.with_columns(
        pl.col("memory_access_factor").map_elements(format_factor, return_dtype=pl.Utf8)
    ))
    for layer, share in backprop_shares(baseline, table).items():
        print(f"baseline conv layer {layer}: backprop share {format_percent(100 * share)}")
    if args.out:
        print(f"Table written to {write_table(df, Path(args.out))}")
    return 0


# =============================================================================
# PARSER
# =============================================================================

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gabornet",
        description="Train CNNs with fixed Gabor kernels and report training costs.",
    )
    parser.add_argument("--log-level", default="INFO", help="logging level (default INFO)")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="train one configuration")
    run.add_argument("--arch", default=DEFAULT_ARCHITECTURE, help="architecture text or preset (mnist, tich, facedet)")
    policy = run.add_mutually_exclusive_group()
    policy.add_argument("--preset", default=PRESET_BASELINE, help="baseline, gabor1, gabor-all or half-half")
    policy.add_argument("--sweep-i", type=int, default=None, help="fixed maps in the second conv layer")
    run.add_argument("--epochs", type=int, default=DEFAULT_EPOCHS)
    run.add_argument("--batch", type=int, default=DEFAULT_BATCH_SIZE)
    run.add_argument("--lr", type=float, default=DEFAULT_LEARNING_RATE)
    run.add_argument("--seed", type=int, default=DEFAULT_SEED)
    run.add_argument("--dataset", choices=DATASETS, default=DATASETS[0])
    run.add_argument("--data-dir", default=None, help="directory with the MNIST IDX files")
    run.add_argument("--cost-table", default=None, help="JSON cost table")
    run.add_argument("--partial-fraction", type=float, default=None, help="freeze point p in (0, 1)")
    run.add_argument("--partial-from-layer", type=int, default=0, help="conv layers below stay fixed")
    run.add_argument("--distinct-layer2-bank", action="store_true")
    run.add_argument("--fix-deeper-layers", action="store_true")
    run.add_argument("--train-limit", type=int, default=None)
    run.add_argument("--test-limit", type=int, default=None)
    run.add_argument("--synth-samples", type=int, default=SYNTH_DEFAULT_SAMPLES)
    run.add_argument("--synth-size", type=int, default=SYNTH_DEFAULT_SIZE)
    run.add_argument("--out", default=None, help="report path (default results/<config>.json)")
    run.set_defaults(func=cmd_run)

    compare = sub.add_parser("compare", help="compare run reports against a baseline")
    compare.add_argument("--baseline", required=True)
    compare.add_argument("--candidate", nargs="+", default=[])
    compare.add_argument("--sweep", action="store_true", help="candidates are sweep runs")
    compare.add_argument("--cost-table", default=None)
    compare.add_argument("--out", default=None, help=".csv or .xlsx")
    compare.set_defaults(func=cmd_compare)

    bank = sub.add_parser("bank", help="export Gabor kernels as PGM tiles")
    bank.add_argument("--k", type=int, default=6)
    bank.add_argument("--size", type=int, default=5)
    bank.add_argument("--prefix", default="gabor")
    bank.add_argument("--out", default=str(RESULTS_DIR / "bank"))
    bank.set_defaults(func=cmd_bank)

    check = sub.add_parser("check-grad", help="compare backprop with finite differences")
    check.add_argument("--arch", default=None)
    check.add_argument("--preset", default=PRESET_BASELINE)
    check.add_argument("--trials", type=int, default=10)
    check.add_argument("--seed", type=int, default=DEFAULT_SEED)
    check.add_argument("--tolerance", type=float, default=GRAD_CHECK_TOLERANCE)
    check.add_argument("--step", type=float, default=GRAD_CHECK_STEP)
    check.set_defaults(func=cmd_check_grad)

    costs = sub.add_parser("costs", help="counting-only cost comparison (no data needed)")
    costs.add_argument("--arch", default=DEFAULT_ARCHITECTURE)
    costs.add_argument("--n-train", type=int, default=60000)
    costs.add_argument("--batch", type=int, default=DEFAULT_BATCH_SIZE)
    costs.add_argument("--epochs", type=int, default=1)
    costs.add_argument("--partial-fraction", type=float, default=None)
    costs.add_argument("--sweep", action="store_true")
    costs.add_argument("--cost-table", default=None)
    costs.add_argument("--out", default=None, help=".csv or .xlsx")
    costs.set_defaults(func=cmd_costs)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    configure_logging(args.log_level)
    try:
        return args.func(args)
    except GaborNetError as e:
        print(f"[ERROR] {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
