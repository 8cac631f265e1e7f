"""
Comparison service.

Builds comparison tables (one row per configuration) from run reports,
or from counting alone when no training is wanted.
"""
import logging
from typing import Any, Dict, List, Optional, Sequence

import polars as pl

from app.config import (
    DEFAULT_BATCH_SIZE,
    PRESET_BASELINE,
    PRESET_LABELS,
    PRESETS,
    SWEEP_FIXED_COUNTS,
)
from app.errors import ComparisonError
from app.services.cost import (
    CostTable,
    memory_access_report,
    project_ledger,
    savings_vs_baseline,
    skipped_macs,
    storage_report,
)
from app.services.architecture import parse_architecture
from app.services.experiment import RunConfig, RunReport, build_network_config
from app.services.policy import NetworkConfig

logger = logging.getLogger(__name__)

TABLE_COLUMNS = [
    "config",
    "label",
    "final_accuracy",
    "accuracy_loss_pp",
    "energy_savings_pct",
    "training_time_reduction_pct",
    "storage_savings_pct",
    "memory_access_factor",
    "total_macs",
    "skipped_macs",
]

PROJECTED_COLUMNS = [
    "config",
    "label",
    "energy_savings_pct",
    "storage_savings_pct",
    "memory_access_factor",
    "total_macs",
    "skipped_macs",
    "stored_values",
]


def _check_iso_epoch(report: RunReport, baseline: RunReport) -> None:
    if len(report.epochs) != len(baseline.epochs):
        raise ComparisonError(
            f"Iso-epoch violation: {report.config_name} ran {len(report.epochs)} epochs, "
            f"baseline {baseline.config_name} ran {len(baseline.epochs)}"
        )
    if report.train_samples != baseline.train_samples or report.test_samples != baseline.test_samples:
        raise ComparisonError(f"{report.config_name} and the baseline used different datasets")
    if report.config.dataset != baseline.config.dataset:
        raise ComparisonError(
            f"Dataset mismatch: {report.config.dataset} vs baseline {baseline.config.dataset}"
        )
    if report.architecture != baseline.architecture:
        raise ComparisonError(
            f"Architecture mismatch: {report.architecture} vs baseline {baseline.architecture}"
        )
    if report.config.seed != baseline.config.seed:
        logger.warning(f"{report.config_name} and baseline use different seeds")


def _label(name: str) -> str:
    for preset in PRESETS:
        if name == preset or name.startswith(f"{preset}-"):
            return PRESET_LABELS[preset]
    return name


def compare(report: RunReport, baseline: RunReport, table: Optional[CostTable] = None) -> Dict[str, Any]:
    """
    One comparison row: report against baseline.

    Percentages are in percent; accuracy loss is in percentage points.

    Raises:
        ComparisonError: different epoch counts, datasets or architectures
    """
    _check_iso_epoch(report, baseline)
    ledger, base_ledger = report.cost_ledger(), baseline.cost_ledger()
    base_time = baseline.median_epoch_seconds
    return {
        "config": report.config_name,
        "label": _label(report.config_name),
        "final_accuracy": report.final_accuracy,
        "accuracy_loss_pp": baseline.final_accuracy - report.final_accuracy,
        "energy_savings_pct": 100.0 * savings_vs_baseline(ledger, base_ledger, table),
        "training_time_reduction_pct": (
            100.0 * (1.0 - report.median_epoch_seconds / base_time) if base_time > 0 else 0.0
        ),
        "storage_savings_pct": 100.0 * (
            1.0 - report.storage.total_stored_values / baseline.storage.total_stored_values
        ),
        "memory_access_factor": memory_access_report(ledger, base_ledger, table).factor,
        "total_macs": report.total_macs,
        "skipped_macs": skipped_macs(ledger, base_ledger),
    }


def compare_many(
    reports: Sequence[RunReport],
    baseline: RunReport,
    table: Optional[CostTable] = None,
) -> pl.DataFrame:
    """Comparison table, baseline row first."""
    rows = [compare(baseline, baseline, table)]
    rows += [compare(r, baseline, table) for r in reports if r is not baseline]
    return pl.DataFrame(rows).select(TABLE_COLUMNS)


def sweep_table(
    reports: Sequence[RunReport],
    baseline: RunReport,
    table: Optional[CostTable] = None,
) -> pl.DataFrame:
    """
    Sweep table: one row per fixed-map count i of the second conv layer,
    sorted by i, with the accuracy, energy, storage and time columns.
    """
    missing = [r.config_name for r in reports if r.config.sweep_i is None]
    if missing:
        raise ComparisonError(f"Not sweep runs: {', '.join(missing)}")
    rows = [
        {"sweep_i": r.config.sweep_i, **compare(r, baseline, table)}
        for r in reports
    ]
    return pl.DataFrame(rows).sort("sweep_i").select(["sweep_i"] + TABLE_COLUMNS)


# =============================================================================
# COUNTING-ONLY TABLES
# =============================================================================

def projected_row(
    config: NetworkConfig,
    baseline: NetworkConfig,
    n_train: int,
    batch_size: int,
    epochs: int,
    table: Optional[CostTable] = None,
) -> Dict[str, Any]:
    ledger = project_ledger(config, n_train, batch_size, epochs)
    base_ledger = project_ledger(baseline, n_train, batch_size, epochs)
    storage = storage_report(config, baseline)
    return {
        "config": config.name,
        "label": _label(config.name),
        "energy_savings_pct": 100.0 * savings_vs_baseline(ledger, base_ledger, table),
        "storage_savings_pct": 100.0 * storage.savings_ratio,
        "memory_access_factor": memory_access_report(ledger, base_ledger, table).factor,
        "total_macs": ledger.macs(),
        "skipped_macs": skipped_macs(ledger, base_ledger),
        "stored_values": storage.total_stored_values,
    }


def projected_table(
    configs: Sequence[NetworkConfig],
    baseline: NetworkConfig,
    n_train: int = DEFAULT_BATCH_SIZE,
    batch_size: int = DEFAULT_BATCH_SIZE,
    epochs: int = 1,
    table: Optional[CostTable] = None,
) -> pl.DataFrame:
    """Counting-only comparison of configurations; no data or training needed."""
    for config in configs:
        if config.layers != baseline.layers:
            raise ComparisonError(f"{config.name} has a different architecture than the baseline")
    rows = [projected_row(c, baseline, n_train, batch_size, epochs, table) for c in configs]
    return pl.DataFrame(rows).select(PROJECTED_COLUMNS)


def default_sweep_counts(second_layer_maps: int) -> List[int]:
    """0, w/4, w/2, 3w/4, w fixed maps; the standard counts for a 12-map layer."""
    if second_layer_maps == 12:
        return list(SWEEP_FIXED_COUNTS)
    return sorted({round(second_layer_maps * q / 4) for q in range(5)})


def preset_configs(
    arch: str,
    presets: Sequence[str] = PRESETS,
    partial_fraction: Optional[float] = None,
) -> List[NetworkConfig]:
    """NetworkConfigs of the named presets for one architecture (baseline first)."""
    layers = parse_architecture(arch)
    configs = []
    for preset in presets:
        run_config = RunConfig(arch=arch, preset=preset, partial_fraction=partial_fraction)
        configs.append(build_network_config(run_config, layers))
    return sorted(configs, key=lambda c: c.name != PRESET_BASELINE)


def sweep_config_list(arch: str, counts: Optional[Sequence[int]] = None) -> List[NetworkConfig]:
    """NetworkConfigs of the fixed-map sweep over the second conv layer."""
    layers = parse_architecture(arch)
    conv = [spec for spec in layers if spec.is_conv]
    if len(conv) < 2:
        raise ComparisonError("The sweep needs two conv layers")
    counts = default_sweep_counts(conv[1].out_shape[0]) if counts is None else counts
    return [build_network_config(RunConfig(arch=arch, sweep_i=i), layers) for i in counts]
