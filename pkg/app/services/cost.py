"""
Cost model service.

Turns CostLedger counts into energy with a configurable CostTable, compares
configurations against a baseline, and reports parameter storage with
bank-entry deduplication.
"""
import logging
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

from pydantic import BaseModel, Field, ValidationError, field_validator

from app.config import (
    BYTES_PER_VALUE,
    DEFAULT_BATCH_SIZE,
    DEFAULT_ENERGY_PER_MAC,
    DEFAULT_MEM_EVENT_ENERGY,
    DEFAULT_PHASE_MAC_WEIGHTS,
)
from app.errors import ComparisonError, ConfigurationError, DegenerateInputError, ShapeError
from app.services import network as net
from app.services.ledger import BACKPROP_PHASES, CostLedger, MemEvent, Phase
from app.services.policy import NetworkConfig, PartialGabor, Trainable, masks_for_epoch

logger = logging.getLogger(__name__)


# =============================================================================
# COST TABLE
# =============================================================================

class CostTable(BaseModel):
    """
    Energy units per MAC and per memory event.

    A MAC in phase P costs energy_per_mac * phase_mac_weights[P].
    """
    energy_per_mac: float = Field(DEFAULT_ENERGY_PER_MAC, gt=0)
    phase_mac_weights: Dict[str, float] = Field(default_factory=lambda: dict(DEFAULT_PHASE_MAC_WEIGHTS))
    mem_event_energy: Dict[str, float] = Field(default_factory=lambda: dict(DEFAULT_MEM_EVENT_ENERGY))

    @field_validator("phase_mac_weights", "mem_event_energy")
    @classmethod
    def _positive_entries(cls, value: Dict[str, float]) -> Dict[str, float]:
        for key, entry in value.items():
            if not entry > 0:
                raise ValueError(f"cost entry '{key}' must be strictly positive, got {entry}")
        return value

    def mac_energy(self, phase: Phase) -> float:
        try:
            return self.energy_per_mac * self.phase_mac_weights[phase.value]
        except KeyError:
            raise ConfigurationError(f"Cost table has no MAC weight for phase '{phase.value}'") from None

    def event_energy(self, event: MemEvent) -> float:
        try:
            return self.mem_event_energy[event.value]
        except KeyError:
            raise ConfigurationError(f"Cost table has no energy for memory event '{event.value}'") from None

    def scaled(self, factor: float) -> "CostTable":
        """Every energy entry multiplied by ``factor`` (weights are ratios and stay)."""
        if not factor > 0:
            raise ConfigurationError(f"Scale factor must be positive, got {factor}")
        return CostTable(
            energy_per_mac=self.energy_per_mac * factor,
            phase_mac_weights=dict(self.phase_mac_weights),
            mem_event_energy={k: v * factor for k, v in self.mem_event_energy.items()},
        )


def load_cost_table(path: Optional[Union[str, Path]] = None) -> CostTable:
    """
    Read a JSON cost table; no path gives the defaults.

    Raises:
        ConfigurationError: file missing or invalid
    """
    if not path:
        return CostTable()
    path = Path(path)
    if not path.exists():
        raise ConfigurationError(f"Cost table not found: {path}")
    try:
        return CostTable.model_validate_json(path.read_text(encoding="utf-8"))
    except ValidationError as e:
        raise ConfigurationError(f"Invalid cost table {path}: {e.errors()[0]['msg']}") from None


# =============================================================================
# COUNTING
# =============================================================================

def count_macs(config: NetworkConfig, input_shape: Tuple[int, ...], phase: Phase) -> Dict[int, int]:
    """
    Per-layer MAC counts of one training sample in ``phase``.

    Masks are those of the first epoch (partial slots still training).

    Examples:
        >>> count_macs(baseline, (1, 28, 28), Phase.FORWARD_PROP)[0]
        86400
    """
    if tuple(input_shape) != tuple(config.layers[0].in_shape):
        raise ShapeError(f"Input shape {tuple(input_shape)} does not match {config.layers[0].in_shape}")
    ledger = net.charge_training_step(CostLedger(), config.layers, 1, 1, *masks_for_epoch(config, 0.0))
    return {layer: ledger.macs(layer, phase) for layer in range(len(config.layers))}


def project_ledger(config: NetworkConfig, n_train: int, batch_size: int, epochs: int) -> CostLedger:
    """
    Ledger of a full training run, counted without training.

    Follows the same per-epoch masks as a real run, so it equals the
    training ledger of ``experiment.run`` for the same geometry.
    """
    if n_train < 1 or batch_size < 1 or epochs < 1:
        raise ConfigurationError("n_train, batch_size and epochs must be at least 1")
    steps = -(-n_train // batch_size)
    ledger = CostLedger()
    for epoch in range(epochs):
        slot_masks, bias_masks = masks_for_epoch(config, epoch / epochs)
        net.charge_training_step(ledger, config.layers, n_train, steps, slot_masks, bias_masks)
    return ledger


def skipped_macs(config_ledger: CostLedger, baseline_ledger: CostLedger) -> int:
    return baseline_ledger.macs() - config_ledger.macs()


# =============================================================================
# ENERGY
# =============================================================================

class PhaseEnergy(BaseModel):
    layer: int
    phase: str
    macs: int
    energy: float


class EnergyReport(BaseModel):
    """Compute and memory energy of a ledger."""
    compute_energy: float
    memory_energy: float
    total_energy: float
    by_layer_phase: List[PhaseEnergy]
    phase_shares: Dict[str, float]
    layer_backprop_shares: Dict[str, float]
    memory_by_event: Dict[str, float]


def compute_energy(ledger: CostLedger, table: Optional[CostTable] = None) -> EnergyReport:
    """
    Energy of every (layer, phase) bucket plus shares of the compute total.

    Phase shares always carry all five phases; they sum to 1 unless the
    ledger is empty (then every share is 0). A layer's backprop share is
    its BackpropError + WeightGradient + WeightUpdate energy over the
    network's compute energy.
    """
    table = table or CostTable()
    rows: List[PhaseEnergy] = []
    by_phase = {phase: 0.0 for phase in Phase}
    backprop_by_layer: Dict[int, float] = {}
    for (layer, phase), macs in sorted(ledger.mac_counts.items(), key=lambda kv: (kv[0][0], list(Phase).index(kv[0][1]))):
        energy = macs * table.mac_energy(phase)
        rows.append(PhaseEnergy(layer=layer, phase=phase.value, macs=macs, energy=energy))
        by_phase[phase] += energy
        if phase in BACKPROP_PHASES:
            backprop_by_layer[layer] = backprop_by_layer.get(layer, 0.0) + energy

    memory_by_event = {event.value: 0.0 for event in MemEvent}
    for (_, _, event), count in ledger.mem_events.items():
        memory_by_event[event.value] += count * table.event_energy(event)

    compute = sum(by_phase.values())
    memory = sum(memory_by_event.values())
    shares = {phase.value: (by_phase[phase] / compute if compute else 0.0) for phase in Phase}
    layer_shares = {
        str(layer): (energy / compute if compute else 0.0)
        for layer, energy in sorted(backprop_by_layer.items())
    }
    return EnergyReport(
        compute_energy=compute,
        memory_energy=memory,
        total_energy=compute + memory,
        by_layer_phase=rows,
        phase_shares=shares,
        layer_backprop_shares=layer_shares,
        memory_by_event=memory_by_event,
    )


def energy_report(
    config: NetworkConfig,
    n_train: int = DEFAULT_BATCH_SIZE,
    batch_size: int = DEFAULT_BATCH_SIZE,
    epochs: int = 1,
    table: Optional[CostTable] = None,
) -> EnergyReport:
    """Counting-only EnergyReport for a configuration."""
    return compute_energy(project_ledger(config, n_train, batch_size, epochs), table)


def _check_comparable(config_ledger: CostLedger, baseline_ledger: CostLedger) -> None:
    if config_ledger.samples_processed != baseline_ledger.samples_processed:
        raise ComparisonError(
            f"Ledgers cover different sample counts: {config_ledger.samples_processed} "
            f"vs baseline {baseline_ledger.samples_processed}"
        )


def savings_vs_baseline(
    config_ledger: CostLedger,
    baseline_ledger: CostLedger,
    table: Optional[CostTable] = None,
) -> float:
    """
    Compute-energy savings ratio, 1 - energy(config) / energy(baseline).

    Memory energy is left out; it is reported by memory_access_report.

    Raises:
        ComparisonError: different sample counts
        DegenerateInputError: baseline energy is zero
    """
    _check_comparable(config_ledger, baseline_ledger)
    baseline = compute_energy(baseline_ledger, table).compute_energy
    if baseline == 0:
        raise DegenerateInputError("Baseline ledger has zero compute energy")
    return 1.0 - compute_energy(config_ledger, table).compute_energy / baseline


class MemoryAccessReport(BaseModel):
    baseline_energy: float
    config_energy: float
    factor: float
    weight_writes_saved: int


def memory_access_report(
    config_ledger: CostLedger,
    baseline_ledger: CostLedger,
    table: Optional[CostTable] = None,
) -> MemoryAccessReport:
    """
    Memory-access energy factor, baseline / config.

    Raises:
        ComparisonError: different sample counts
        DegenerateInputError: config memory energy is zero
    """
    _check_comparable(config_ledger, baseline_ledger)
    config_energy = compute_energy(config_ledger, table).memory_energy
    if config_energy == 0:
        raise DegenerateInputError("Configuration ledger has zero memory-access energy")
    baseline_energy = compute_energy(baseline_ledger, table).memory_energy
    return MemoryAccessReport(
        baseline_energy=baseline_energy,
        config_energy=config_energy,
        factor=baseline_energy / config_energy,
        weight_writes_saved=baseline_ledger.mem(event=MemEvent.WEIGHT_WRITE) - config_ledger.mem(event=MemEvent.WEIGHT_WRITE),
    )


# =============================================================================
# STORAGE
# =============================================================================

class StorageReport(BaseModel):
    """
    Stored values of a configuration.

    total_stored_values = trainable_param_count + fixed_kernel_values
    + frozen_bias_count, with each bank entry stored once.
    """
    trainable_param_count: int
    distinct_fixed_kernel_count: int
    fixed_kernel_values: int
    frozen_bias_count: int
    total_stored_values: int
    total_bytes: int
    baseline_values: int
    savings_ratio: float


def baseline_parameter_count(config: NetworkConfig) -> int:
    return sum(spec.weight_count + spec.bias_count for spec in config.layers)


def storage_report(config: NetworkConfig, baseline: Optional[NetworkConfig] = None) -> StorageReport:
    """
    Parameter storage with bank entries deduplicated across all layers.

    Slots in a PartialGabor entry are stored once, like fixed ones: they
    stay tied to a single kernel for the whole run. Biases of maps with no
    trainable slot stay at 0 but are still stored.

    Args:
        config: configuration to report
        baseline: reference configuration (default: same layers, all trainable)
    """
    trainable = 0
    frozen_biases = 0
    for index, spec in enumerate(config.layers):
        if spec.is_dense:
            trainable += spec.weight_count + spec.bias_count
        elif spec.is_conv:
            kh, kw = spec.kernel
            for row in config.policy[index]:
                owned = sum(1 for status in row if isinstance(status, Trainable))
                shared_training = any(isinstance(status, PartialGabor) for status in row)
                trainable += owned * kh * kw
                if owned or shared_training:
                    trainable += 1
                else:
                    frozen_biases += 1

    entries = config.referenced_entries()
    fixed_values = sum(int(config.bank.entry(key).kernel.size) for key in entries)
    total = trainable + fixed_values + frozen_biases
    baseline_values = baseline_parameter_count(baseline or config)
    if baseline is not None and baseline.layers != config.layers:
        raise ComparisonError("Storage baseline has a different architecture")
    return StorageReport(
        trainable_param_count=trainable,
        distinct_fixed_kernel_count=len(entries),
        fixed_kernel_values=fixed_values,
        frozen_bias_count=frozen_biases,
        total_stored_values=total,
        total_bytes=total * BYTES_PER_VALUE,
        baseline_values=baseline_values,
        savings_ratio=1.0 - total / baseline_values if baseline_values else 0.0,
    )


def backprop_shares(config: NetworkConfig, table: Optional[CostTable] = None) -> Dict[int, float]:
    """Per conv layer backprop-phase share of one sample's compute energy."""
    report = energy_report(config, table=table)
    return {
        layer: report.layer_backprop_shares.get(str(layer), 0.0)
        for layer in config.conv_layers
    }
