"""
Experiment service.

Builds a configuration from a RunConfig, trains it under the kernel policy,
and collects accuracy, cost, storage and timing into a RunReport.
"""
import logging
import math
import statistics
import time
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import BaseModel, Field, ValidationError, field_validator, model_validator

from app.config import (
    DATA_DIR,
    DATASET_MNIST,
    DATASET_SYNTHETIC,
    DATASETS,
    DEFAULT_ARCHITECTURE,
    DEFAULT_BATCH_SIZE,
    DEFAULT_EPOCHS,
    DEFAULT_LEARNING_RATE,
    DEFAULT_SEED,
    PRESET_BASELINE,
    SYNTH_DEFAULT_SAMPLES,
    SYNTH_DEFAULT_SIZE,
    TRAIN_DTYPE,
)
from app.errors import ConfigurationError, DivergenceError, ShapeError
from app.services import network as net
from app.services import tensor_core as tc
from app.services.architecture import describe_architecture, parse_architecture
from app.services.cost import (
    CostTable,
    EnergyReport,
    StorageReport,
    compute_energy,
    load_cost_table,
    storage_report,
)
from app.services.dataset import Dataset, batches, load_mnist, synth_twoclass
from app.services.gabor import KernelBank, make_gabor_bank
from app.services.ledger import CostLedger
from app.services.network import Network
from app.services.policy import (
    NetworkConfig,
    apply_updates,
    build_config,
    init_layer_states,
    masks_for_epoch,
    sweep_configs,
)
from app.services.tensor_core import LayerSpec
from app.utils.normalizers import normalize_preset

logger = logging.getLogger(__name__)


# =============================================================================
# DOCUMENTS
# =============================================================================

class RunConfig(BaseModel):
    """Declarative description of one training run."""
    arch: str = DEFAULT_ARCHITECTURE
    preset: str = PRESET_BASELINE
    sweep_i: Optional[int] = Field(None, ge=0)
    epochs: int = Field(DEFAULT_EPOCHS, ge=1)
    batch_size: int = Field(DEFAULT_BATCH_SIZE, ge=1)
    learning_rate: float = Field(DEFAULT_LEARNING_RATE, gt=0)
    seed: int = Field(DEFAULT_SEED, ge=0)
    dataset: str = DATASET_MNIST
    data_dir: Optional[str] = None
    cost_table: Optional[str] = None
    partial_fraction: Optional[float] = Field(None, gt=0, lt=1)
    partial_from_layer: int = Field(0, ge=0)
    distinct_layer2_bank: bool = False
    fix_deeper_layers: bool = False
    train_limit: Optional[int] = Field(None, ge=1)
    test_limit: Optional[int] = Field(None, ge=1)
    synth_samples: int = Field(SYNTH_DEFAULT_SAMPLES, ge=4)
    synth_size: int = Field(SYNTH_DEFAULT_SIZE, ge=1)

    @field_validator("preset")
    @classmethod
    def _known_preset(cls, value: str) -> str:
        return normalize_preset(value)

    @field_validator("dataset")
    @classmethod
    def _known_dataset(cls, value: str) -> str:
        value = value.strip().lower()
        if value not in DATASETS:
            raise ValueError(f"dataset must be one of {DATASETS}")
        return value

    @model_validator(mode="after")
    def _parseable(self) -> "RunConfig":
        parse_architecture(self.arch)
        return self

    @property
    def label(self) -> str:
        return f"sweep-{self.sweep_i}" if self.sweep_i is not None else self.preset


def parse_run_config(data: Dict[str, Any]) -> RunConfig:
    """
    Validate a run configuration document.

    Raises:
        ConfigurationError: the document is invalid (epochs=0, bad preset...)
    """
    try:
        return RunConfig.model_validate(data)
    except ValidationError as e:
        first = e.errors()[0]
        where = ".".join(str(p) for p in first.get("loc", ()))
        raise ConfigurationError(f"Invalid run configuration{f' ({where})' if where else ''}: {first['msg']}") from None


class EpochRecord(BaseModel):
    epoch: int
    train_loss: float
    test_accuracy: float
    seconds: float
    trainable_slots: int


class RunReport(BaseModel):
    """Structured result of one run; see ``to_row`` for the flat form."""
    config: RunConfig
    config_name: str
    architecture: str
    description: Dict[str, Any]
    train_samples: int
    test_samples: int
    epochs: List[EpochRecord]
    final_accuracy: float
    total_macs: int
    macs_by_phase: Dict[str, int]
    ledger: Dict[str, Any]
    energy: EnergyReport
    storage: StorageReport
    median_epoch_seconds: float
    weights_checksum: str

    def cost_ledger(self) -> CostLedger:
        return CostLedger.from_document(self.ledger)

    def to_row(self) -> Dict[str, Any]:
        return {
            "config": self.config_name,
            "architecture": self.architecture,
            "epochs": len(self.epochs),
            "train_samples": self.train_samples,
            "final_accuracy": self.final_accuracy,
            "total_macs": self.total_macs,
            "compute_energy": self.energy.compute_energy,
            "memory_energy": self.energy.memory_energy,
            "stored_values": self.storage.total_stored_values,
            "median_epoch_seconds": self.median_epoch_seconds,
        }

    def save(self, path: Union[str, Path]) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(self.model_dump_json(indent=2), encoding="utf-8")
        return path

    @classmethod
    def load(cls, path: Union[str, Path]) -> "RunReport":
        path = Path(path)
        if not path.exists():
            raise ConfigurationError(f"Report not found: {path}")
        try:
            return cls.model_validate_json(path.read_text(encoding="utf-8"))
        except ValidationError as e:
            raise ConfigurationError(f"Invalid report {path}: {e.errors()[0]['msg']}") from None


# =============================================================================
# CONFIGURATION
# =============================================================================

def _bank_width(layers: Sequence[LayerSpec]) -> Tuple[int, int]:
    """(k, master bank size) for the first two conv layers."""
    conv = [spec for spec in layers if spec.is_conv]
    if not conv:
        raise ConfigurationError("Architecture has no conv layer")
    k = conv[0].out_shape[0]
    width = k
    for spec in conv[1:2]:
        width = math.lcm(width, spec.out_shape[0])
    return k, width


def build_network_config(run_config: RunConfig, layers: Sequence[LayerSpec]) -> NetworkConfig:
    """
    NetworkConfig for a run: preset or sweep index over a master Gabor bank.

    The bank holds lcm(k, second layer width) orientations, so every
    subset the presets and the sweep ask for is an exact orientation subset.
    """
    k, width = _bank_width(layers)
    if run_config.sweep_i is None and run_config.preset == PRESET_BASELINE:
        bank = KernelBank()
    else:
        kh, kw = next(spec for spec in layers if spec.is_conv).kernel
        if kh != kw:
            raise ConfigurationError(f"Gabor kernels need square extents, first conv layer is {kh}x{kw}")
        bank = make_gabor_bank(width, size=kh)
    if run_config.sweep_i is not None:
        return sweep_configs(
            k, run_config.sweep_i, bank, layers,
            partial_fraction=run_config.partial_fraction,
            partial_from_layer=run_config.partial_from_layer,
        )
    return build_config(
        run_config.preset, k, bank, layers,
        distinct_layer2_bank=run_config.distinct_layer2_bank,
        fix_deeper_layers=run_config.fix_deeper_layers,
        partial_fraction=run_config.partial_fraction,
        partial_from_layer=run_config.partial_from_layer,
    )


def load_run_data(run_config: RunConfig) -> Tuple[Dataset, Dataset]:
    if run_config.dataset == DATASET_SYNTHETIC:
        train, test = synth_twoclass(run_config.synth_samples, run_config.synth_size, run_config.seed)
        if run_config.train_limit:
            train = train.take(np.arange(min(run_config.train_limit, len(train))))
        if run_config.test_limit:
            test = test.take(np.arange(min(run_config.test_limit, len(test))))
        return train, test
    data_dir = Path(run_config.data_dir) if run_config.data_dir else DATA_DIR
    return load_mnist(data_dir, run_config.train_limit, run_config.test_limit)


def _check_data(layers: Sequence[LayerSpec], train: Dataset, test: Dataset) -> None:
    expected = tuple(layers[0].in_shape)
    for dataset in (train, test):
        actual = (1,) + tuple(dataset.image_shape)
        if actual != expected:
            raise ShapeError(f"{dataset.split} images {actual} do not match architecture input {expected}")
        if dataset.classes > layers[-1].size:
            raise ShapeError(f"{dataset.classes} classes but only {layers[-1].size} output neurons")
    if len(train) == 0:
        raise ConfigurationError("Training split is empty")


# =============================================================================
# TRAINING
# =============================================================================

def train_epoch(
    network: Network,
    config: NetworkConfig,
    train: Dataset,
    epoch: int,
    epochs: int,
    batch_size: int,
    learning_rate: float,
    seed: int,
    ledger: CostLedger,
) -> float:
    """
    One epoch of mini-batch SGD under the policy.

    Returns:
        Sample-weighted mean training loss

    Raises:
        DivergenceError: a batch loss is not finite
    """
    fraction = epoch / epochs
    slot_masks, bias_masks = masks_for_epoch(config, fraction)
    outputs = network.output_size
    total, seen = 0.0, 0
    for indices in batches(train, batch_size, seed, epoch):
        x = train.network_input(indices)
        targets = tc.one_hot(train.labels[indices], outputs, dtype=network.dtype)
        loss, grads = network.loss_and_gradients(x, targets, slot_masks, bias_masks, ledger)
        if not np.isfinite(loss):
            raise DivergenceError(epoch + 1, loss)
        apply_updates(config, network.states, grads, learning_rate, fraction)
        n = len(indices)
        net.charge_update(ledger, network.layers, n, 1, slot_masks, bias_masks)
        ledger.samples_processed += n
        ledger.batches_processed += 1
        total += loss * n
        seen += n
    return total / seen


def run(
    run_config: RunConfig,
    cost_table: Optional[CostTable] = None,
    data: Optional[Tuple[Dataset, Dataset]] = None,
) -> RunReport:
    """
    Train one configuration for exactly ``epochs`` epochs.

    Args:
        run_config: run description
        cost_table: energy prices (default: run_config.cost_table or defaults)
        data: (train, test) to use instead of loading from run_config

    Returns:
        RunReport

    Raises:
        ShapeError: dataset does not fit the architecture
        DivergenceError: non-finite loss, with the epoch index
    """
    layers = parse_architecture(run_config.arch)
    table = cost_table or load_cost_table(run_config.cost_table)
    train, test = data if data is not None else load_run_data(run_config)
    _check_data(layers, train, test)

    config = build_network_config(run_config, layers)
    network = Network(layers, init_layer_states(config, run_config.seed, np.dtype(TRAIN_DTYPE)))
    ledger = CostLedger()
    logger.info(
        f"Run {config.name}: {describe_architecture(layers)}, {len(train)} train / {len(test)} test, "
        f"{run_config.epochs} epochs"
    )

    records: List[EpochRecord] = []
    for epoch in range(run_config.epochs):
        started = time.perf_counter()
        loss = train_epoch(
            network, config, train, epoch, run_config.epochs,
            run_config.batch_size, run_config.learning_rate, run_config.seed, ledger,
        )
        seconds = time.perf_counter() - started
        accuracy = network.accuracy(test.network_input(), test.labels)
        slot_masks, _ = masks_for_epoch(config, epoch / run_config.epochs)
        trainable = int(sum(int(m.sum()) for m in slot_masks.values()))
        records.append(EpochRecord(
            epoch=epoch + 1, train_loss=loss, test_accuracy=accuracy,
            seconds=seconds, trainable_slots=trainable,
        ))
        logger.info(
            f"[{config.name}] epoch {epoch + 1}/{run_config.epochs} loss={loss:.5f} "
            f"accuracy={accuracy:.2f}% time={seconds:.2f}s trainable_slots={trainable}"
        )

    return RunReport(
        config=run_config,
        config_name=config.name,
        architecture=describe_architecture(layers),
        description=config.describe(),
        train_samples=len(train),
        test_samples=len(test),
        epochs=records,
        final_accuracy=records[-1].test_accuracy,
        total_macs=ledger.macs(),
        macs_by_phase={phase.value: count for phase, count in ledger.macs_by_phase().items()},
        ledger=ledger.to_document(),
        energy=compute_energy(ledger, table),
        storage=storage_report(config),
        median_epoch_seconds=statistics.median(r.seconds for r in records),
        weights_checksum=network.checksum(),
    )
