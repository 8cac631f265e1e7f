"""
Kernel policy service.

Decides which conv kernel slots are trainable, fixed to a Gabor bank entry,
or trained only for the first fraction of the run; builds the named
configurations; keeps slots that share a bank entry identical.
"""
import logging
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from app.config import (
    PRESET_BASELINE,
    PRESET_GABOR1,
    PRESET_GABOR_ALL,
    PRESET_HALF_HALF,
)
from app.errors import ConfigurationError, PolicyError
from app.services.gabor import KernelBank
from app.services.tensor_core import ConvGradients, ConvLayerState, FcGradients, LayerSpec
from app.services import network as net
from app.utils.normalizers import normalize_preset

logger = logging.getLogger(__name__)

Slot = Tuple[int, int, int]  # (layer, out map, in map)


# =============================================================================
# TRAINABILITY STATUS
# =============================================================================

@dataclass(frozen=True)
class Trainable:
    def label(self) -> str:
        return "trainable"


@dataclass(frozen=True)
class FixedGabor:
    entry: str

    def label(self) -> str:
        return f"fixed:{self.entry}"


@dataclass(frozen=True)
class PartialGabor:
    entry: str
    freeze_at: float

    def __post_init__(self):
        if not 0 < self.freeze_at < 1:
            raise PolicyError(f"Freeze fraction must lie strictly between 0 and 1, got {self.freeze_at}")

    def label(self) -> str:
        return f"partial@{self.freeze_at:g}:{self.entry}"


Status = Union[Trainable, FixedGabor, PartialGabor]
TRAINABLE = Trainable()

StatusGrid = Tuple[Tuple[Status, ...], ...]


# =============================================================================
# NETWORK CONFIG
# =============================================================================

@dataclass(frozen=True)
class NetworkConfig:
    """
    Layer stack plus per-slot trainability.

    Attributes:
        name: configuration label
        layers: LayerSpec list
        policy: conv layer index -> [outMaps][inMaps] status grid
        bank: entries referenced by fixed or partial slots
    """
    name: str
    layers: Tuple[LayerSpec, ...]
    policy: Dict[int, StatusGrid]
    bank: KernelBank = field(default_factory=KernelBank)

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(self.layers))
        self._validate()

    def _validate(self) -> None:
        conv = [i for i, s in enumerate(self.layers) if s.is_conv]
        if sorted(self.policy) != conv:
            raise PolicyError(f"Policy must cover conv layers {conv}, got {sorted(self.policy)}")
        schedules: Dict[str, set] = defaultdict(set)
        for layer, grid in self.policy.items():
            spec = self.layers[layer]
            out_maps, in_maps = spec.out_shape[0], spec.in_shape[0]
            if len(grid) != out_maps or any(len(row) != in_maps for row in grid):
                raise PolicyError(f"Layer {layer} policy must be {out_maps}x{in_maps}")
            for row in grid:
                for status in row:
                    if isinstance(status, Trainable):
                        continue
                    if status.entry not in self.bank:
                        raise PolicyError(f"Layer {layer} references unknown bank entry '{status.entry}'")
                    entry = self.bank.entry(status.entry)
                    if entry.kernel.shape != spec.kernel:
                        raise PolicyError(
                            f"Bank entry {entry.kernel.shape} does not fit layer {layer} kernels {spec.kernel}"
                        )
                    schedules[status.entry].add(
                        status.freeze_at if isinstance(status, PartialGabor) else None
                    )
        for key, values in schedules.items():
            if len(values) > 1:
                raise PolicyError(f"Slots sharing entry '{key}' must share one schedule, got {values}")

    # -------------------------------------------------------------------------
    # Queries
    # -------------------------------------------------------------------------

    @property
    def conv_layers(self) -> List[int]:
        return sorted(self.policy)

    def status(self, layer: int, out_map: int, in_map: int) -> Status:
        return self.policy[layer][out_map][in_map]

    def slots(self) -> List[Tuple[Slot, Status]]:
        return [
            ((layer, o, i), status)
            for layer in self.conv_layers
            for o, row in enumerate(self.policy[layer])
            for i, status in enumerate(row)
        ]

    def entry_slots(self) -> Dict[str, List[Slot]]:
        """Bank entry key -> slots referencing it, in (layer, o, i) order."""
        found: Dict[str, List[Slot]] = defaultdict(list)
        for slot, status in self.slots():
            if not isinstance(status, Trainable):
                found[status.entry].append(slot)
        return dict(found)

    def referenced_entries(self) -> List[str]:
        """Distinct bank entries referenced across all layers."""
        return [key for key in self.bank.keys if key in self.entry_slots()]

    def fixed_map_count(self, layer: int) -> int:
        return sum(1 for row in self.policy[layer] if all(not isinstance(s, Trainable) for s in row))

    def same_policy(self, other: "NetworkConfig") -> bool:
        return self.layers == other.layers and self.policy == other.policy

    def describe(self) -> Dict[str, Any]:
        """Declarative, human-readable document of the configuration."""
        return {
            "name": self.name,
            "layers": [spec.describe() for spec in self.layers],
            "policy": {
                str(layer): [[status.label() for status in row] for row in grid]
                for layer, grid in self.policy.items()
            },
            "bank": [
                {"key": e.key, "theta": str(e.theta)}
                for e in self.bank if e.key in self.referenced_entries()
            ],
        }


# =============================================================================
# PRESETS
# =============================================================================

def _all_trainable(spec: LayerSpec) -> StatusGrid:
    return tuple((TRAINABLE,) * spec.in_shape[0] for _ in range(spec.out_shape[0]))


def _fixed_maps(spec: LayerSpec, keys: Sequence[str]) -> StatusGrid:
    """Output map j < len(keys) uses entry keys[j] against every input map."""
    in_maps = spec.in_shape[0]
    rows = []
    for j in range(spec.out_shape[0]):
        if j < len(keys):
            rows.append((FixedGabor(keys[j]),) * in_maps)
        else:
            rows.append((TRAINABLE,) * in_maps)
    return tuple(rows)


def _subset_keys(bank: KernelBank, k: int) -> List[str]:
    if len(bank) < k:
        raise ConfigurationError(f"Bank has {len(bank)} entries, need at least {k}")
    return bank.orientation_subset(k).keys


def _fixed_keys(bank: KernelBank, k: int, count: int) -> List[str]:
    """
    Entries for ``count`` fixed maps of a later layer.

    Up to k maps reuse the k-bank of the first layer; larger counts take the
    count-orientation subset when the bank holds it, else the first entries.
    """
    if count <= k:
        return _subset_keys(bank, k)[:count]
    if len(bank) < count:
        raise ConfigurationError(f"Bank has {len(bank)} entries, need at least {count}")
    if len(bank) % count == 0:
        return bank.orientation_subset(count).keys
    return bank.keys[:count]


def _distinct_keys(bank: KernelBank, k: int, count: int) -> List[str]:
    """Entries outside the k-bank, for the distinct-orientation half-half variant."""
    used = set(_subset_keys(bank, k))
    rest = [key for key in bank.keys if key not in used]
    if len(rest) < count:
        raise ConfigurationError(
            f"Bank has {len(rest)} entries outside the {k}-bank, need {count}"
        )
    return rest[:count]


def _check_width(layers: Sequence[LayerSpec], k: int) -> List[int]:
    conv = [i for i, s in enumerate(layers) if s.is_conv]
    if not conv:
        raise ConfigurationError("Architecture has no conv layer")
    if layers[conv[0]].out_shape[0] != k:
        raise ConfigurationError(
            f"Base width k={k} does not match the first conv layer ({layers[conv[0]].out_shape[0]} maps)"
        )
    return conv


def build_config(
    preset: str,
    k: int,
    bank: KernelBank,
    layers: Sequence[LayerSpec],
    distinct_layer2_bank: bool = False,
    fix_deeper_layers: bool = False,
    partial_fraction: Optional[float] = None,
    partial_from_layer: int = 0,
) -> NetworkConfig:
    """
    Build a named configuration.

    Args:
        preset: baseline, gabor1, gabor-all or half-half (aliases accepted)
        k: base width, the map count of the first conv layer
        bank: master bank (k entries for gabor1/half-half, 2k for gabor-all)
        layers: parsed architecture
        distinct_layer2_bank: half-half with orientations outside the k-bank
        fix_deeper_layers: apply the second-layer rule to conv layers past
            the second one (otherwise they stay trainable)
        partial_fraction: turn fixed slots into PartialGabor with this
            freeze point
        partial_from_layer: conv layers before this conv position stay fixed

    Returns:
        NetworkConfig

    Raises:
        ConfigurationError: unknown preset or bank too small
    """
    preset = normalize_preset(preset)
    conv = _check_width(layers, k)
    policy: Dict[int, StatusGrid] = {}

    for position, layer in enumerate(conv):
        spec = layers[layer]
        out_maps = spec.out_shape[0]
        if preset == PRESET_BASELINE:
            grid = _all_trainable(spec)
        elif position == 0:
            grid = _fixed_maps(spec, _subset_keys(bank, k))
        elif position > 1 and not fix_deeper_layers:
            grid = _all_trainable(spec)
        elif preset == PRESET_GABOR1:
            grid = _all_trainable(spec)
        elif preset == PRESET_GABOR_ALL:
            grid = _fixed_maps(spec, _fixed_keys(bank, k, out_maps))
        elif preset == PRESET_HALF_HALF:
            if out_maps % 2:
                raise ConfigurationError(f"Half-half needs an even map count, layer {layer} has {out_maps}")
            half = out_maps // 2
            keys = _distinct_keys(bank, k, half) if distinct_layer2_bank else _fixed_keys(bank, k, half)
            grid = _fixed_maps(spec, keys)
        else:  # pragma: no cover - normalize_preset guards this
            raise ConfigurationError(f"Unknown preset '{preset}'")
        policy[layer] = grid

    name = preset if not distinct_layer2_bank else f"{preset}-distinct"
    config = _finish(name, layers, policy, bank, partial_fraction, partial_from_layer)
    logger.debug(f"Built config {config.name}: {len(config.referenced_entries())} bank entries")
    return config


def sweep_configs(
    k: int,
    i: int,
    bank: KernelBank,
    layers: Sequence[LayerSpec],
    partial_fraction: Optional[float] = None,
    partial_from_layer: int = 0,
) -> NetworkConfig:
    """
    First conv layer fixed, ``i`` fixed output maps in the second.

    i=0 matches gabor1, i=k matches half-half, i=2k matches gabor-all.

    Counts above k that do not divide the bank size take the first i bank
    entries, which only partly overlap the first layer's k-bank. With k=6
    and a 12-entry bank, i=9 uses 0..120 degrees in 15-degree steps, so the
    stored bank holds 10 distinct entries (the nine plus 150 degrees).
    """
    conv = _check_width(layers, k)
    if len(conv) < 2:
        raise ConfigurationError("The sweep needs two conv layers")
    second = layers[conv[1]]
    if not 0 <= i <= second.out_shape[0]:
        raise ConfigurationError(f"Sweep index {i} outside [0, {second.out_shape[0]}]")

    policy: Dict[int, StatusGrid] = {conv[0]: _fixed_maps(layers[conv[0]], _subset_keys(bank, k))}
    policy[conv[1]] = _fixed_maps(second, _fixed_keys(bank, k, i))
    for layer in conv[2:]:
        policy[layer] = _all_trainable(layers[layer])
    return _finish(f"sweep-{i}", layers, policy, bank, partial_fraction, partial_from_layer)


def _finish(
    name: str,
    layers: Sequence[LayerSpec],
    policy: Dict[int, StatusGrid],
    bank: KernelBank,
    partial_fraction: Optional[float],
    partial_from_layer: int,
) -> NetworkConfig:
    if partial_fraction is not None:
        policy = with_partial_training(policy, partial_fraction, partial_from_layer)
        if any(isinstance(s, PartialGabor) for grid in policy.values() for row in grid for s in row):
            name = f"{name}-partial{partial_fraction:g}"
    used = {s.entry for grid in policy.values() for row in grid for s in row if not isinstance(s, Trainable)}
    return NetworkConfig(name=name, layers=tuple(layers), policy=policy, bank=bank.subset(sorted(used)))


def with_partial_training(
    policy: Dict[int, StatusGrid],
    fraction: float,
    from_position: int = 0,
) -> Dict[int, StatusGrid]:
    """
    Turn FixedGabor slots into PartialGabor(fraction).

    Conv layers before conv position ``from_position`` stay fixed. Entries
    shared with a layer that stays fixed also stay fixed, so slots sharing
    an entry always follow one schedule.
    """
    if not 0 < fraction < 1:
        raise PolicyError(f"Freeze fraction must lie strictly between 0 and 1, got {fraction}")
    conv = sorted(policy)
    pinned = {
        s.entry
        for layer in conv[:from_position]
        for row in policy[layer] for s in row
        if isinstance(s, FixedGabor)
    }

    def convert(status: Status) -> Status:
        if isinstance(status, FixedGabor) and status.entry not in pinned:
            return PartialGabor(status.entry, fraction)
        return status

    return {layer: tuple(tuple(convert(s) for s in row) for row in policy[layer]) for layer in conv}


# =============================================================================
# MASKS
# =============================================================================

def gradient_mask(config: NetworkConfig, layer_index: int, epoch_fraction: float) -> np.ndarray:
    """
    Per-slot boolean mask for one conv layer.

    Trainable -> True, FixedGabor -> False, PartialGabor(p) -> epoch_fraction < p.
    """
    if layer_index not in config.policy:
        raise PolicyError(f"Layer {layer_index} is not a conv layer")
    grid = config.policy[layer_index]
    return np.array([[_is_active(s, epoch_fraction) for s in row] for row in grid], dtype=bool)


def bias_mask(config: NetworkConfig, layer_index: int, epoch_fraction: float) -> np.ndarray:
    """A map's bias trains while any of its slots trains; fixed maps keep bias 0."""
    return gradient_mask(config, layer_index, epoch_fraction).any(axis=1)


def masks_for_epoch(config: NetworkConfig, epoch_fraction: float) -> Tuple[Dict[int, np.ndarray], Dict[int, np.ndarray]]:
    slot_masks = {layer: gradient_mask(config, layer, epoch_fraction) for layer in config.conv_layers}
    return slot_masks, {layer: m.any(axis=1) for layer, m in slot_masks.items()}


def _is_active(status: Status, fraction: float) -> bool:
    if isinstance(status, Trainable):
        return True
    if isinstance(status, PartialGabor):
        return fraction < status.freeze_at
    return False


# =============================================================================
# STATE
# =============================================================================

def init_layer_states(config: NetworkConfig, seed: int, dtype=np.float32) -> List[Any]:
    """
    Seeded initial states with bank kernels placed in fixed/partial slots.

    The random stream is drawn for the whole network first, so every
    configuration sees the same initial values in its trainable slots.
    """
    states = net.init_states(config.layers, seed, dtype)
    for (layer, o, i), status in config.slots():
        if isinstance(status, Trainable):
            continue
        states[layer].kernels[o, i] = config.bank.entry(status.entry).kernel.astype(dtype)
    for layer in config.conv_layers:
        state = states[layer]
        origin = tuple(
            tuple(None if isinstance(s, Trainable) else s.entry for s in row)
            for row in config.policy[layer]
        )
        states[layer] = ConvLayerState(state.kernels, state.biases, origin)
    return states


def apply_updates(
    config: NetworkConfig,
    layer_states: List[Any],
    gradients: Dict[int, Union[ConvGradients, FcGradients]],
    learning_rate: float,
    epoch_fraction: float = 0.0,
) -> List[Any]:
    """
    SGD step under the policy (in place; the states are also returned).

    Owned trainable slots take kernel -= lr * grad. Slots sharing a
    PartialGabor entry take one shared step of lr * (sum of their slot
    gradients), written to every slot of that entry. Mask-false slots are
    not touched.

    Raises:
        PolicyError: gradients were produced under a different mask
    """
    shared: Dict[str, np.ndarray] = {}
    for layer, grads in sorted(gradients.items()):
        state = layer_states[layer]
        if isinstance(grads, FcGradients):
            net.sgd_step_dense(state, grads, learning_rate)
            continue
        lr = state.kernels.dtype.type(learning_rate)
        mask = gradient_mask(config, layer, epoch_fraction)
        if grads.slot_mask.shape != mask.shape or not np.array_equal(grads.slot_mask, mask):
            raise PolicyError(f"Layer {layer} gradients were computed under a different mask")
        if not np.array_equal(grads.bias_mask, mask.any(axis=1)):
            raise PolicyError(f"Layer {layer} bias gradients were computed under a different mask")

        owned = mask & state.owned_mask()
        if owned.any():
            state.kernels[owned] -= lr * grads.kernel_grad[owned]
        biases = grads.bias_mask
        if biases.any():
            state.biases[biases] -= lr * grads.bias_grad[biases]

        for o, i in zip(*np.nonzero(mask & ~state.owned_mask())):
            key = state.origin[o][i]
            if key in shared:
                shared[key] = shared[key] + grads.kernel_grad[o, i]
            else:
                shared[key] = grads.kernel_grad[o, i].copy()

    if shared:
        slots_by_entry = config.entry_slots()
        for key, total in shared.items():
            slots = slots_by_entry[key]
            first_layer, first_o, first_i = slots[0]
            current = layer_states[first_layer].kernels[first_o, first_i]
            updated = current - current.dtype.type(learning_rate) * total
            for layer, o, i in slots:
                layer_states[layer].kernels[o, i] = updated
    return layer_states
