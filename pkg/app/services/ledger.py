"""
Cost ledger.

Counts MAC operations and memory events per (layer, training phase).
Counts are plain integers so ledgers add exactly and compare exactly.
"""
from collections import Counter
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, List, Optional, Tuple

from app.config import (
    PHASE_FORWARD,
    PHASE_ERROR_LOSS,
    PHASE_BACKPROP_ERROR,
    PHASE_WEIGHT_GRADIENT,
    PHASE_WEIGHT_UPDATE,
    MEM_WEIGHT_READ,
    MEM_WEIGHT_WRITE,
    MEM_ACTIVATION_READ,
    MEM_ACTIVATION_WRITE,
)
from app.errors import ConfigurationError


class Phase(str, Enum):
    """Exhaustive partition of training work."""
    FORWARD_PROP = PHASE_FORWARD
    ERROR_AND_LOSS = PHASE_ERROR_LOSS
    BACKPROP_ERROR = PHASE_BACKPROP_ERROR
    WEIGHT_GRADIENT = PHASE_WEIGHT_GRADIENT
    WEIGHT_UPDATE = PHASE_WEIGHT_UPDATE


class MemEvent(str, Enum):
    WEIGHT_READ = MEM_WEIGHT_READ
    WEIGHT_WRITE = MEM_WEIGHT_WRITE
    ACTIVATION_READ = MEM_ACTIVATION_READ
    ACTIVATION_WRITE = MEM_ACTIVATION_WRITE


# Phases whose work disappears for fixed kernels
BACKPROP_PHASES = (Phase.BACKPROP_ERROR, Phase.WEIGHT_GRADIENT, Phase.WEIGHT_UPDATE)


@dataclass
class CostLedger:
    """
    MAC and memory-event counts bucketed by layer and phase.

    Attributes:
        mac_counts: (layer, Phase) -> MACs
        mem_events: (layer, Phase, MemEvent) -> events
        samples_processed: training samples seen
        batches_processed: optimizer steps taken
    """
    mac_counts: Counter = field(default_factory=Counter)
    mem_events: Counter = field(default_factory=Counter)
    samples_processed: int = 0
    batches_processed: int = 0

    def add_macs(self, layer: int, phase: Phase, count: int) -> None:
        count = int(count)
        if count < 0:
            raise ConfigurationError(f"Negative MAC count {count} for layer {layer}")
        if count:
            self.mac_counts[(int(layer), Phase(phase))] += count

    def add_mem(self, layer: int, phase: Phase, event: MemEvent, count: int) -> None:
        count = int(count)
        if count < 0:
            raise ConfigurationError(f"Negative memory count {count} for layer {layer}")
        if count:
            self.mem_events[(int(layer), Phase(phase), MemEvent(event))] += count

    def merge(self, other: "CostLedger") -> "CostLedger":
        """Add another ledger into this one (in place) and return self."""
        self.mac_counts.update(other.mac_counts)
        self.mem_events.update(other.mem_events)
        self.samples_processed += other.samples_processed
        self.batches_processed += other.batches_processed
        return self

    def __add__(self, other: "CostLedger") -> "CostLedger":
        return self.copy().merge(other)

    def copy(self) -> "CostLedger":
        return CostLedger(
            mac_counts=Counter(self.mac_counts),
            mem_events=Counter(self.mem_events),
            samples_processed=self.samples_processed,
            batches_processed=self.batches_processed,
        )

    def scaled(self, factor: int) -> "CostLedger":
        """Multiply every count by a non-negative integer."""
        if factor < 0:
            raise ConfigurationError(f"Cannot scale a ledger by {factor}")
        return CostLedger(
            mac_counts=Counter({k: v * factor for k, v in self.mac_counts.items() if v * factor}),
            mem_events=Counter({k: v * factor for k, v in self.mem_events.items() if v * factor}),
            samples_processed=self.samples_processed * factor,
            batches_processed=self.batches_processed * factor,
        )

    # -------------------------------------------------------------------------
    # Queries
    # -------------------------------------------------------------------------

    def layers(self) -> List[int]:
        found = {k[0] for k in self.mac_counts} | {k[0] for k in self.mem_events}
        return sorted(found)

    def macs(self, layer: Optional[int] = None, phase: Optional[Phase] = None) -> int:
        return sum(
            v for (l, p), v in self.mac_counts.items()
            if (layer is None or l == layer) and (phase is None or p == phase)
        )

    def mem(
        self,
        layer: Optional[int] = None,
        phase: Optional[Phase] = None,
        event: Optional[MemEvent] = None,
    ) -> int:
        return sum(
            v for (l, p, e), v in self.mem_events.items()
            if (layer is None or l == layer)
            and (phase is None or p == phase)
            and (event is None or e == event)
        )

    def macs_by_phase(self) -> Dict[Phase, int]:
        return {phase: self.macs(phase=phase) for phase in Phase}

    def is_empty(self) -> bool:
        return not self.mac_counts and not self.mem_events

    # -------------------------------------------------------------------------
    # Serialization
    # -------------------------------------------------------------------------

    def to_document(self) -> Dict[str, Any]:
        macs = [
            {"layer": l, "phase": p.value, "count": v}
            for (l, p), v in sorted(self.mac_counts.items(), key=_mac_key)
        ]
        mem = [
            {"layer": l, "phase": p.value, "event": e.value, "count": v}
            for (l, p, e), v in sorted(self.mem_events.items(), key=_mem_key)
        ]
        return {
            "samples_processed": self.samples_processed,
            "batches_processed": self.batches_processed,
            "macs": macs,
            "memory": mem,
        }

    @classmethod
    def from_document(cls, doc: Dict[str, Any]) -> "CostLedger":
        ledger = cls(
            samples_processed=int(doc.get("samples_processed", 0)),
            batches_processed=int(doc.get("batches_processed", 0)),
        )
        try:
            for row in doc.get("macs", []):
                ledger.add_macs(row["layer"], Phase(row["phase"]), row["count"])
            for row in doc.get("memory", []):
                ledger.add_mem(row["layer"], Phase(row["phase"]), MemEvent(row["event"]), row["count"])
        except (KeyError, ValueError) as e:
            raise ConfigurationError(f"Malformed ledger document: {e}") from e
        return ledger


def _mac_key(item: Tuple[Tuple[int, Phase], int]) -> Tuple[int, int]:
    (layer, phase), _ = item
    return layer, list(Phase).index(phase)


def _mem_key(item: Tuple[Tuple[int, Phase, MemEvent], int]) -> Tuple[int, int, int]:
    (layer, phase, event), _ = item
    return layer, list(Phase).index(phase), list(MemEvent).index(event)
