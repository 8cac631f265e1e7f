"""
Pydantic schemas for API request/response validation.
"""
from typing import Any, Dict, List, Optional

from pydantic import BaseModel, Field

from app.services.experiment import RunConfig, RunReport


class HealthCheck(BaseModel):
    """Health check response."""
    status: str
    timestamp: str
    service: str
    runs: Optional[Dict[str, Any]] = None


class PresetInfo(BaseModel):
    """One policy preset."""
    name: str
    label: str
    fixed_maps: Dict[str, int]
    distinct_bank_entries: int


class PresetsResponse(BaseModel):
    architecture: str
    presets: List[PresetInfo]
    architectures: Dict[str, str]


class CostRow(BaseModel):
    """Counting-only comparison row."""
    config: str
    label: str
    energy_savings_pct: float
    storage_savings_pct: float
    memory_access_factor: float
    total_macs: int
    skipped_macs: int
    stored_values: int


class CostsResponse(BaseModel):
    architecture: str
    train_samples: int
    batch_size: int
    epochs: int
    rows: List[CostRow]
    backprop_shares: Dict[str, float]


class BankEntryInfo(BaseModel):
    key: str
    theta: str
    kernel: List[List[float]]


class BankResponse(BaseModel):
    k: int
    size: int
    entries: List[BankEntryInfo]


class RunCreated(BaseModel):
    """Response after queueing a run."""
    run_id: str
    status: str


class RunStatus(BaseModel):
    run_id: str
    status: str
    config: RunConfig
    error: Optional[str] = None
    report: Optional[RunReport] = None


class CompareRequest(BaseModel):
    """Compare finished runs against a baseline run."""
    baseline_run_id: str
    candidate_run_ids: List[str] = Field(default_factory=list)
    sweep: bool = False


class CompareResponse(BaseModel):
    rows: List[Dict[str, Any]]

