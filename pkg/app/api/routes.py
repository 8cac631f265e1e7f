"""
FastAPI routes for GaborNet Lab.
"""
from datetime import datetime, timezone
from typing import List

from fastapi import APIRouter, Depends, HTTPException, Query
from fastapi.responses import Response

from app.api.dependencies import get_cost_table
from app.api.schemas import (
    BankEntryInfo,
    BankResponse,
    CompareRequest,
    CompareResponse,
    CostRow,
    CostsResponse,
    HealthCheck,
    PresetInfo,
    PresetsResponse,
    RunCreated,
    RunStatus,
)
from app.config import ARCHITECTURE_PRESETS, DEFAULT_ARCHITECTURE, DEFAULT_BATCH_SIZE, PRESET_LABELS
from app.services import experiment, run_store
from app.services.comparison import compare_many, preset_configs, projected_table, sweep_config_list, sweep_table
from app.services.cost import CostTable, backprop_shares
from app.services.experiment import RunConfig, RunReport
from app.services.gabor import make_gabor_bank
from app.utils.exporters import export_csv, export_excel, kernel_grid, pgm_text

api_router = APIRouter(prefix="/api")


def _finished_report(run_id: str) -> RunReport:
    data = run_store.get_run(run_id)
    if data is None:
        raise HTTPException(status_code=404, detail=f"Treino {run_id} nao encontrado")
    if data["status"] != run_store.STATUS_DONE:
        raise HTTPException(status_code=400, detail=f"Treino {run_id} ainda nao terminou (status: {data['status']})")
    return data["report"]


def _comparison(request: CompareRequest, table: CostTable):
    baseline = _finished_report(request.baseline_run_id)
    candidates = [_finished_report(run_id) for run_id in request.candidate_run_ids]
    if request.sweep:
        return sweep_table(candidates, baseline, table)
    return compare_many(candidates, baseline, table)


# =============================================================================
# HEALTH
# =============================================================================

@api_router.api_route("/health", methods=["GET", "HEAD"], response_model=HealthCheck)
async def health_check():
    return HealthCheck(
        status="healthy",
        timestamp=datetime.now(timezone.utc).isoformat(),
        service="gabornet-lab",
        runs=run_store.get_run_stats(),
    )


# =============================================================================
# PRESETS, COSTS, BANK
# =============================================================================

@api_router.get("/presets", response_model=PresetsResponse)
async def get_presets(arch: str = Query(DEFAULT_ARCHITECTURE)):
    """Policy presets for an architecture, with their fixed-map counts."""
    configs = preset_configs(arch)
    presets = [
        PresetInfo(
            name=config.name,
            label=PRESET_LABELS[config.name],
            fixed_maps={str(layer): config.fixed_map_count(layer) for layer in config.conv_layers},
            distinct_bank_entries=len(config.referenced_entries()),
        )
        for config in configs
    ]
    return PresetsResponse(architecture=arch, presets=presets, architectures=ARCHITECTURE_PRESETS)


@api_router.get("/costs", response_model=CostsResponse)
async def get_costs(
    arch: str = Query(DEFAULT_ARCHITECTURE),
    n_train: int = Query(60000, ge=1),
    batch_size: int = Query(DEFAULT_BATCH_SIZE, ge=1),
    epochs: int = Query(1, ge=1),
    sweep: bool = Query(False),
    table: CostTable = Depends(get_cost_table),
):
    """Counting-only energy, storage and memory comparison (no training)."""
    configs = preset_configs(arch)
    baseline = configs[0]
    if sweep:
        configs = sweep_config_list(arch)
    df = projected_table(configs, baseline, n_train, batch_size, epochs, table)
    shares = backprop_shares(baseline, table)
    return CostsResponse(
        architecture=arch,
        train_samples=n_train,
        batch_size=batch_size,
        epochs=epochs,
        rows=[CostRow(**row) for row in df.to_dicts()],
        backprop_shares={str(layer): share for layer, share in shares.items()},
    )


@api_router.get("/bank")
async def get_bank(
    k: int = Query(6, ge=1),
    size: int = Query(5, ge=1),
    formato: str = Query("json", pattern="^(json|pgm)$"),
):
    """The k-orientation Gabor bank, as JSON or as one PGM strip."""
    bank = make_gabor_bank(k, size=size)
    if formato == "pgm":
        return Response(
            content=pgm_text(kernel_grid(bank.kernels)),
            media_type="image/x-portable-graymap",
            headers={"Content-Disposition": f"attachment; filename=gabor_{k}x{size}.pgm"},
        )
    return BankResponse(
        k=k,
        size=size,
        entries=[
            BankEntryInfo(key=e.key, theta=str(e.theta), kernel=e.kernel.tolist())
            for e in bank
        ],
    )


# =============================================================================
# RUNS
# =============================================================================

@api_router.post("/runs", response_model=RunCreated, status_code=202)
async def create_run(run_config: RunConfig, table: CostTable = Depends(get_cost_table)):
    """Queue a training run; it executes in a background thread."""
    run_id = run_store.create_run(run_config.model_dump())
    run_store.start_run(run_id, lambda: experiment.run(run_config, table))
    return RunCreated(run_id=run_id, status=run_store.STATUS_QUEUED)


@api_router.get("/runs")
async def list_runs() -> List[dict]:
    return run_store.list_runs()


@api_router.get("/runs/{run_id}", response_model=RunStatus)
async def get_run(run_id: str):
    data = run_store.get_run(run_id)
    if data is None:
        raise HTTPException(status_code=404, detail=f"Treino {run_id} nao encontrado")
    return RunStatus(
        run_id=run_id,
        status=data["status"],
        config=RunConfig.model_validate(data["config"]),
        error=data["error"],
        report=data["report"],
    )


# =============================================================================
# COMPARISON
# =============================================================================

@api_router.post("/compare", response_model=CompareResponse)
async def compare_runs(request: CompareRequest, table: CostTable = Depends(get_cost_table)):
    """Comparison table of finished runs against a baseline run."""
    return CompareResponse(rows=_comparison(request, table).to_dicts())


@api_router.post("/compare/export")
async def export_comparison(
    request: CompareRequest,
    formato: str = Query("csv", pattern="^(csv|xlsx)$"),
    table: CostTable = Depends(get_cost_table),
):
    """Export the comparison table to CSV or Excel."""
    df = _comparison(request, table)
    if formato == "xlsx":
        content = export_excel(df, "Comparison")
        media_type = "application/vnd.openxmlformats-officedocument.spreadsheetml.sheet"
        filename = "comparison.xlsx"
    else:
        content = export_csv(df)
        media_type = "text/csv"
        filename = "comparison.csv"

    return Response(
        content=content,
        media_type=media_type,
        headers={"Content-Disposition": f"attachment; filename={filename}"},
    )
