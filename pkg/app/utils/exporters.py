"""
Export utilities for comparison tables, run reports and kernel banks.
"""
import io
from pathlib import Path
from typing import Dict, List, Sequence

import numpy as np
import polars as pl

from app.services.gabor import KernelBank


# Number formats applied to the comparison columns in Excel exports.
_TABLE_COLUMN_FORMATS = {
    "final_accuracy": '0.00"%"',
    "accuracy_loss_pp": '0.00',
    "energy_savings_pct": '0.00"%"',
    "training_time_reduction_pct": '0.00"%"',
    "storage_savings_pct": '0.00"%"',
    "memory_access_factor": '0.000"x"',
}


def export_csv(df: pl.DataFrame) -> bytes:
    """
    Export a Polars DataFrame to CSV bytes.

    Args:
        df: Polars DataFrame to export

    Returns:
        CSV file as bytes
    """
    buffer = io.BytesIO()
    df.write_csv(buffer)
    buffer.seek(0)
    return buffer.getvalue()


def export_excel(df: pl.DataFrame, sheet_name: str = "Comparison") -> bytes:
    """
    Export a Polars DataFrame to Excel bytes (xlsxwriter engine).

    Args:
        df: Polars DataFrame to export
        sheet_name: Name of the Excel sheet

    Returns:
        Excel file as bytes
    """
    return export_multiple_sheets({sheet_name: df})


def export_multiple_sheets(dataframes: Dict[str, pl.DataFrame]) -> bytes:
    """
    Export several DataFrames to one workbook, one sheet each.

    Args:
        dataframes: Dictionary mapping sheet names to DataFrames

    Returns:
        Excel file as bytes
    """
    import xlsxwriter

    buffer = io.BytesIO()
    with xlsxwriter.Workbook(buffer, {"in_memory": True}) as wb:
        for sheet_name, df in dataframes.items():
            formats = {c: f for c, f in _TABLE_COLUMN_FORMATS.items() if c in df.columns}
            df.write_excel(
                wb,
                worksheet=sheet_name[:31],
                column_formats=formats or None,
                autofit=True,
            )
    buffer.seek(0)
    return buffer.getvalue()


def write_table(df: pl.DataFrame, path: Path) -> Path:
    """Write a table as CSV, or as Excel when the suffix is .xlsx."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    data = export_excel(df) if path.suffix.lower() == ".xlsx" else export_csv(df)
    path.write_bytes(data)
    return path


# ---------------------------------------------------------------------------
# Kernel tiles (plain PGM, P2)
# ---------------------------------------------------------------------------

def to_gray_levels(kernel: np.ndarray) -> np.ndarray:
    """Affinely map values to integers in [0, 255]; a constant tile maps to 0."""
    values = np.asarray(kernel, dtype=np.float64)
    lo, hi = float(values.min()), float(values.max())
    if hi == lo:
        return np.zeros(values.shape, dtype=np.int64)
    return np.rint((values - lo) / (hi - lo) * 255).astype(np.int64)


def pgm_text(levels: np.ndarray) -> str:
    """Plain PGM document for a 2-D array of gray levels, row-major."""
    h, w = levels.shape
    rows = [" ".join(str(int(v)) for v in row) for row in levels]
    return "\n".join(["P2", f"{w} {h}", "255", *rows]) + "\n"


def kernel_grid(kernels: Sequence[np.ndarray], gap: int = 1) -> np.ndarray:
    """Lay tiles side by side (each mapped to [0, 255]) with ``gap`` black pixels."""
    tiles = [to_gray_levels(k) for k in kernels]
    h = max(t.shape[0] for t in tiles)
    w = sum(t.shape[1] for t in tiles) + gap * (len(tiles) - 1)
    grid = np.zeros((h, w), dtype=np.int64)
    x = 0
    for tile in tiles:
        grid[: tile.shape[0], x: x + tile.shape[1]] = tile
        x += tile.shape[1] + gap
    return grid


def export_bank_pgm(bank: KernelBank, out_dir: Path, prefix: str = "gabor") -> List[Path]:
    """
    Write one PGM tile per bank kernel plus a combined strip.

    Args:
        bank: KernelBank to export
        out_dir: destination directory (created if missing)
        prefix: file name prefix

    Returns:
        Paths written, tiles first, strip last
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for index, entry in enumerate(bank):
        path = out_dir / f"{prefix}_{index:02d}.pgm"
        path.write_text(pgm_text(to_gray_levels(entry.kernel)), encoding="ascii")
        written.append(path)
    strip = out_dir / f"{prefix}_bank.pgm"
    strip.write_text(pgm_text(kernel_grid(bank.kernels)), encoding="ascii")
    written.append(strip)
    return written
