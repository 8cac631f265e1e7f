"""
Tests for table exports and PGM kernel tiles.
"""
import numpy as np
import polars as pl
import pytest
import sys
from pathlib import Path

# Add project root to path
sys.path.insert(0, str(Path(__file__).parent.parent))

from app.services.gabor import make_gabor_bank
from app.utils.exporters import (
    export_bank_pgm,
    export_csv,
    export_excel,
    export_multiple_sheets,
    kernel_grid,
    pgm_text,
    to_gray_levels,
    write_table,
)


@pytest.fixture
def table():
    return pl.DataFrame({
        "config": ["baseline", "gabor1"],
        "energy_savings_pct": [0.0, 21.27],
        "memory_access_factor": [1.0, 1.08],
    })


class TestTableExports:
    """Tests for CSV and Excel exports."""

    def test_csv(self, table):
        """Should write a header and one line per row."""
        lines = export_csv(table).decode("utf-8").strip().splitlines()
        assert lines[0] == "config,energy_savings_pct,memory_access_factor"
        assert lines[2].startswith("gabor1,21.27")

    def test_excel(self, table):
        """Should produce an xlsx workbook."""
        assert export_excel(table).startswith(b"PK")
        assert export_multiple_sheets({"A": table, "B": table}).startswith(b"PK")

    def test_write_table(self, table, tmp_path):
        """Should choose the format from the suffix and create directories."""
        csv_path = write_table(table, tmp_path / "out" / "table.csv")
        xlsx_path = write_table(table, tmp_path / "out" / "table.xlsx")
        assert csv_path.read_bytes().startswith(b"config,")
        assert xlsx_path.read_bytes().startswith(b"PK")


class TestPgm:
    """Tests for gray-level tiles."""

    def test_gray_levels(self):
        """Should map the minimum to 0 and the maximum to 255."""
        levels = to_gray_levels(np.array([[-1.0, 0.0], [0.5, 1.0]]))
        assert levels.min() == 0
        assert levels.max() == 255
        assert levels[0, 1] == 128

    def test_constant_tile(self):
        """Should map a constant tile to zeros."""
        assert not to_gray_levels(np.full((3, 3), 0.7)).any()

    def test_pgm_text(self):
        """Should write a plain PGM header with width before height."""
        text = pgm_text(np.array([[0, 255, 10]]))
        assert text == "P2\n3 1\n255\n0 255 10\n"

    def test_grid_width(self):
        """Should separate tiles by the gap."""
        bank = make_gabor_bank(4)
        assert kernel_grid(bank.kernels, gap=1).shape == (5, 4 * 5 + 3)
        assert kernel_grid(bank.kernels, gap=0).shape == (5, 20)

    def test_export_bank(self, tmp_path):
        """Should write one tile per kernel and the strip last."""
        paths = export_bank_pgm(make_gabor_bank(6), tmp_path / "bank", prefix="g")
        assert [p.name for p in paths[:2]] == ["g_00.pgm", "g_01.pgm"]
        assert paths[-1].name == "g_bank.pgm"
        assert len(paths) == 7
        assert paths[0].read_text(encoding="ascii").startswith("P2\n5 5\n255\n")


if __name__ == "__main__":
    pytest.main([__file__, "-v"])
