"""
Tests for the command line.
"""
import pytest
import sys
from pathlib import Path

# Add project root to path
sys.path.insert(0, str(Path(__file__).parent.parent))

import cli
from app.services.experiment import RunReport

SMALL_ARCH = "400 (5x5)2c 2s (5x5)4c 2s 2o"
SMALL_RUN = [
    "--arch", SMALL_ARCH, "--dataset", "synthetic", "--synth-samples", "40",
    "--synth-size", "20", "--epochs", "1", "--batch", "10",
]


class TestCosts:
    """Tests for the costs subcommand."""

    def test_presets_table(self, tmp_path, capsys):
        """Should print the preset table and write it as CSV."""
        out = tmp_path / "costs.csv"
        assert cli.main(["costs", "--n-train", "50", "--out", str(out)]) == 0
        printed = capsys.readouterr().out
        assert "gabor-all" in printed
        assert "backprop share" in printed
        assert out.read_text(encoding="utf-8").startswith("config,label,")

    def test_sweep(self, capsys):
        """Should print the sweep rows."""
        assert cli.main(["costs", "--n-train", "50", "--sweep"]) == 0
        assert "sweep-12" in capsys.readouterr().out

    def test_bad_architecture(self, capsys):
        """Should exit with 2 on an architecture that does not parse."""
        assert cli.main(["costs", "--arch", "784 3s 10o"]) == 2
        assert "[ERROR]" in capsys.readouterr().err


class TestBank:
    """Tests for the bank subcommand."""

    def test_writes_tiles(self, tmp_path):
        """Should write k tiles and the strip."""
        assert cli.main(["bank", "--k", "3", "--prefix", "t", "--out", str(tmp_path)]) == 0
        assert sorted(p.name for p in tmp_path.iterdir()) == [
            "t_00.pgm", "t_01.pgm", "t_02.pgm", "t_bank.pgm",
        ]


class TestCheckGrad:
    """Tests for the check-grad subcommand."""

    def test_passes(self, capsys):
        """Should pass on the default small network."""
        assert cli.main(["check-grad", "--trials", "2"]) == 0
        assert "PASS" in capsys.readouterr().out

    def test_masked(self):
        """Should pass with a fixed first layer."""
        assert cli.main(["check-grad", "--trials", "1", "--preset", "gabor1"]) == 0

    def test_bad_preset(self):
        """Should exit with 2 on an unknown preset."""
        assert cli.main(["check-grad", "--preset", "everything"]) == 2

    def test_negative_seed(self):
        """Should exit with 2 on a negative seed."""
        assert cli.main(["check-grad", "--seed", "-1"]) == 2


class TestRunAndCompare:
    """Tests for the run and compare subcommands."""

    def test_run_then_compare(self, tmp_path, capsys):
        """Should save reports and compare them."""
        base = tmp_path / "baseline.json"
        fixed = tmp_path / "gabor-all.json"
        assert cli.main(["run", *SMALL_RUN, "--out", str(base)]) == 0
        assert cli.main(["run", *SMALL_RUN, "--preset", "gabor-all", "--out", str(fixed)]) == 0
        assert RunReport.load(fixed).config_name == "gabor-all"

        table = tmp_path / "table.xlsx"
        code = cli.main([
            "compare", "--baseline", str(base), "--candidate", str(fixed), "--out", str(table),
        ])
        assert code == 0
        assert table.read_bytes().startswith(b"PK")
        assert "gabor-all" in capsys.readouterr().out

    def test_missing_report(self, tmp_path):
        """Should exit with 2 when a report is missing."""
        assert cli.main(["compare", "--baseline", str(tmp_path / "none.json")]) == 2


if __name__ == "__main__":
    pytest.main([__file__, "-v"])
