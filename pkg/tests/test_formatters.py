"""
Tests for display formatting functions.
"""
import pytest
import sys
from pathlib import Path

# Add project root to path
sys.path.insert(0, str(Path(__file__).parent.parent))

from app.utils.formatters import (
    format_factor,
    format_number,
    format_percent,
    format_ratio_as_percent,
    format_seconds,
)


class TestFormatNumber:
    """Tests for format_number function."""

    def test_thousands(self):
        """Should add thousand separators."""
        assert format_number(1234567) == "1,234,567"
        assert format_number(207744) == "207,744"

    def test_decimals(self):
        """Should round to the requested decimals."""
        assert format_number(1234.567, 2) == "1,234.57"

    def test_none(self):
        """Should format None as 0."""
        assert format_number(None) == "0"


class TestFormatPercent:
    """Tests for the percentage formatters."""

    def test_percent(self):
        """Should format a percentage with two decimals."""
        assert format_percent(21.2712) == "21.27%"
        assert format_percent(None) == "0%"

    def test_ratio(self):
        """Should scale fractions to percent."""
        assert format_ratio_as_percent(0.351907) == "35.19%"
        assert format_ratio_as_percent(None) == "0%"


class TestFormatFactor:
    """Tests for format_factor function."""

    def test_factor(self):
        """Should append x to the factor."""
        assert format_factor(1.3156) == "1.32x"
        assert format_factor(None) == "-"


class TestFormatSeconds:
    """Tests for format_seconds function."""

    @pytest.mark.parametrize("value,expected", [
        (0.0421, "42.1 ms"),
        (5, "5.00 s"),
        (75.5, "1m 15.5s"),
        (None, "-"),
    ])
    def test_durations(self, value, expected):
        """Should pick milliseconds, seconds or minutes by magnitude."""
        assert format_seconds(value) == expected


if __name__ == "__main__":
    pytest.main([__file__, "-v"])
