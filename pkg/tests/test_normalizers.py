"""
Tests for preset and architecture normalization functions.
"""
import pytest
import sys
from pathlib import Path

# Add project root to path
sys.path.insert(0, str(Path(__file__).parent.parent))

from app.errors import ConfigurationError
from app.utils.normalizers import normalize_architecture, normalize_preset


class TestNormalizePreset:
    """Tests for normalize_preset function."""

    def test_canonical_names(self):
        """Should keep canonical names unchanged."""
        for name in ("baseline", "gabor1", "gabor-all", "half-half"):
            assert normalize_preset(name) == name

    def test_aliases(self):
        """Should map aliases in any case."""
        assert normalize_preset("Half_Half") == "half-half"
        assert normalize_preset(" HH ") == "half-half"
        assert normalize_preset("fixed-fixed") == "gabor-all"
        assert normalize_preset("Trainable") == "baseline"

    def test_spaces(self):
        """Should treat spaces as separators."""
        assert normalize_preset("gabor 1") == "gabor1"
        assert normalize_preset("gabor all") == "gabor-all"

    def test_none(self):
        """Should reject a missing preset."""
        with pytest.raises(ConfigurationError):
            normalize_preset(None)

    def test_unknown(self):
        """Should reject unknown presets and list the valid ones."""
        with pytest.raises(ConfigurationError) as exc:
            normalize_preset("everything-fixed")
        assert "half-half" in str(exc.value)


class TestNormalizeArchitecture:
    """Tests for normalize_architecture function."""

    def test_brackets_and_sign(self):
        """Should drop brackets and replace the multiplication sign."""
        assert normalize_architecture("[784 (5×5)6c  2s (5×5)12c 2s 10o]") == (
            "784 (5x5)6c 2s (5x5)12c 2s 10o"
        )

    def test_spaces_inside_window(self):
        """Should close spaces inside the window token."""
        assert normalize_architecture("784 ( 5 X 5 )6C 2S 10O") == "784 (5x5)6c 2s 10o"

    def test_none(self):
        """Should return an empty string for None."""
        assert normalize_architecture(None) == ""


if __name__ == "__main__":
    pytest.main([__file__, "-v"])
