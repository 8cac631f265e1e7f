"""
Normalization utilities for preset names and architecture descriptions.

User input arrives from the CLI, the API and JSON documents with assorted
spellings; everything is mapped to the canonical names in app.config.
"""
import re
from typing import Any, Optional

from app.config import PRESET_ALIASES, PRESETS
from app.errors import ConfigurationError


def normalize_preset(value: Any) -> str:
    """
    Normalize a configuration preset name.

    Args:
        value: Preset name in any spelling

    Returns:
        One of baseline, gabor1, gabor-all, half-half

    Raises:
        ConfigurationError: unknown preset

    Examples:
        >>> normalize_preset("Half_Half")
        "half-half"
        >>> normalize_preset(" HH ")
        "half-half"
        >>> normalize_preset("gabor 1")
        "gabor1"
    """
    if value is None:
        raise ConfigurationError("Preset name is required")

    text = str(value).strip()
    if text in PRESETS:
        return text

    key = re.sub(r"\s+", "-", text.upper())
    if key in PRESET_ALIASES:
        return PRESET_ALIASES[key]

    compact = key.replace("-", "").replace("_", "")
    for alias, preset in PRESET_ALIASES.items():
        if alias.replace("-", "").replace("_", "") == compact:
            return preset

    raise ConfigurationError(f"Unknown preset '{value}'. Expected one of: {', '.join(PRESETS)}")


def normalize_architecture(text: Optional[str]) -> str:
    """
    Normalize an architecture description.

    Lowercases, replaces the multiplication sign by "x", drops surrounding
    brackets and collapses whitespace.

    Examples:
        >>> normalize_architecture("[784 (5×5)6c  2s (5×5)12c 2s 10o]")
        "784 (5x5)6c 2s (5x5)12c 2s 10o"
        >>> normalize_architecture(None)
        ""
    """
    if text is None:
        return ""
    cleaned = str(text).lower().replace("×", "x").replace("*", "x")
    cleaned = cleaned.replace("[", " ").replace("]", " ")
    # "( 5 x 5 )" -> "(5x5)"
    cleaned = re.sub(r"\(\s*(\d+)\s*x\s*(\d+)\s*\)", r"(\1x\2)", cleaned)
    return re.sub(r"\s+", " ", cleaned).strip()
