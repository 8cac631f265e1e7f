"""
Formatting utilities for display values.
"""
from typing import Union

Number = Union[float, int, None]


def format_number(value: Number, decimals: int = 0) -> str:
    """
    Format a numeric value with thousand separators.

    Args:
        value: Numeric value to format
        decimals: Number of decimal places (default: 0)

    Returns:
        Formatted number string

    Examples:
        >>> format_number(1234567)
        "1,234,567"
        >>> format_number(1234.567, 2)
        "1,234.57"
    """
    if value is None:
        return "0"
    return f"{float(value):,.{decimals}f}"


def format_percent(value: Number, decimals: int = 2) -> str:
    """
    Format a value that is already a percentage.

    Examples:
        >>> format_percent(21.2712)
        "21.27%"
        >>> format_percent(None)
        "0%"
    """
    if value is None:
        return "0%"
    return f"{float(value):.{decimals}f}%"


def format_ratio_as_percent(value: Number, decimals: int = 2) -> str:
    """
    Format a fraction (0.2127) as a percentage.

    Examples:
        >>> format_ratio_as_percent(0.351907)
        "35.19%"
    """
    if value is None:
        return "0%"
    return format_percent(float(value) * 100, decimals)


def format_factor(value: Number, decimals: int = 2) -> str:
    """
    Format an improvement factor.

    Examples:
        >>> format_factor(1.3156)
        "1.32x"
    """
    if value is None:
        return "-"
    return f"{float(value):.{decimals}f}x"


def format_seconds(value: Number) -> str:
    """
    Format a duration.

    Examples:
        >>> format_seconds(0.0421)
        "42.1 ms"
        >>> format_seconds(75.5)
        "1m 15.5s"
    """
    if value is None:
        return "-"
    seconds = float(value)
    if seconds < 1:
        return f"{seconds * 1000:.1f} ms"
    if seconds < 60:
        return f"{seconds:.2f} s"
    minutes, rest = divmod(seconds, 60)
    return f"{int(minutes)}m {rest:.1f}s"
