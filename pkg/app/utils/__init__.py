# Utils module
from .normalizers import normalize_preset, normalize_architecture
from .formatters import format_number, format_percent, format_factor

__all__ = [
    "normalize_preset",
    "normalize_architecture",
    "format_number",
    "format_percent",
    "format_factor",
]
