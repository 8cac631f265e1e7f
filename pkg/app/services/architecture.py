"""
Architecture description parser.

Grammar (whitespace separated, brackets optional):

    <input> <layer> ... <n>o

    input   P       P pixels, a perfect square, one channel
            PxC     C channels
    layer   (kxk)Nc conv layer, N output maps, odd kernel extents
            Ns      mean-pool sub-sampling by N
            Nfc     hidden fully-connected layer, N neurons
    output  No      output layer, N neurons (last token)

Example: "784 (5x5)6c 2s (5x5)12c 2s 10o"
"""
import math
import re
from typing import List, Sequence, Tuple

from app.config import ARCHITECTURE_PRESETS
from app.errors import ArchitectureParseError
from app.services.tensor_core import (
    KIND_CONV,
    KIND_FC,
    KIND_OUTPUT,
    KIND_POOL,
    SIGMOID,
    LayerSpec,
)
from app.utils.normalizers import normalize_architecture

_INPUT = re.compile(r"^(\d+)(?:x(\d+))?$")
_CONV = re.compile(r"^\((\d+)x(\d+)\)(\d+)c$")
_POOL = re.compile(r"^(\d+)s$")
_FC = re.compile(r"^(\d+)fc$")
_OUTPUT = re.compile(r"^(\d+)o$")
_MAXPOOL = re.compile(r"^\((\d+)x(\d+)\)mp$")


def resolve_architecture(value: str) -> str:
    """Map a preset name (mnist, tich, facedet) to its description; pass text through."""
    key = str(value).strip().lower()
    return ARCHITECTURE_PRESETS.get(key, value)


def parse_architecture(text: str) -> List[LayerSpec]:
    """
    Parse an architecture description into validated LayerSpecs.

    Args:
        text: description such as "784 (5x5)6c 2s (5x5)12c 2s 10o", or a
            preset name

    Returns:
        LayerSpec list with inferred input and output shapes

    Raises:
        ArchitectureParseError: unknown token or geometry that does not tile,
            with the 0-based token position

    Examples:
        >>> [s.describe() for s in parse_architecture("784 (5x5)6c 2s (5x5)12c 2s 10o")]
        ['(5x5)6c', '2s', '(5x5)12c', '2s', '10o']
    """
    tokens = normalize_architecture(resolve_architecture(text)).split()
    if not tokens:
        raise ArchitectureParseError("Empty architecture description", 0)

    shape = _parse_input(tokens[0])
    layers: List[LayerSpec] = []

    for position, token in enumerate(tokens[1:], start=1):
        if layers and layers[-1].kind == KIND_OUTPUT:
            raise ArchitectureParseError("Output layer must be the last token", position, token)

        m = _CONV.match(token)
        if m:
            kh, kw, maps = (int(v) for v in m.groups())
            _require_spatial(shape, position, token)
            if maps < 1:
                raise ArchitectureParseError("Conv layer needs at least one map", position, token)
            if kh % 2 == 0 or kw % 2 == 0:
                raise ArchitectureParseError(f"Kernel {kh}x{kw} must have odd extents", position, token)
            _, h, w = shape
            if kh > h or kw > w:
                raise ArchitectureParseError(f"Kernel {kh}x{kw} larger than {h}x{w} input", position, token)
            out = (maps, h - kh + 1, w - kw + 1)
            layers.append(LayerSpec(KIND_CONV, maps, (kh, kw), SIGMOID, shape, out))
            shape = out
            continue

        m = _POOL.match(token)
        if m:
            factor = int(m.group(1))
            _require_spatial(shape, position, token)
            maps, h, w = shape
            if factor < 1 or h % factor or w % factor:
                raise ArchitectureParseError(
                    f"Extent {h}x{w} is not divisible by pool factor {factor}", position, token
                )
            out = (maps, h // factor, w // factor)
            layers.append(LayerSpec(KIND_POOL, factor, (0, 0), SIGMOID, shape, out))
            shape = out
            continue

        m = _FC.match(token) or _OUTPUT.match(token)
        if m:
            neurons = int(m.group(1))
            if neurons < 1:
                raise ArchitectureParseError("Layer needs at least one neuron", position, token)
            kind = KIND_FC if token.endswith("fc") else KIND_OUTPUT
            layers.append(LayerSpec(kind, neurons, (0, 0), SIGMOID, shape, (neurons,)))
            shape = (neurons,)
            continue

        if _MAXPOOL.match(token):
            raise ArchitectureParseError("Max pooling is not supported", position, token)
        raise ArchitectureParseError("Unknown layer token", position, token)

    if not layers or layers[-1].kind != KIND_OUTPUT:
        raise ArchitectureParseError("Description must end with an output layer (No)", len(tokens) - 1, tokens[-1])
    return layers


def describe_architecture(layers: Sequence[LayerSpec]) -> str:
    """Render LayerSpecs back to the description grammar."""
    maps, h, w = layers[0].in_shape
    head = f"{h * w}" if maps == 1 else f"{h * w}x{maps}"
    return " ".join([head] + [spec.describe() for spec in layers])


def conv_layer_indices(layers: Sequence[LayerSpec]) -> List[int]:
    return [i for i, spec in enumerate(layers) if spec.is_conv]


def input_shape(layers: Sequence[LayerSpec]) -> Tuple[int, ...]:
    return layers[0].in_shape


def _parse_input(token: str) -> Tuple[int, int, int]:
    m = _INPUT.match(token)
    if not m:
        raise ArchitectureParseError("First token must be the input size (P or PxC)", 0, token)
    pixels = int(m.group(1))
    channels = int(m.group(2) or 1)
    side = math.isqrt(pixels)
    if pixels < 1 or side * side != pixels:
        raise ArchitectureParseError(f"Input size {pixels} is not a perfect square", 0, token)
    if channels < 1:
        raise ArchitectureParseError("Input needs at least one channel", 0, token)
    return channels, side, side


def _require_spatial(shape: Tuple[int, ...], position: int, token: str) -> None:
    if len(shape) != 3:
        raise ArchitectureParseError("Spatial layer after a fully-connected layer", position, token)
