"""
Gabor kernel synthesis.

Real even Gabor filters sampled on a centered integer grid and normalized to
zero mean and unit L2 norm, plus banks of kernels equally spaced in
orientation over [0, 180) degrees.
"""
import math
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Any, Dict, Iterator, List, Optional, Sequence, Union

import numpy as np

from app.config import (
    GABOR_DEFAULT_GAMMA,
    GABOR_DEFAULT_PSI,
    GABOR_DEGENERATE_NORM,
    GABOR_SIGMA_PER_WAVELENGTH,
)
from app.errors import ConfigurationError, SynthesisError

Degrees = Union[Fraction, int, float]


@dataclass(frozen=True)
class GaborShape:
    """Every Gabor parameter except the orientation."""
    size: int
    wavelength: float
    sigma: float
    gamma: float = GABOR_DEFAULT_GAMMA
    psi: float = GABOR_DEFAULT_PSI

    @classmethod
    def default(cls, size: int = 5) -> "GaborShape":
        """lambda = size - 1 (one carrier period spans the kernel), sigma = 0.56 * lambda."""
        wavelength = float(size - 1)
        return cls(size=size, wavelength=wavelength, sigma=GABOR_SIGMA_PER_WAVELENGTH * wavelength)

    def signature(self) -> str:
        return f"{self.size}x{self.size}/l={self.wavelength:g}/s={self.sigma:g}/g={self.gamma:g}/p={self.psi:g}"


@dataclass(frozen=True)
class GaborParams:
    """
    Analytic description of one Gabor kernel.

    ``theta`` and ``psi`` are in degrees; theta is kept as an exact Fraction.
    """
    theta: Fraction
    shape: GaborShape

    def __post_init__(self):
        object.__setattr__(self, "theta", Fraction(self.theta))
        validate_params(self)

    @property
    def size(self) -> int:
        return self.shape.size

    def describe(self) -> str:
        return f"theta={_format_degrees(self.theta)} {self.shape.signature()}"


def make_params(theta: Degrees = 0, size: int = 5, **overrides: Any) -> GaborParams:
    """Build GaborParams from the default shape for ``size`` with overrides."""
    shape = replace(GaborShape.default(size), **overrides)
    return GaborParams(theta=Fraction(theta), shape=shape)


def validate_params(params: GaborParams) -> None:
    s = params.shape
    problems = []
    if s.size < 3 or s.size % 2 == 0:
        problems.append(f"size must be odd and >= 3 (got {s.size})")
    if not s.wavelength > 0:
        problems.append(f"wavelength must be > 0 (got {s.wavelength})")
    if not s.sigma > 0:
        problems.append(f"sigma must be > 0 (got {s.sigma})")
    if not s.gamma > 0:
        problems.append(f"gamma must be > 0 (got {s.gamma})")
    if not (0 <= params.theta < 180):
        problems.append(f"theta must lie in [0, 180) degrees (got {_format_degrees(params.theta)})")
    if problems:
        raise SynthesisError("Invalid Gabor parameters: " + "; ".join(problems))


def gabor_value(params: GaborParams, x: float, y: float) -> float:
    """
    Real Gabor response at (x, y).

    exp(-(x'^2 + gamma^2 y'^2) / (2 sigma^2)) * cos(2 pi x' / lambda + psi)
    with x' = x cos(theta) + y sin(theta), y' = -x sin(theta) + y cos(theta).

    Examples:
        >>> gabor_value(make_params(theta=0), 0.0, 0.0)
        1.0
    """
    s = params.shape
    theta = math.radians(float(params.theta))
    psi = math.radians(s.psi)
    xr = x * math.cos(theta) + y * math.sin(theta)
    yr = -x * math.sin(theta) + y * math.cos(theta)
    envelope = math.exp(-(xr * xr + s.gamma * s.gamma * yr * yr) / (2.0 * s.sigma * s.sigma))
    return envelope * math.cos(2.0 * math.pi * xr / s.wavelength + psi)


def sample_gabor(params: GaborParams) -> np.ndarray:
    """Raw samples on the centered integer grid; rows index y, columns index x."""
    half = (params.size - 1) // 2
    coords = range(-half, half + 1)
    return np.array([[gabor_value(params, x, y) for x in coords] for y in coords], dtype=np.float64)


def make_gabor_kernel(params: GaborParams) -> np.ndarray:
    """
    Sample and normalize a Gabor kernel.

    Args:
        params: valid GaborParams

    Returns:
        float64 [size, size] kernel with zero mean and unit L2 norm

    Raises:
        SynthesisError: the sample is (numerically) all zero after centering
    """
    validate_params(params)
    kernel = sample_gabor(params)
    kernel = kernel - kernel.mean()
    norm = float(np.sqrt(np.sum(kernel * kernel)))
    if not np.isfinite(norm) or norm < GABOR_DEGENERATE_NORM:
        raise SynthesisError(f"Degenerate Gabor kernel (all zero after centering) for {params.describe()}")
    kernel = kernel / norm
    kernel.setflags(write=False)
    return kernel


# =============================================================================
# BANKS
# =============================================================================

@dataclass(frozen=True)
class BankEntry:
    key: str
    params: GaborParams
    kernel: np.ndarray = field(repr=False, compare=False)

    @property
    def theta(self) -> Fraction:
        return self.params.theta


def entry_key(params: GaborParams) -> str:
    return f"gabor/{params.shape.signature()}/t={_format_degrees(params.theta)}"


@dataclass(frozen=True)
class KernelBank:
    """Ordered, deduplicated set of fixed kernels. Entries are read-only."""
    entries: tuple = ()

    def __post_init__(self):
        keys = [e.key for e in self.entries]
        if len(set(keys)) != len(keys):
            raise SynthesisError("Kernel bank entries must have distinct keys")

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self) -> Iterator[BankEntry]:
        return iter(self.entries)

    def __getitem__(self, index: int) -> BankEntry:
        return self.entries[index]

    def __contains__(self, key: str) -> bool:
        return any(e.key == key for e in self.entries)

    @property
    def keys(self) -> List[str]:
        return [e.key for e in self.entries]

    @property
    def thetas(self) -> List[Fraction]:
        return [e.theta for e in self.entries]

    @property
    def kernels(self) -> List[np.ndarray]:
        return [e.kernel for e in self.entries]

    def entry(self, key: str) -> BankEntry:
        for e in self.entries:
            if e.key == key:
                return e
        raise SynthesisError(f"Unknown bank entry '{key}'")

    def orientation_subset(self, k: int) -> "KernelBank":
        """Entries whose orientation belongs to the k-bank, in bank order."""
        if k < 1:
            raise ConfigurationError(f"Bank size must be >= 1, got {k}")
        wanted = {Fraction(180 * i, k) for i in range(k)}
        chosen = tuple(e for e in self.entries if e.theta in wanted)
        if len(chosen) != k:
            raise SynthesisError(
                f"A {len(self)}-orientation bank does not contain the {k}-orientation subset"
            )
        return KernelBank(chosen)

    def union(self, other: "KernelBank") -> "KernelBank":
        seen = set(self.keys)
        return KernelBank(self.entries + tuple(e for e in other.entries if e.key not in seen))

    def subset(self, keys: Sequence[str]) -> "KernelBank":
        wanted = set(keys)
        return KernelBank(tuple(e for e in self.entries if e.key in wanted))

    def to_document(self) -> List[Dict[str, Any]]:
        return [
            {
                "key": e.key,
                "theta": _format_degrees(e.theta),
                "size": e.params.size,
                "kernel": e.kernel.tolist(),
            }
            for e in self.entries
        ]


def make_gabor_bank(k: int, size: int = 5, shape: Optional[GaborShape] = None) -> KernelBank:
    """
    Bank of k kernels with thetas[i] = i * 180 / k degrees.

    Args:
        k: number of orientations (>= 1)
        size: kernel extent, used when ``shape`` is None
        shape: shared non-orientation parameters

    Returns:
        KernelBank

    Examples:
        >>> [str(t) for t in make_gabor_bank(6).thetas]
        ['0', '30', '60', '90', '120', '150']
    """
    if k < 1:
        raise ConfigurationError(f"Bank size must be >= 1, got {k}")
    shape = shape or GaborShape.default(size)
    entries = []
    for i in range(k):
        params = GaborParams(theta=Fraction(180 * i, k), shape=shape)
        entries.append(BankEntry(key=entry_key(params), params=params, kernel=make_gabor_kernel(params)))
    return KernelBank(tuple(entries))


def _format_degrees(theta: Fraction) -> str:
    return str(theta)
