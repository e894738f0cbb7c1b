"""Fourier representation of vector fields on the periodic box [0, period)^d.

Normalization: coefficients are cell means,

    u_hat(xi) = period**-d * integral u(x) exp(-i xi.x) dx = fftn(u) / n**d,

so that the L2 energy is ``period**d * sum |u_hat|**2`` (Plancherel).

Wavenumbers are stored in FFT index order.  Integer components run over
{-n/2+1, ..., n/2}; the unpaired Nyquist row (any component equal to n/2)
is zeroed whenever a :class:`SpectralField` is built, so every stored
field has exact Hermitian pairing.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass
from functools import cached_property
from typing import Callable, Union

import numpy as np
import scipy.fft

__all__ = [
    "WavenumberLattice",
    "SpectralField",
    "make_lattice",
    "forward_transform",
    "inverse_transform",
    "leray_project",
    "apply_multiplier",
    "lp_low",
    "lp_high",
    "fft_workers",
]


def fft_workers() -> int:
    """Worker count for FFTs, capped by ``HN_THREADS`` when set."""
    raw = os.environ.get("HN_THREADS")
    if not raw:
        return 1
    try:
        value = int(raw)
    except ValueError:
        raise ValueError(f"HN_THREADS must be a positive integer, got {raw!r}") from None
    if value < 1:
        raise ValueError(f"HN_THREADS must be a positive integer, got {raw!r}")
    return value


@dataclass(frozen=True, eq=False)
class WavenumberLattice:
    """Integer wavenumber lattice of a d-torus with ``n`` modes per axis."""

    d: int
    n: int
    period: float = 2 * math.pi

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.n,) * self.d

    @property
    def size(self) -> int:
        return self.n**self.d

    @property
    def unit(self) -> float:
        """Smallest nonzero wavenumber magnitude, 2*pi/period."""
        return 2 * math.pi / self.period

    @cached_property
    def integer_modes(self) -> np.ndarray:
        """1-D integer wavenumbers in FFT order, Nyquist stored as +n/2."""
        k = np.fft.fftfreq(self.n, d=1.0 / self.n)
        k[self.n // 2] = self.n // 2
        return k.astype(np.int64)

    @cached_property
    def wavevectors(self) -> np.ndarray:
        """Array of shape (d, n, ..., n) with the scaled components of xi."""
        k = self.integer_modes * self.unit
        grids = np.meshgrid(*([k] * self.d), indexing="ij")
        out = np.stack(grids)
        out.setflags(write=False)
        return out

    @cached_property
    def k_squared(self) -> np.ndarray:
        out = np.sum(self.wavevectors**2, axis=0)
        out.setflags(write=False)
        return out

    @cached_property
    def k_norm(self) -> np.ndarray:
        out = np.sqrt(self.k_squared)
        out.setflags(write=False)
        return out

    @cached_property
    def nyquist_mask(self) -> np.ndarray:
        """True on every lattice point with some component at +n/2."""
        on_row = self.integer_modes == self.n // 2
        grids = np.meshgrid(*([on_row] * self.d), indexing="ij")
        out = np.logical_or.reduce(grids)
        out.setflags(write=False)
        return out

    @cached_property
    def max_component(self) -> np.ndarray:
        """max_i |k_i| in integer units, used by truncation rules."""
        ak = np.abs(self.integer_modes)
        grids = np.meshgrid(*([ak] * self.d), indexing="ij")
        out = np.maximum.reduce(grids)
        out.setflags(write=False)
        return out

    @cached_property
    def negation_index(self) -> tuple[np.ndarray, ...]:
        """Index tuple mapping each lattice point to its negative (mod n)."""
        neg = (-np.arange(self.n)) % self.n
        return np.ix_(*([neg] * self.d))

    def grid(self) -> np.ndarray:
        """Physical sample points, shape (d, n, ..., n)."""
        x = np.arange(self.n) * (self.period / self.n)
        return np.stack(np.meshgrid(*([x] * self.d), indexing="ij"))

    def cell_volume(self) -> float:
        return (self.period / self.n) ** self.d

    def compatible(self, other: "WavenumberLattice") -> bool:
        return self.d == other.d and self.n == other.n and self.period == other.period

    def __repr__(self) -> str:
        return f"WavenumberLattice(d={self.d}, n={self.n}, period={self.period!r})"


def make_lattice(d: int, n: int, period: float = 2 * math.pi) -> WavenumberLattice:
    if d not in (2, 3):
        raise ValueError(f"unsupported dimension d={d}; expected 2 or 3")
    if int(n) != n or n % 2:
        raise ValueError(f"modes per dimension must be even, got n={n}")
    if not 8 <= n <= 1024:
        raise ValueError(f"modes per dimension must lie in [8, 1024], got n={n}")
    if not (period > 0 and math.isfinite(period)):
        raise ValueError(f"period must be positive and finite, got {period}")
    return WavenumberLattice(d=int(d), n=int(n), period=float(period))


@dataclass(frozen=True, eq=False)
class SpectralField:
    """Vector field as read-only Fourier coefficients, shape (d, n, ..., n)."""

    lattice: WavenumberLattice
    coeffs: np.ndarray
    divergence_free: bool = False

    def __post_init__(self):
        lat = self.lattice
        c = np.array(self.coeffs, dtype=np.complex128, copy=True)
        if c.shape != (lat.d,) + lat.shape:
            raise ValueError(
                f"coefficient array has shape {c.shape}, expected {(lat.d,) + lat.shape}"
            )
        c[:, lat.nyquist_mask] = 0.0
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)

    @classmethod
    def zeros(cls, lattice: WavenumberLattice) -> "SpectralField":
        return cls(lattice, np.zeros((lattice.d,) + lattice.shape, complex), True)

    def replace(self, coeffs: np.ndarray, divergence_free: bool | None = None) -> "SpectralField":
        flag = self.divergence_free if divergence_free is None else divergence_free
        return SpectralField(self.lattice, coeffs, flag)

    def norm(self) -> float:
        """Euclidean norm of the coefficient vector."""
        return float(np.sqrt(np.sum(np.abs(self.coeffs) ** 2)))

    def divergence_error(self) -> float:
        """max |xi . u_hat(xi)| over the lattice."""
        div = np.sum(self.lattice.wavevectors * self.coeffs, axis=0)
        return float(np.max(np.abs(div)))

    def hermitian_error(self) -> float:
        """max |u_hat(-xi) - conj(u_hat(xi))| over paired wavevectors."""
        flipped = self.coeffs[(slice(None),) + self.lattice.negation_index]
        return float(np.max(np.abs(flipped - np.conj(self.coeffs))))

    def __add__(self, other: "SpectralField") -> "SpectralField":
        _check_same_lattice(self, other)
        return SpectralField(
            self.lattice, self.coeffs + other.coeffs, self.divergence_free and other.divergence_free
        )

    def __mul__(self, scalar: float) -> "SpectralField":
        return SpectralField(self.lattice, self.coeffs * scalar, self.divergence_free)

    __rmul__ = __mul__


def _check_same_lattice(a: SpectralField, b: SpectralField) -> None:
    if not a.lattice.compatible(b.lattice):
        raise ValueError(f"lattice mismatch: {a.lattice!r} vs {b.lattice!r}")


def forward_transform(
    samples: np.ndarray, lattice: WavenumberLattice, divergence_free: bool = False
) -> SpectralField:
    """Physical samples of shape (d, n, ..., n) to a :class:`SpectralField`.

    Content on the Nyquist rows is discarded, so the round trip is exact
    only for fields representable on the paired lattice.
    """
    samples = np.asarray(samples)
    if samples.shape != (lattice.d,) + lattice.shape:
        raise ValueError(
            f"sample array has shape {samples.shape}, expected {(lattice.d,) + lattice.shape}"
        )
    axes = tuple(range(1, lattice.d + 1))
    coeffs = scipy.fft.fftn(samples, axes=axes, workers=fft_workers()) / lattice.size
    return SpectralField(lattice, coeffs, divergence_free)


def inverse_transform(f: SpectralField, keep_imag: bool = False) -> np.ndarray:
    """Physical samples of ``f``; the imaginary part is dropped unless asked for."""
    lat = f.lattice
    axes = tuple(range(1, lat.d + 1))
    out = scipy.fft.ifftn(f.coeffs, axes=axes, workers=fft_workers()) * lat.size
    return out if keep_imag else out.real


def _leray(coeffs: np.ndarray, lattice: WavenumberLattice) -> np.ndarray:
    xi = lattice.wavevectors
    k2 = lattice.k_squared
    safe = np.where(k2 == 0, 1.0, k2)
    longitudinal = np.sum(xi * coeffs, axis=0) / safe
    return coeffs - xi * longitudinal


def leray_project(f: SpectralField) -> SpectralField:
    """Remove the gradient part: u_hat - xi (xi.u_hat) / |xi|^2, mean mode untouched."""
    return SpectralField(f.lattice, _leray(f.coeffs, f.lattice), True)


SymbolLike = Union[Callable[[np.ndarray], np.ndarray], float, int]


def evaluate_symbol(sym: SymbolLike, lattice: WavenumberLattice) -> np.ndarray:
    """Radial symbol evaluated on |xi| for every lattice point, validated."""
    r = lattice.k_norm
    if callable(sym):
        values = np.asarray(sym(r), dtype=float)
        values = np.broadcast_to(values, r.shape)
    else:
        values = np.full(r.shape, float(sym))
    if not np.all(np.isfinite(values)):
        raise ValueError("symbol is not finite on the lattice")
    if np.any(values < 0):
        raise ValueError("symbol takes negative values on the lattice")
    return values


def apply_multiplier(sym: SymbolLike, f: SpectralField) -> SpectralField:
    """Scale every mode by the real radial symbol ``sym(|xi|)``."""
    values = evaluate_symbol(sym, f.lattice)
    return SpectralField(f.lattice, f.coeffs * values, f.divergence_free)


def low_mask(lattice: WavenumberLattice, cutoff: float) -> np.ndarray:
    if not cutoff > 0:
        raise ValueError(f"cutoff must be positive, got {cutoff}")
    return lattice.k_norm <= cutoff


def lp_low(cutoff: float, f: SpectralField) -> SpectralField:
    """Sharp projection onto |xi| <= cutoff (boundary shell kept)."""
    mask = low_mask(f.lattice, cutoff)
    return SpectralField(f.lattice, np.where(mask, f.coeffs, 0.0), f.divergence_free)


def lp_high(cutoff: float, f: SpectralField) -> SpectralField:
    """Sharp projection onto |xi| > cutoff."""
    mask = low_mask(f.lattice, cutoff)
    return SpectralField(f.lattice, np.where(mask, 0.0, f.coeffs), f.divergence_free)
