"""Energy functionals of a spectral field and analysis of recorded traces.

All quadratic functionals use the cell-mean normalization of
:mod:`hyperns.spectral`: ``E = period**d * sum |u_hat|**2``.  The j-th
derivative energy uses the full multi-index contraction, giving the
spectral weight |xi|**(2j).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np
from scipy import integrate

from .spectral import SpectralField, WavenumberLattice, evaluate_symbol
from .symbols import GrowthFunction

__all__ = [
    "COLUMNS",
    "ESTIMATORS",
    "EnergyTrace",
    "DissipationBudget",
    "energy",
    "dissipation_rate",
    "higher_energy",
    "sobolev_weight",
    "frequency_scale",
    "spectrum_health",
    "resolved_cutoff",
    "time_integral",
    "energy_identity_residual",
    "dissipation_budget",
    "bound_ratio",
    "empirical_constant",
    "fill_ratio",
]

COLUMNS = (
    "t",
    "E",
    "a",
    "E_k",
    "N_sqrt_ratio",
    "N_sobolev",
    "N_centroid",
    "ratio",
    "spectrum_health",
)
ESTIMATORS = ("sqrt_ratio", "sobolev_ratio", "centroid")


def _spectral_density(u: SpectralField) -> np.ndarray:
    """period**d * sum over components of |u_hat|**2, per lattice point."""
    return u.lattice.period**u.lattice.d * np.sum(u.coeffs.real**2 + u.coeffs.imag**2, axis=0)


def energy(u: SpectralField) -> float:
    return float(np.sum(_spectral_density(u)))


def dissipation_rate(u: SpectralField, sym) -> float:
    """a = ||D u||^2 = period**d * sum m(|xi|)**2 |u_hat|**2."""
    m = evaluate_symbol(sym, u.lattice)
    return float(np.sum(m * m * _spectral_density(u)))


def sobolev_weight(lattice: WavenumberLattice, k: int) -> np.ndarray:
    """sum_{j=0}^k |xi|**(2j) on the lattice."""
    if int(k) != k or k < 0:
        raise ValueError(f"Sobolev order must be a non-negative integer, got {k}")
    k2 = lattice.k_squared
    weight = np.ones_like(k2)
    power = np.ones_like(k2)
    for _ in range(int(k)):
        power = power * k2
        weight = weight + power
    return weight


def higher_energy(u: SpectralField, k: int) -> float:
    """E_k = sum_{j<=k} ||grad^j u||^2."""
    return float(np.sum(sobolev_weight(u.lattice, k) * _spectral_density(u)))


def frequency_scale(u: SpectralField, estimator: str = "sqrt_ratio") -> float:
    """Characteristic wavenumber of ``u``.

    sqrt_ratio     (sum |xi|^2 |u_hat|^2 / sum |u_hat|^2) ** 1/2
    sobolev_ratio  (E_1 / E_0 - 1) ** 1/2
    centroid       sum |xi| |u_hat|^2 / sum |u_hat|^2

    These coincide on a field supported on a single shell and differ
    otherwise; none of them is privileged.
    """
    if estimator not in ESTIMATORS:
        raise ValueError(f"unknown estimator {estimator!r}; expected one of {ESTIMATORS}")
    density = _spectral_density(u)
    total = float(np.sum(density))
    if not total > 0:
        raise ValueError("frequency scale is undefined for the zero field")
    if estimator == "sqrt_ratio":
        return float(np.sqrt(np.sum(u.lattice.k_squared * density) / total))
    if estimator == "centroid":
        return float(np.sum(u.lattice.k_norm * density) / total)
    e0 = higher_energy(u, 0)
    e1 = higher_energy(u, 1)
    return float(np.sqrt(max(e1 / e0 - 1.0, 0.0)))


def resolved_cutoff(lattice: WavenumberLattice, dealias: str) -> float:
    """Largest retained integer component: n/3 under two-thirds, else n/2 - 1."""
    if dealias == "two_thirds":
        return lattice.n / 3
    return lattice.n / 2 - 1


def spectrum_health(u: SpectralField, dealias: str = "two_thirds") -> float:
    """Fraction of energy in the top third of the resolved radial spectrum.

    Radial integer wavenumber above (2/3) of the retained cutoff counts as
    the top third.  Zero field reports 0.
    """
    density = _spectral_density(u)
    total = float(np.sum(density))
    if total == 0:
        return 0.0
    kint = u.lattice.k_norm / u.lattice.unit
    top = kint > (2.0 / 3.0) * resolved_cutoff(u.lattice, dealias)
    return float(np.sum(density[top]) / total)


@dataclass
class EnergyTrace:
    """Recorded diagnostics, one row per record point, columns as in COLUMNS."""

    data: np.ndarray

    def __post_init__(self):
        data = np.asarray(self.data, dtype=float)
        if data.size == 0:
            data = data.reshape(0, len(COLUMNS))
        if data.ndim != 2 or data.shape[1] != len(COLUMNS):
            raise ValueError(f"trace data must have shape (rows, {len(COLUMNS)}), got {data.shape}")
        self.data = data

    @classmethod
    def empty(cls) -> "EnergyTrace":
        return cls(np.empty((0, len(COLUMNS))))

    @classmethod
    def from_rows(cls, rows: Sequence[Sequence[float]]) -> "EnergyTrace":
        if len(rows) == 0:
            return cls.empty()
        return cls(np.array(rows, dtype=float))

    def __len__(self) -> int:
        return self.data.shape[0]

    def column(self, name: str) -> np.ndarray:
        return self.data[:, COLUMNS.index(name)]

    t = property(lambda self: self.column("t"))
    E = property(lambda self: self.column("E"))
    a = property(lambda self: self.column("a"))
    E_k = property(lambda self: self.column("E_k"))
    ratio = property(lambda self: self.column("ratio"))
    spectrum_health = property(lambda self: self.column("spectrum_health"))

    def segment(self, start: int, stop: int | None = None) -> "EnergyTrace":
        return EnergyTrace(self.data[start:stop].copy())

    def concat(self, other: "EnergyTrace") -> "EnergyTrace":
        return EnergyTrace(np.vstack([self.data, other.data]))

    def with_column(self, name: str, values: np.ndarray) -> "EnergyTrace":
        data = self.data.copy()
        data[:, COLUMNS.index(name)] = values
        return EnergyTrace(data)

    def validate(self) -> None:
        """Raise if times are not increasing or an energy column is negative."""
        if len(self) > 1 and np.any(np.diff(self.t) <= 0):
            raise ValueError("trace times are not strictly increasing")
        for name in ("E", "a", "E_k"):
            if np.any(self.column(name) < 0):
                raise ValueError(f"trace column {name} has negative entries")


def time_integral(t: np.ndarray, y: np.ndarray, method: str = "simpson") -> float:
    """Quadrature of recorded samples; Simpson falls back to trapezoid for two rows."""
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)
    if t.size < 2:
        raise ValueError("need at least two samples to integrate")
    if method == "trapezoid" or t.size == 2:
        return float(integrate.trapezoid(y, t))
    if method == "simpson":
        return float(integrate.simpson(y, x=t))
    raise ValueError(f"unknown quadrature method {method!r}")


def energy_identity_residual(trace: EnergyTrace, method: str = "simpson") -> float:
    """|E(t2) - E(t1) + 2 int a dt| / E(t1) over the whole segment.

    A zero initial energy yields the absolute residual, which is 0 for the
    zero solution.
    """
    if len(trace) < 2:
        raise ValueError("energy identity residual needs at least two rows")
    E = trace.E
    lost = 2.0 * time_integral(trace.t, trace.a, method)
    resid = abs(E[-1] - E[0] + lost)
    scale = E[0] if E[0] > 0 else 1.0
    return float(resid / scale)


class DissipationBudget(NamedTuple):
    integral: float
    budget: float
    satisfied: bool


def dissipation_budget(trace: EnergyTrace, method: str = "simpson") -> DissipationBudget:
    """(int_0^T a dt, E(0)/2, whether the integral stays within the budget)."""
    if len(trace) == 0:
        raise ValueError("dissipation budget of an empty trace")
    budget = 0.5 * float(trace.E[0])
    integral = 0.0 if len(trace) == 1 else time_integral(trace.t, trace.a, method)
    return DissipationBudget(integral, budget, bool(integral <= budget * (1 + 1e-6)))


def _comparison_rate(E_k: np.ndarray, a: np.ndarray, g: GrowthFunction, q: int) -> np.ndarray:
    return np.asarray(g(1.0 + E_k), dtype=float) ** q * E_k * (1.0 + a)


def bound_ratio(trace: EnergyTrace, g: GrowthFunction, q: int = 4) -> tuple[np.ndarray, float]:
    """Forward-difference growth of E_k against g(1+E_k)**q E_k (1+a).

    Returns the per-interval series (indexed by the left row) and its
    supremum.  Negative entries mean E_k decreased over that interval.
    """
    if len(trace) < 2:
        raise ValueError("bound ratio needs at least two rows")
    t, Ek, a = trace.t, trace.E_k, trace.a
    dt = np.diff(t)
    if np.any(dt <= 0) or not np.all(np.isfinite(dt)):
        raise ValueError("degenerate time step between trace rows")
    if np.any(Ek[:-1] <= 0):
        raise ValueError("bound ratio needs E_k > 0 on the segment")
    series = (np.diff(Ek) / dt) / _comparison_rate(Ek[:-1], a[:-1], g, q)
    if not np.all(np.isfinite(series)):
        raise ValueError("bound ratio is not finite")
    return series, float(np.max(series))


def empirical_constant(trace: EnergyTrace, g: GrowthFunction, q: int = 4) -> float:
    """Positive part of the supremum bound ratio."""
    _, sup = bound_ratio(trace, g, q)
    return max(sup, 0.0)


def fill_ratio(trace: EnergyTrace, g: GrowthFunction | None, q: int = 4) -> EnergyTrace:
    """Populate the ratio column; the last row and zero-E_k rows stay NaN."""
    ratio = np.full(len(trace), np.nan)
    if g is not None and len(trace) >= 2:
        Ek = trace.E_k
        dt = np.diff(trace.t)
        with np.errstate(divide="ignore", invalid="ignore"):
            series = (np.diff(Ek) / dt) / _comparison_rate(Ek[:-1], trace.a[:-1], g, q)
        ratio[:-1] = np.where(Ek[:-1] > 0, series, np.nan)
    return trace.with_column("ratio", ratio)
