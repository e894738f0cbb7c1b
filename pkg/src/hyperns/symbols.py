"""Dissipation symbols m(|xi|) and growth functions g(s).

A symbol is any non-negative radial function; the equation dissipates via
D^2 with D the Fourier multiplier of symbol m.  The critical exponent
(d+2)/4 separates subcritical power laws from supercritical ones, and the
log-supercritical symbol

    m(r) = r**((d+2)/4) / log(2 + r**2)**(1/4)

sits just below criticality.  Growth functions quantify the loss:
m(r) >= r**((d+2)/4) / g(r) at large r.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

__all__ = [
    "DissipationSymbol",
    "GrowthFunction",
    "LowerBoundReport",
    "critical_exponent",
    "symbol_zero",
    "symbol_navier_stokes",
    "symbol_hyper",
    "symbol_critical",
    "symbol_log_supercritical",
    "symbol_custom",
    "parse_symbol",
    "growth_from_family",
    "parse_growth",
    "check_lower_bound",
    "default_radii",
]

OUTSIDE_REGIME = "outside the regularity regime (needs d >= 3)"


def critical_exponent(d: int) -> float:
    return (d + 2) / 4


def log_two_plus_square(s):
    """log(2 + s**2) without overflowing for huge s."""
    s = np.abs(np.asarray(s, dtype=float))
    big = s > 1e100
    with np.errstate(over="ignore", divide="ignore"):
        small_val = np.log(2.0 + np.where(big, 0.0, s) ** 2)
        big_val = 2.0 * np.log(np.where(big, s, 1.0)) + np.log1p(2.0 / np.where(big, s, 1.0) ** 2)
    return np.where(big, big_val, small_val)


@dataclass(frozen=True, eq=False)
class DissipationSymbol:
    """Radial symbol with its family tag, parameters and dimension."""

    family: str
    d: int
    evaluator: Callable[[np.ndarray], np.ndarray] = field(repr=False)
    params: tuple = ()

    def __call__(self, r):
        out = self.evaluator(np.asarray(r, dtype=float))
        return float(out) if np.ndim(out) == 0 else out

    @property
    def exponent(self) -> Optional[float]:
        """Leading power of r, when the family has one."""
        if self.family == "navier_stokes":
            return 1.0
        if self.family in ("hyper", "critical"):
            return self.params[0]
        if self.family == "log_supercritical":
            return critical_exponent(self.d)
        return None

    @property
    def is_critical(self) -> bool:
        return self.family == "critical"

    @property
    def regime(self) -> str:
        """subcritical, critical, supercritical, log_supercritical or unknown."""
        if self.family == "log_supercritical":
            return "log_supercritical"
        if self.family == "zero":
            return "supercritical"
        alpha = self.exponent
        if alpha is None:
            return "unknown"
        crit = critical_exponent(self.d)
        if alpha == crit:
            return "critical"
        return "subcritical" if alpha > crit else "supercritical"

    @property
    def in_regularity_dimension(self) -> bool:
        return self.d >= 3

    def name(self) -> str:
        """Config-file spelling of this symbol."""
        if self.family == "hyper":
            return f"hyper:{self.params[0]!r}"
        return self.family

    def squared(self, r):
        m = self.evaluator(np.asarray(r, dtype=float))
        return m * m


def _check_d(d: int) -> int:
    if int(d) != d or d < 1:
        raise ValueError(f"dimension must be a positive integer, got {d}")
    return int(d)


def symbol_zero(d: int = 3) -> DissipationSymbol:
    """m = 0: the Euler system."""
    return DissipationSymbol("zero", _check_d(d), lambda r: np.zeros_like(r))


def symbol_navier_stokes(d: int = 3) -> DissipationSymbol:
    return DissipationSymbol("navier_stokes", _check_d(d), lambda r: r * 1.0)


def symbol_hyper(alpha: float, d: int = 3) -> DissipationSymbol:
    """m(r) = r**alpha; tagged ``critical`` when alpha == (d+2)/4 exactly."""
    d = _check_d(d)
    alpha = float(alpha)
    if not alpha > 0 or not math.isfinite(alpha):
        raise ValueError(f"hyperdissipation exponent must be positive, got {alpha}")
    family = "critical" if alpha == critical_exponent(d) else "hyper"
    return DissipationSymbol(family, d, lambda r: r**alpha, (alpha,))


def symbol_critical(d: int = 3) -> DissipationSymbol:
    return symbol_hyper(critical_exponent(d), d)


def symbol_log_supercritical(d: int = 3) -> DissipationSymbol:
    """m(r) = r**((d+2)/4) * log(2 + r**2)**(-1/4)."""
    d = _check_d(d)
    if d not in (2, 3):
        raise ValueError(f"log-supercritical symbol supports d in {{2, 3}}, got {d}")
    alpha = critical_exponent(d)

    def m(r):
        return r**alpha / log_two_plus_square(r) ** 0.25

    return DissipationSymbol("log_supercritical", d, m, (alpha,))


def symbol_custom(evaluator: Callable, d: int = 3, params: tuple = ()) -> DissipationSymbol:
    return DissipationSymbol("custom", _check_d(d), evaluator, tuple(params))


def parse_symbol(text: str, d: int) -> DissipationSymbol:
    """Build a symbol from its config spelling, e.g. ``"hyper:1.25"``."""
    name, _, arg = text.strip().partition(":")
    if name == "hyper":
        if not arg:
            raise ValueError("symbol 'hyper' needs an exponent, e.g. 'hyper:1.25'")
        try:
            alpha = float(arg)
        except ValueError:
            raise ValueError(f"bad hyper exponent {arg!r}") from None
        return symbol_hyper(alpha, d)
    if arg:
        raise ValueError(f"symbol {name!r} takes no parameter")
    builders = {
        "zero": symbol_zero,
        "navier_stokes": symbol_navier_stokes,
        "critical": symbol_critical,
        "log_supercritical": symbol_log_supercritical,
    }
    if name not in builders:
        raise ValueError(
            f"unknown symbol {name!r}; expected one of "
            "zero, navier_stokes, hyper:<alpha>, critical, log_supercritical"
        )
    return builders[name](d)


@dataclass(frozen=True, eq=False)
class GrowthFunction:
    """Positive non-decreasing g(s) on s >= 0."""

    family: str
    evaluator: Callable[[np.ndarray], np.ndarray] = field(repr=False)
    params: tuple = ()

    def __call__(self, s):
        out = self.evaluator(np.asarray(s, dtype=float))
        return float(out) if np.ndim(out) == 0 else out

    def name(self) -> str:
        if self.params and self.family in ("power", "log_power"):
            return f"{self.family}:{self.params[0]!r}"
        return self.family


def growth_from_family(family: str, *params, evaluator: Callable | None = None) -> GrowthFunction:
    """Growth function by family name.

    ``one``          g = 1
    ``power``        g = max(1, s)**eps
    ``log_quarter``  g = log(2 + s**2)**(1/4)
    ``log_power``    g = max(1, log(2 + s**2)**beta)
    ``custom``       caller-supplied evaluator

    The power and log_power families are floored at 1 so that g stays
    strictly positive at s = 0; nothing changes for s >= 1 (power) or once
    log(2 + s**2) >= 1 (log_power).
    """
    if family == "custom":
        if evaluator is None:
            raise ValueError("custom growth function needs an evaluator")
        return GrowthFunction("custom", evaluator, tuple(params))
    if evaluator is not None:
        raise ValueError("evaluator is only accepted for the custom family")
    if family == "one":
        _no_params(family, params)
        return GrowthFunction("one", lambda s: np.ones_like(s))
    if family == "log_quarter":
        _no_params(family, params)
        return GrowthFunction("log_quarter", lambda s: log_two_plus_square(s) ** 0.25)
    if family == "power":
        eps = _one_positive(family, params)
        return GrowthFunction("power", lambda s: np.maximum(s, 1.0) ** eps, (eps,))
    if family == "log_power":
        beta = _one_positive(family, params)
        return GrowthFunction(
            "log_power", lambda s: np.maximum(1.0, log_two_plus_square(s) ** beta), (beta,)
        )
    raise ValueError(
        f"unknown growth family {family!r}; expected one, power, log_quarter, log_power, custom"
    )


def _no_params(family, params):
    if params:
        raise ValueError(f"growth family {family!r} takes no parameters")


def _one_positive(family, params) -> float:
    if len(params) != 1:
        raise ValueError(f"growth family {family!r} takes exactly one parameter")
    value = float(params[0])
    if not (value > 0 and math.isfinite(value)):
        raise ValueError(f"growth family {family!r} needs a positive parameter, got {value}")
    return value


def parse_growth(text: str) -> GrowthFunction:
    """Config spelling such as ``"power:0.25"`` or ``"log_quarter"``."""
    name, _, arg = text.strip().partition(":")
    if not arg:
        return growth_from_family(name)
    try:
        value = float(arg)
    except ValueError:
        raise ValueError(f"bad growth parameter {arg!r}") from None
    return growth_from_family(name, value)


def default_radii(num: int = 301) -> np.ndarray:
    """Geometric sample of r in [2**-10, 2**20]."""
    return np.geomspace(2.0**-10, 2.0**20, num)


@dataclass
class LowerBoundReport:
    """Outcome of sampling m(r) * g(r) / r**((d+2)/4) against 1."""

    radii: np.ndarray
    ratios: np.ndarray
    holds: np.ndarray
    threshold: Optional[float]
    worst_ratio: float
    worst_radius: float
    d: int
    notes: list = field(default_factory=list)

    @property
    def holds_everywhere(self) -> bool:
        return bool(np.all(self.holds))

    @property
    def violated(self) -> bool:
        """True when the bound fails at the largest sampled radius."""
        return self.threshold is None

    @property
    def violation_radii(self) -> np.ndarray:
        return self.radii[~self.holds]


def check_lower_bound(
    sym: DissipationSymbol,
    g: GrowthFunction,
    d: Optional[int] = None,
    r_range: Optional[np.ndarray] = None,
    rtol: float = 1e-12,
) -> LowerBoundReport:
    """Sample m(r) >= r**((d+2)/4) / g(r) on a geometric grid.

    ``threshold`` is the smallest sampled r0 such that the bound holds at
    every sample r >= r0, or None if it fails at the top of the grid.
    """
    d = sym.d if d is None else int(d)
    r = default_radii() if r_range is None else np.asarray(r_range, dtype=float)
    if r.ndim != 1 or r.size < 100:
        raise ValueError("r_range must be a 1-D grid of at least 100 points")
    if np.any(r <= 0) or np.any(np.diff(r) <= 0):
        raise ValueError("r_range must be positive and increasing")
    m = np.asarray(sym(r), dtype=float)
    ratios = m * np.asarray(g(r), dtype=float) / r ** critical_exponent(d)
    holds = ratios >= 1.0 - rtol

    threshold = None
    if holds[-1]:
        failing = np.nonzero(~holds)[0]
        threshold = float(r[0] if failing.size == 0 else r[failing[-1] + 1])
    worst = int(np.argmin(ratios))
    notes = [] if d >= 3 else [OUTSIDE_REGIME]
    return LowerBoundReport(
        radii=r,
        ratios=ratios,
        holds=holds,
        threshold=threshold,
        worst_ratio=float(ratios[worst]),
        worst_radius=float(r[worst]),
        d=d,
        notes=notes,
    )
