"""Pseudo-spectral time stepping for du/dt + (u.grad)u = -D^2 u - grad p.

The pressure is never formed: the advection term is Leray-projected in
Fourier space.  The stiff linear part -m(|xi|)^2 is integrated exactly with
an integrating factor, and the projected advection is advanced with the
classical four-stage Runge-Kutta scheme in the transformed variable
(Lawson RK4).  With the advection switched off each step is the exact
per-mode decay exp(-m^2 dt).
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
import scipy.fft

from . import diagnostics as diag
from .spectral import (
    SpectralField,
    WavenumberLattice,
    _leray,
    evaluate_symbol,
    fft_workers,
    forward_transform,
    leray_project,
    make_lattice,
)
from .symbols import DissipationSymbol, GrowthFunction, critical_exponent, growth_from_family

__all__ = [
    "DEALIAS_RULES",
    "SimConfig",
    "SolverState",
    "RunResult",
    "NumericalFailure",
    "Stepper",
    "natural_growth",
    "dealias_mask",
    "nonlinear_term",
    "step",
    "run",
    "make_initial_data",
]

log = logging.getLogger(__name__)

DEALIAS_RULES = ("two_thirds", "none")
REACHED_T_END = "reached_t_end"
BLOWUP = "blowup_threshold_exceeded"
NUMERICAL_FAILURE = "numerical_failure"
HEALTH_LIMIT = 0.2
DIVERGENCE_TOL = 1e-10


def natural_growth(sym: DissipationSymbol) -> Optional[GrowthFunction]:
    """The growth function g with m(r) >= r**((d+2)/4) / g(r), when one is known."""
    if sym.family == "log_supercritical":
        return growth_from_family("log_quarter")
    alpha = sym.exponent
    if alpha is None:
        return growth_from_family("one")
    gap = critical_exponent(sym.d) - alpha
    return growth_from_family("one") if gap <= 0 else growth_from_family("power", gap)


@dataclass(frozen=True)
class SimConfig:
    d: int
    n: int
    dt: float
    t_end: float
    symbol: DissipationSymbol
    period: float = 2 * math.pi
    dealias: str = "two_thirds"
    k: int = 3
    record_every: int = 10
    blowup_threshold: float = 1e12
    nonlinear: bool = True
    growth: Optional[GrowthFunction] = None
    q: int = 4

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if not self.t_end > 0:
            raise ValueError(f"t_end must be positive, got {self.t_end}")
        if int(self.k) != self.k or self.k < 1:
            raise ValueError(f"Sobolev order k must be an integer >= 1, got {self.k}")
        if int(self.record_every) != self.record_every or self.record_every < 1:
            raise ValueError(f"record_every must be a positive integer, got {self.record_every}")
        if not self.blowup_threshold > 0:
            raise ValueError(f"blowup_threshold must be positive, got {self.blowup_threshold}")
        if self.dealias not in DEALIAS_RULES:
            raise ValueError(f"unknown dealias rule {self.dealias!r}; expected {DEALIAS_RULES}")
        if self.q not in (2, 4):
            raise ValueError(f"q must be 2 or 4, got {self.q}")
        if self.symbol.d != self.d:
            raise ValueError(f"symbol built for d={self.symbol.d}, config has d={self.d}")
        make_lattice(self.d, self.n, self.period)

    @property
    def n_steps(self) -> int:
        return int(math.ceil(self.t_end / self.dt - 1e-9))

    @property
    def growth_function(self) -> Optional[GrowthFunction]:
        return self.growth if self.growth is not None else natural_growth(self.symbol)

    def lattice(self) -> WavenumberLattice:
        return make_lattice(self.d, self.n, self.period)


@dataclass(frozen=True)
class SolverState:
    t: float
    u: SpectralField
    step_count: int = 0


class NumericalFailure(RuntimeError):
    """Non-finite or non-solenoidal coefficients; carries the last good state."""

    def __init__(self, message: str, snapshot: SolverState):
        super().__init__(message)
        self.snapshot = snapshot


def dealias_mask(lattice: WavenumberLattice, rule: str) -> np.ndarray:
    """Retained modes: |xi_i| <= (2/3) * (pi n / period) for every i under two_thirds."""
    if rule == "two_thirds":
        return lattice.max_component <= lattice.n / 3
    if rule == "none":
        return ~lattice.nyquist_mask
    raise ValueError(f"unknown dealias rule {rule!r}; expected {DEALIAS_RULES}")


class _HalfSpectrum:
    """Real-FFT view of a lattice: last axis truncated to 0..n/2."""

    def __init__(self, lattice: WavenumberLattice):
        n, d = lattice.n, lattice.d
        self.lattice = lattice
        self.cut = (Ellipsis, slice(0, n // 2 + 1))
        self.xi = np.ascontiguousarray(lattice.wavevectors[self.cut])
        self.k2 = lattice.k_squared[self.cut]
        neg = (-np.arange(n)) % n
        # negate every axis but the last; the last is handled by reversal
        self.neg_index = (slice(None),) + np.ix_(*([neg] * (d - 1))) + (slice(n // 2 - 1, 0, -1),)

    def to_full(self, half: np.ndarray) -> np.ndarray:
        n = self.lattice.n
        full = np.empty(half.shape[:-1] + (n,), dtype=np.complex128)
        full[..., : n // 2 + 1] = half
        full[..., n // 2 + 1 :] = np.conj(half[self.neg_index])
        return full


_HALF_CACHE: dict = {}


def _half(lattice: WavenumberLattice) -> _HalfSpectrum:
    key = (lattice.d, lattice.n, lattice.period)
    if key not in _HALF_CACHE:
        _HALF_CACHE[key] = _HalfSpectrum(lattice)
    return _HALF_CACHE[key]


def _advection(coeffs: np.ndarray, lattice: WavenumberLattice, mask: np.ndarray) -> np.ndarray:
    """-P[mask * F((u.grad)u)] from full coefficient arrays.

    Products are formed in physical space through real FFTs, so the result
    is exactly Hermitian.
    """
    d = lattice.d
    hs = _half(lattice)
    axes = tuple(range(1, d + 1))
    workers = fft_workers()
    c = coeffs[hs.cut]
    # rows 0..d-1: u_i; then d*d rows of d_j u_i (j-major)
    stack = np.empty((d + d * d,) + c.shape[1:], dtype=np.complex128)
    stack[:d] = c
    for j in range(d):
        stack[d + j * d : d + (j + 1) * d] = 1j * hs.xi[j] * c
    phys = scipy.fft.irfftn(stack, s=lattice.shape, axes=axes, workers=workers)
    phys *= lattice.size
    u = phys[:d]
    adv = u[0] * phys[d : 2 * d]
    for j in range(1, d):
        adv += u[j] * phys[d + j * d : d + (j + 1) * d]
    hat = scipy.fft.rfftn(adv, axes=axes, workers=workers)
    hat *= mask[hs.cut] / lattice.size
    safe = np.where(hs.k2 == 0, 1.0, hs.k2)
    hat -= hs.xi * (np.sum(hs.xi * hat, axis=0) / safe)
    hat[(slice(None),) + (0,) * d] = 0.0
    return -hs.to_full(hat)


def nonlinear_term(u: SpectralField, dealias: str = "two_thirds") -> SpectralField:
    """Spectral image of -P[(u.grad)u], dealiased and mean-free."""
    if not u.divergence_free:
        raise ValueError("nonlinear_term requires a divergence-free field")
    mask = dealias_mask(u.lattice, dealias)
    return SpectralField(u.lattice, _advection(u.coeffs, u.lattice, mask), True)


class Stepper:
    """Precomputed integrating factors and masks for one configuration."""

    def __init__(self, cfg: SimConfig, lattice: Optional[WavenumberLattice] = None):
        self.cfg = cfg
        self.lattice = lattice if lattice is not None else cfg.lattice()
        m = evaluate_symbol(cfg.symbol, self.lattice)
        self.rate = m * m
        with np.errstate(under="ignore"):
            self.decay = np.exp(-self.rate * cfg.dt)
            self.half_decay = np.exp(-self.rate * (0.5 * cfg.dt))
        self.mask = dealias_mask(self.lattice, cfg.dealias)
        self.weight_k = diag.sobolev_weight(self.lattice, cfg.k)
        self.scale = self.lattice.period**self.lattice.d

    def rhs(self, coeffs: np.ndarray) -> np.ndarray:
        return _advection(coeffs, self.lattice, self.mask)

    def advance(self, c: np.ndarray) -> np.ndarray:
        """One Lawson RK4 step on raw coefficients."""
        dt = self.cfg.dt
        E, Eh = self.decay, self.half_decay
        if not self.cfg.nonlinear:
            return E * c
        k1 = self.rhs(c)
        k2 = self.rhs(Eh * (c + (0.5 * dt) * k1))
        k3 = self.rhs(Eh * c + (0.5 * dt) * k2)
        k4 = self.rhs(E * c + dt * (Eh * k3))
        out = E * c + (dt / 6.0) * (E * k1 + 2.0 * Eh * (k2 + k3) + k4)
        return _leray(out, self.lattice)

    def check(self, c: np.ndarray, previous: SolverState) -> None:
        if not np.all(np.isfinite(c)):
            raise NumericalFailure(
                f"non-finite coefficients after step {previous.step_count + 1}", previous
            )
        div = np.max(np.abs(np.sum(self.lattice.wavevectors * c, axis=0)))
        norm = np.sqrt(np.sum(c.real**2 + c.imag**2))
        if div > DIVERGENCE_TOL * norm:
            raise NumericalFailure(
                f"divergence {div:.3e} exceeds tolerance at step {previous.step_count + 1}",
                previous,
            )

    def higher_energy(self, c: np.ndarray) -> float:
        return float(self.scale * np.sum(self.weight_k * np.sum(c.real**2 + c.imag**2, axis=0)))

    def make_state(self, c: np.ndarray, step_count: int) -> SolverState:
        return SolverState(step_count * self.cfg.dt, SpectralField(self.lattice, c, True), step_count)

    def step(self, state: SolverState) -> SolverState:
        c = self.advance(np.asarray(state.u.coeffs))
        self.check(c, state)
        return self.make_state(c, state.step_count + 1)


def step(state: SolverState, cfg: SimConfig) -> SolverState:
    """Advance ``state`` by ``cfg.dt``."""
    return Stepper(cfg, state.u.lattice).step(state)


@dataclass
class RunResult:
    state: SolverState
    trace: diag.EnergyTrace
    reason: str
    detail: str = ""
    failure: Optional[NumericalFailure] = field(default=None, repr=False)

    def __iter__(self):
        return iter((self.state, self.trace))


def trace_row(u: SpectralField, t: float, cfg: SimConfig) -> list[float]:
    """One trace row; the ratio column is filled after the run."""
    E = diag.energy(u)
    if E > 0:
        scales = [diag.frequency_scale(u, est) for est in diag.ESTIMATORS]
    else:
        scales = [math.nan] * 3
    return [
        t,
        E,
        diag.dissipation_rate(u, cfg.symbol),
        diag.higher_energy(u, cfg.k),
        *scales,
        math.nan,
        diag.spectrum_health(u, cfg.dealias),
    ]


def run(
    cfg: SimConfig,
    u0: Optional[SpectralField] = None,
    start: Optional[SolverState] = None,
    on_row: Optional[Callable[[list], None]] = None,
) -> RunResult:
    """Integrate from ``u0`` (or resume from ``start``) up to ``cfg.t_end``.

    Rows are recorded at step counts divisible by ``record_every`` and at
    the final step.  A resumed run does not repeat the row of its starting
    state, so traces of a split run concatenate to the uninterrupted one
    when the split falls on the record cadence.
    """
    if (u0 is None) == (start is None):
        raise ValueError("pass exactly one of u0 or start")
    if start is None:
        if not u0.divergence_free:
            raise ValueError("initial data must be flagged divergence-free")
        state = SolverState(0.0, u0, 0)
    else:
        state = start
    lattice = state.u.lattice
    if not lattice.compatible(cfg.lattice()):
        raise ValueError(f"initial data lattice {lattice!r} does not match config")
    stepper = Stepper(cfg, lattice)
    rows: list[list[float]] = []

    def record(s: SolverState) -> None:
        row = trace_row(s.u, s.t, cfg)
        rows.append(row)
        if on_row is not None:
            on_row(row)

    if start is None:
        record(state)

    reason, detail, failure = REACHED_T_END, "", None
    c = np.array(state.u.coeffs)
    total = cfg.n_steps
    while state.step_count < total:
        try:
            c = stepper.advance(c)
            stepper.check(c, state)
        except NumericalFailure as exc:
            reason, detail, failure = NUMERICAL_FAILURE, str(exc), exc
            log.error("numerical failure: %s", exc)
            break
        count = state.step_count + 1
        state = stepper.make_state(c, count)
        Ek = stepper.higher_energy(c)
        blowup = ""
        if Ek > cfg.blowup_threshold:
            blowup = f"E_k={Ek:.6e} exceeds blowup_threshold={cfg.blowup_threshold:.6e}"
        else:
            health = diag.spectrum_health(state.u, cfg.dealias)
            if health > HEALTH_LIMIT:
                blowup = f"resolution exhausted: top-third energy fraction {health:.3f}"
        if count % cfg.record_every == 0 or count == total or blowup:
            record(state)
        if blowup:
            reason, detail = BLOWUP, blowup
            log.warning("run stopped at t=%g: %s", state.t, blowup)
            break

    trace = diag.fill_ratio(diag.EnergyTrace.from_rows(rows), cfg.growth_function, cfg.q)
    return RunResult(state, trace, reason, detail, failure)


# --- initial data -----------------------------------------------------------

INITIAL_KINDS = ("taylor_green_2d", "single_mode", "random_band", "bump_approx")


def make_initial_data(kind: str, lattice: WavenumberLattice, **params) -> SpectralField:
    """Divergence-free, real initial velocity on ``lattice``.

    taylor_green_2d  amplitude
    single_mode      wavevector (integer tuple), polarization, amplitude
    random_band      k_min, k_max (integer radial band), amplitude (rms speed), seed
    bump_approx      width, amplitude, center (physical units)
    """
    builders = {
        "taylor_green_2d": _taylor_green_2d,
        "single_mode": _single_mode,
        "random_band": _random_band,
        "bump_approx": _bump_approx,
    }
    if kind not in builders:
        raise ValueError(f"unknown initial data kind {kind!r}; expected one of {INITIAL_KINDS}")
    return builders[kind](lattice, **params)


def _taylor_green_2d(lattice: WavenumberLattice, amplitude: float = 1.0) -> SpectralField:
    if lattice.d != 2:
        raise ValueError("taylor_green_2d needs d = 2")
    x, y = lattice.grid() * lattice.unit
    u = amplitude * np.stack([np.sin(x) * np.cos(y), -np.cos(x) * np.sin(y)])
    return leray_project(forward_transform(u, lattice))


def _single_mode(
    lattice: WavenumberLattice,
    wavevector=(1, 0, 0),
    polarization=(0, 1, 0),
    amplitude: float = 1.0,
) -> SpectralField:
    wv = tuple(int(w) for w in wavevector)
    pol = np.asarray(polarization, dtype=float)
    if len(wv) != lattice.d or pol.shape != (lattice.d,):
        raise ValueError(f"wavevector and polarization need {lattice.d} components")
    if any(abs(w) >= lattice.n // 2 for w in wv):
        raise ValueError(f"wavevector {wv} lies outside the paired lattice")
    xi = np.asarray(wv, dtype=float)
    if np.any(xi):
        pol = pol - xi * (xi @ pol) / (xi @ xi)
    if not np.any(np.abs(pol) > 1e-14):
        raise ValueError("polarization has no component transverse to the wavevector")
    c = np.zeros((lattice.d,) + lattice.shape, dtype=complex)
    idx = tuple(w % lattice.n for w in wv)
    neg = tuple((-w) % lattice.n for w in wv)
    c[(slice(None),) + idx] = amplitude * pol
    c[(slice(None),) + neg] = amplitude * pol
    return SpectralField(lattice, c, True)


def _random_band(
    lattice: WavenumberLattice,
    k_min: float = 1.0,
    k_max: float = 3.0,
    amplitude: float = 1.0,
    seed: int = 0,
) -> SpectralField:
    if not 0 <= k_min <= k_max:
        raise ValueError(f"invalid band [{k_min}, {k_max}]")
    if k_max >= lattice.n / 2:
        raise ValueError(f"band edge {k_max} lies outside the lattice (n/2 = {lattice.n // 2})")
    rng = np.random.default_rng(seed)
    noise = rng.standard_normal((lattice.d,) + lattice.shape)
    f = forward_transform(noise, lattice)
    kint = lattice.k_norm / lattice.unit
    band = (kint >= k_min) & (kint <= k_max) & (kint > 0)
    if not np.any(band):
        raise ValueError(f"band [{k_min}, {k_max}] contains no lattice modes")
    c = _leray(np.where(band, f.coeffs, 0.0), lattice)
    rms = math.sqrt(float(np.sum(np.abs(c) ** 2)))
    if rms == 0:
        raise ValueError("random band produced a zero field")
    return SpectralField(lattice, c * (amplitude / rms), True)


def _bump_approx(
    lattice: WavenumberLattice,
    width: float | None = None,
    amplitude: float = 1.0,
    center=None,
) -> SpectralField:
    """Curl of a smooth compactly supported bump, periodized.

    The bump exp(-1/(1 - |x-c|^2/w^2)) vanishes outside radius ``width``;
    choosing ``width`` small against the period approximates whole-space
    compactly supported data.
    """
    width = lattice.period / 4 if width is None else float(width)
    if not 0 < width < lattice.period / 2:
        raise ValueError(f"bump width must lie in (0, period/2), got {width}")
    center = np.full(lattice.d, lattice.period / 2) if center is None else np.asarray(center, float)
    x = lattice.grid()
    rel = (x - center.reshape((-1,) + (1,) * lattice.d) + lattice.period / 2) % lattice.period
    rel -= lattice.period / 2
    s = np.sum(rel**2, axis=0) / width**2
    inside = s < 1
    bump = np.zeros_like(s)
    bump[inside] = np.exp(-1.0 / (1.0 - s[inside]))
    axes = tuple(range(lattice.d))
    psi = scipy.fft.fftn(bump, axes=axes) / lattice.size
    xi = lattice.wavevectors
    c = np.zeros((lattice.d,) + lattice.shape, dtype=complex)
    # u = (d_y psi, -d_x psi, 0...), solenoidal by construction
    c[0] = 1j * xi[1] * psi
    c[1] = -1j * xi[0] * psi
    f = SpectralField(lattice, c, True)
    norm = math.sqrt(diag.energy(f) / lattice.period**lattice.d)
    if norm == 0:
        raise ValueError("bump width too small for the lattice")
    return f * (amplitude / norm)
