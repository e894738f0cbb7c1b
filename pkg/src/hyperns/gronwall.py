"""Scalar comparison ODEs and the divergence criterion for growth functions.

The comparison equation is

    E' = C * g(1 + E)**q * E * (1 + a(t)),

which stays finite on bounded intervals whenever a is integrable and
int_1^inf ds / (s g(s)**q) diverges.  The regularity regime is q = 4; q = 2
is kept for exploring the sharper conjectured criterion.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Union

import numpy as np
from scipy import integrate

from .diagnostics import EnergyTrace
from .symbols import GrowthFunction

__all__ = [
    "ComparisonProblem",
    "ComparisonResult",
    "DivergenceReport",
    "EnvelopeReport",
    "criterion_integral",
    "classify_divergence",
    "integrate_ode",
    "integrate_comparison",
    "log_gronwall",
    "bound_envelope",
]

OVERFLOW_GUARD = 1e300

Forcing = Union[float, Callable[[float], float], tuple]


def _g_power(g: GrowthFunction, s, q: int):
    values = np.asarray(g(s), dtype=float)
    if np.any(~(values > 0)):
        raise ValueError("growth function must be strictly positive")
    return values**q


def criterion_integral(g: GrowthFunction, q: int, S: float, rtol: float = 1e-11) -> float:
    """int_1^S ds / (s g(s)**q), computed as int_0^log S g(e^sigma)**-q dsigma."""
    if not S > 1:
        raise ValueError(f"upper limit must exceed 1, got {S}")
    if not q > 0:
        raise ValueError(f"exponent q must be positive, got {q}")
    return _log_integral(g, q, 0.0, math.log(S), rtol)


def _log_integral(g, q, lo, hi, rtol):
    def integrand(sigma):
        return 1.0 / float(_g_power(g, math.exp(sigma), q))

    value, _ = integrate.quad(integrand, lo, hi, epsabs=0.0, epsrel=rtol, limit=500)
    return value


@dataclass
class DivergenceReport:
    verdict: str
    exponents: np.ndarray
    partial: np.ndarray
    increments: np.ndarray
    ratio_tail: float
    raabe_tail: float
    bertrand_tail: float
    limit_estimate: Optional[float] = None
    geometric_fit: bool = False

    def table(self) -> str:
        lines = ["log2(S)  integral              increment"]
        for j, F, inc in zip(self.exponents[1:], self.partial[1:], self.increments):
            lines.append(f"{j:7d}  {F:.12e}  {inc:.6e}")
        return "\n".join(lines)


def classify_divergence(
    g: GrowthFunction, q: int = 4, j_min: int = 10, j_max: int = 40, tol: float = 0.1
) -> DivergenceReport:
    """Decide whether int_1^inf ds/(s g(s)**q) diverges from its dyadic tail.

    The dyadic increments I_j = int_{2^j}^{2^(j+1)} form a series; the
    ratio, Raabe and Bertrand tests are applied in turn to the tail
    values.  Borderline statistics within ``tol`` of the critical value 1
    give ``inconclusive``.
    """
    exps = np.arange(j_min, j_max + 1)
    ln2 = math.log(2.0)
    inc = np.array([_log_integral(g, q, j * ln2, (j + 1) * ln2, 1e-12) for j in exps[:-1]])
    head = criterion_integral(g, q, 2.0**j_min)
    partial = head + np.concatenate([[0.0], np.cumsum(inc)])

    j = exps[:-1].astype(float)
    tail = slice(-6, None)
    if np.any(inc <= 0):
        raise ValueError("non-positive dyadic increment; growth function too large to resolve")
    ratio = inc[1:] / inc[:-1]
    raabe = j[:-1] * (inc[:-1] / inc[1:] - 1.0)
    bertrand = np.log(j[:-1]) * (raabe - 1.0)
    ratio_tail = float(np.mean(ratio[tail]))
    raabe_tail = float(np.mean(raabe[tail]))
    bertrand_tail = float(np.mean(bertrand[tail]))

    # Geometric decay (log I linear in j) and power decay in j (log I
    # linear in log j) look alike over a short window; pick the better fit.
    log_inc = np.log(inc)
    geo_fit = np.polyfit(j, log_inc, 1, full=True)
    pow_fit = np.polyfit(np.log(j), log_inc, 1, full=True)
    geo_resid = float(geo_fit[1][0]) if geo_fit[1].size else 0.0
    pow_resid = float(pow_fit[1][0]) if pow_fit[1].size else 0.0
    geometric = geo_resid <= pow_resid
    rate = math.exp(geo_fit[0][0])

    limit = None
    if geometric and rate >= 1.0 - 1e-9:
        verdict = "diverges"
    elif geometric:
        verdict = "converges"
        limit = float(partial[-1] + inc[-1] * rate / (1.0 - rate))
    elif raabe_tail > 1.0 + tol:
        verdict = "converges"
        # p-series tail: sum_{i>J} I_J (J/i)^p ~ I_J J / (p - 1)
        limit = float(partial[-1] + inc[-1] * j[-1] / (raabe_tail - 1.0))
    elif raabe_tail < 1.0 - tol or bertrand_tail < 1.0 - tol:
        verdict = "diverges"
    elif bertrand_tail > 1.0 + tol:
        verdict = "converges"
    else:
        verdict = "inconclusive"
    return DivergenceReport(
        verdict, exps, partial, inc, ratio_tail, raabe_tail, bertrand_tail, limit, geometric
    )


@dataclass
class ComparisonResult:
    times: np.ndarray
    values: np.ndarray
    outcome: str
    t_star: Optional[float] = None
    bracket: Optional[tuple] = None

    @property
    def blew_up(self) -> bool:
        return self.outcome == "blowup"

    def describe(self) -> str:
        if self.blew_up:
            lo, hi = self.bracket
            return f"blowup_at({self.t_star:.12g}) bracket [{lo:.12g}, {hi:.12g}]"
        return f"global, E(T) = {self.values[-1]:.12g}"


def _rk4(f, t, y, h):
    k1 = f(t, y)
    k2 = f(t + 0.5 * h, y + 0.5 * h * k1)
    k3 = f(t + 0.5 * h, y + 0.5 * h * k2)
    k4 = f(t + h, y + h * k3)
    return y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def integrate_ode(
    f: Callable[[float, float], float],
    y0: float,
    t_end: float,
    t0: float = 0.0,
    rtol: float = 1e-10,
    atol: float = 1e-300,
    t_eval: Optional[Sequence[float]] = None,
    overflow: float = OVERFLOW_GUARD,
) -> ComparisonResult:
    """Adaptive RK4 with step doubling and local extrapolation for y' = f(t, y).

    Each accepted step compares one step of size h with two of size h/2;
    the difference over 15 estimates the local error.  Times in ``t_eval``
    are hit exactly.  Blowup is declared when y passes ``overflow`` or
    the step size collapses on non-finite stages; the bracket is the last
    two accepted times.  With ``t_eval`` the result holds only t0 and the
    requested times (plus the last accepted point on blowup).
    """
    if not t_end > t0:
        raise ValueError("t_end must exceed t0")
    stops = [t_end] if t_eval is None else sorted(set(float(x) for x in t_eval) | {t_end})
    stops = [s for s in stops if s > t0]
    keep = None if t_eval is None else [float(t0)] + stops

    t, y = float(t0), float(y0)
    times, values = [t], [y]
    h = (t_end - t0) / 64
    with np.errstate(over="ignore", invalid="ignore"):
        for stop in stops:
            while t < stop:
                h = min(h, stop - t)
                hit = h == stop - t
                full = _rk4(f, t, y, h)
                mid = _rk4(f, t, y, 0.5 * h)
                half = _rk4(f, t + 0.5 * h, mid, 0.5 * h)
                if not (math.isfinite(full) and math.isfinite(half)):
                    h *= 0.25
                    if h <= 1e-15 * max(abs(t), 1.0):
                        return _blowup(times, values, keep)
                    continue
                err = abs(half - full) / 15.0
                scale = atol + rtol * max(abs(y), abs(half))
                if err <= scale:
                    t = stop if hit else t + h
                    y = half + (half - full) / 15.0
                    times.append(t)
                    values.append(y)
                    if abs(y) > overflow:
                        return _blowup(times, values, keep)
                    factor = 4.0 if err == 0 else min(4.0, 0.9 * (scale / err) ** 0.2)
                    h *= max(factor, 0.2)
                else:
                    h *= max(0.2, 0.9 * (scale / err) ** 0.2)
                    if h <= 1e-15 * max(abs(t), 1.0):
                        return _blowup(times, values, keep)
    times, values = np.array(times), np.array(values)
    if keep is not None:
        sel = np.isin(times, keep)
        times, values = times[sel], values[sel]
    return ComparisonResult(times, values, "global")


def _blowup(times, values, keep=None) -> ComparisonResult:
    lo = times[-2] if len(times) > 1 else times[-1]
    hi = times[-1]
    times, values = np.array(times), np.array(values)
    if keep is not None:
        sel = np.isin(times, keep)
        sel[-1] = True
        times, values = times[sel], values[sel]
    return ComparisonResult(times, values, "blowup", hi, (lo, hi))


def _forcing_function(forcing: Forcing) -> Callable[[float], float]:
    if callable(forcing):
        return forcing
    if isinstance(forcing, tuple):
        ts, vals = (np.asarray(x, dtype=float) for x in forcing)
        if ts.shape != vals.shape or ts.ndim != 1 or ts.size == 0:
            raise ValueError("sampled forcing needs matching 1-D time and value arrays")
        if not (np.all(np.isfinite(ts)) and np.all(np.isfinite(vals))):
            raise ValueError("forcing samples must be finite")
        if np.any(vals < 0):
            raise ValueError("forcing samples must be non-negative")
        return lambda t: float(np.interp(t, ts, vals))
    value = float(forcing)
    if not math.isfinite(value) or value < 0:
        raise ValueError(f"constant forcing must be finite and non-negative, got {value}")
    return lambda t: value


@dataclass
class ComparisonProblem:
    """E' = C g(1+E)**q E (1 + a(t)), E(0) = E0 on [0, t_end]."""

    C: float
    g: GrowthFunction
    E0: float
    t_end: float
    forcing: Forcing = 0.0
    q: int = 4
    rtol: float = 1e-10
    _a: Callable = field(init=False, repr=False)

    def __post_init__(self):
        if not self.C > 0:
            raise ValueError(f"C must be positive, got {self.C}")
        if not self.E0 >= 0:
            raise ValueError(f"E0 must be non-negative, got {self.E0}")
        if not self.t_end > 0:
            raise ValueError(f"t_end must be positive, got {self.t_end}")
        if self.q not in (2, 4):
            raise ValueError(f"q must be 2 or 4, got {self.q}")
        self._a = _forcing_function(self.forcing)

    def rhs(self, t: float, E: float) -> float:
        a = self._a(t)
        if not math.isfinite(a):
            raise ValueError(f"forcing is not finite at t={t}")
        return self.C * float(_g_power(self.g, 1.0 + E, self.q)) * E * (1.0 + a)


def integrate_comparison(
    prob: ComparisonProblem, t_eval: Optional[Sequence[float]] = None
) -> ComparisonResult:
    """Solve the comparison ODE, reporting ``global`` or ``blowup`` with t*."""
    if prob.E0 == 0:
        times = np.array([0.0, prob.t_end] if t_eval is None else sorted({0.0, *t_eval, prob.t_end}))
        return ComparisonResult(times, np.zeros_like(times), "global")
    return integrate_ode(prob.rhs, prob.E0, prob.t_end, rtol=prob.rtol, t_eval=t_eval)


def log_gronwall(E0: float, t_end: float, rtol: float = 1e-12, t_eval=None) -> ComparisonResult:
    """E' = E log E: the double-exponential model, exact solution exp(log(E0) e^t)."""
    if not E0 > 1:
        raise ValueError("log-Gronwall model needs E0 > 1")
    return integrate_ode(lambda t, E: E * math.log(E), E0, t_end, rtol=rtol, t_eval=t_eval)


@dataclass
class EnvelopeReport:
    times: np.ndarray
    envelope: np.ndarray
    E_k: np.ndarray
    violations: np.ndarray
    C: float

    @property
    def dominated(self) -> bool:
        return self.violations.size == 0

    @property
    def worst_margin(self) -> float:
        """min over rows of envelope / E_k - 1."""
        with np.errstate(divide="ignore", invalid="ignore"):
            margin = np.where(self.E_k > 0, self.envelope / self.E_k - 1.0, np.inf)
        return float(np.min(margin))


def bound_envelope(
    trace: EnergyTrace,
    C_emp: float,
    g: GrowthFunction,
    q: int = 4,
    t_end: Optional[float] = None,
    rtol: float = 1e-11,
) -> EnvelopeReport:
    """Comparison envelope started at E_k(0) and checked against the trace rows.

    The envelope integrates E' = C g(1+E)**q E (1 + a) row interval by row
    interval, holding a at max(a_i, a_{i+1}) on each interval.  With C the
    supremum forward-difference ratio this dominates every recorded E_k.
    """
    if len(trace) == 0:
        raise ValueError("envelope of an empty trace")
    t, a, Ek = trace.t, trace.a, trace.E_k
    if t_end is not None and not (t[0] <= t_end <= t[-1] * (1 + 1e-12)):
        raise ValueError(f"horizon {t_end} not covered by trace [{t[0]}, {t[-1]}]")
    if not (C_emp >= 0 and math.isfinite(C_emp)):
        raise ValueError(f"empirical constant must be finite and non-negative, got {C_emp}")
    if q not in (2, 4):
        raise ValueError(f"q must be 2 or 4, got {q}")

    env = np.empty(len(trace))
    env[0] = Ek[0]
    for i in range(len(trace) - 1):
        if C_emp == 0 or env[i] == 0:
            env[i + 1] = env[i]
            continue
        a_up = max(a[i], a[i + 1])

        def rhs(_t, E, a_up=a_up):
            return C_emp * float(_g_power(g, 1.0 + E, q)) * E * (1.0 + a_up)

        res = integrate_ode(rhs, env[i], t[i + 1], t0=t[i], rtol=rtol)
        env[i + 1] = np.inf if res.blew_up else res.values[-1]
    violations = np.nonzero(Ek > env * (1 + 1e-12))[0]
    return EnvelopeReport(t.copy(), env, Ek.copy(), violations, float(C_emp))
