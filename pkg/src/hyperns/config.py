"""Config files: ``key = value`` lines, ``[section]`` headers, ``#`` comments.

The syntax is the TOML subset of strings, numbers, booleans and arrays.
A file holds exactly one task section:

    [simulation]  (optionally with [initial])   -> ``run`` / ``decay-test``
    [comparison]                                -> ``gronwall``
    [criterion]                                 -> ``criterion``
    [envelope]                                  -> ``envelope``

Unknown keys, wrong types and constraint violations are reported with the
offending line number.
"""

from __future__ import annotations

import hashlib
import json
import math
import re
from dataclasses import dataclass, field
from typing import Any, Optional

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .dynamics import INITIAL_KINDS, SimConfig
from .gronwall import ComparisonProblem
from .symbols import GrowthFunction, parse_growth, parse_symbol

__all__ = ["ConfigError", "ParsedConfig", "parse_config", "load_config", "config_hash"]

REQUIRED = object()

# key -> (type, default); float accepts ints
SCHEMA: dict[str, dict[str, tuple]] = {
    "simulation": {
        "d": (int, REQUIRED),
        "n": (int, REQUIRED),
        "period": (float, 2 * math.pi),
        "dt": (float, REQUIRED),
        "t_end": (float, REQUIRED),
        "symbol": (str, REQUIRED),
        "dealias": (str, "two_thirds"),
        "k": (int, 3),
        "record_every": (int, 10),
        "blowup_threshold": (float, 1e12),
        "nonlinear": (bool, True),
        "g": (str, None),
        "q": (int, 4),
    },
    "initial": {
        "kind": (str, "random_band"),
        "amplitude": (float, 1.0),
        "seed": (int, 0),
        "k_min": (float, 1.0),
        "k_max": (float, 3.0),
        "wavevector": (list, None),
        "polarization": (list, None),
        "width": (float, None),
        "center": (list, None),
    },
    "comparison": {
        "C": (float, REQUIRED),
        "g": (str, REQUIRED),
        "E0": (float, REQUIRED),
        "t_end": (float, REQUIRED),
        "q": (int, 4),
        "forcing": (float, 0.0),
        "forcing_trace": (str, None),
        "rtol": (float, 1e-10),
    },
    "criterion": {
        "g": (str, REQUIRED),
        "q": (int, 4),
        "S": (float, 1e12),
    },
    "envelope": {
        "trace": (str, REQUIRED),
        "g": (str, REQUIRED),
        "q": (int, 4),
        "C": (float, None),
    },
}

# which initial-data parameters each kind accepts
INITIAL_PARAMS = {
    "taylor_green_2d": ("amplitude",),
    "single_mode": ("wavevector", "polarization", "amplitude"),
    "random_band": ("k_min", "k_max", "amplitude", "seed"),
    "bump_approx": ("width", "amplitude", "center"),
}


class ConfigError(ValueError):
    def __init__(self, message: str, line: Optional[int] = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line else message)


@dataclass
class ParsedConfig:
    task: str
    values: dict
    canonical_hash: str
    sim: Optional[SimConfig] = None
    initial_kind: Optional[str] = None
    initial_params: dict = field(default_factory=dict)
    comparison: Optional[ComparisonProblem] = None
    growth: Optional[GrowthFunction] = None

    @property
    def seed(self) -> Optional[int]:
        return self.initial_params.get("seed")

    def echo(self) -> str:
        """Resolved config with defaults filled in, as config text."""
        lines = []
        for section, entries in self.values.items():
            lines.append(f"[{section}]")
            for key, value in entries.items():
                if value is None:
                    continue
                note = ""
                if section == "simulation" and key == "symbol" and self.sim is not None:
                    note = f"  # regime: {self.sim.symbol.regime}"
                    if self.sim.symbol.is_critical:
                        note = "  # critical"
                    if not self.sim.symbol.in_regularity_dimension:
                        note += "; outside the regularity regime (needs d >= 3)"
                lines.append(f"{key} = {_format_value(value)}{note}")
            lines.append("")
        return "\n".join(lines)


def _format_value(value: Any) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, str):
        return json.dumps(value)
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, list):
        return "[" + ", ".join(_format_value(v) for v in value) + "]"
    return str(value)


def config_hash(text: str) -> str:
    """sha256 of the parsed config as sorted-key compact JSON."""
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(str(exc)) from None
    canonical = json.dumps(data, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode()).hexdigest()


class _LineFinder:
    def __init__(self, text: str):
        self.lines = text.splitlines()

    def find(self, section: str, key: Optional[str] = None) -> Optional[int]:
        current = None
        sec_re = re.compile(r"^\s*\[\s*([A-Za-z0-9_\-]+)\s*\]")
        key_re = re.compile(r"^\s*" + re.escape(key) + r"\s*=") if key else None
        for lineno, line in enumerate(self.lines, start=1):
            m = sec_re.match(line)
            if m:
                current = m.group(1)
                if key is None and current == section:
                    return lineno
                continue
            if key_re is not None and current == section and key_re.match(line):
                return lineno
        return None


def _coerce(value: Any, kind: type, where: str, line: Optional[int]) -> Any:
    if kind is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{where} must be a number, got {value!r}", line)
        return float(value)
    if kind is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{where} must be an integer, got {value!r}", line)
        return value
    if not isinstance(value, kind):
        raise ConfigError(f"{where} must be of type {kind.__name__}, got {value!r}", line)
    return value


def _resolve(data: dict, finder: _LineFinder) -> dict:
    resolved = {}
    for section, entries in data.items():
        if section not in SCHEMA:
            raise ConfigError(f"unknown section [{section}]", finder.find(section))
        if not isinstance(entries, dict):
            raise ConfigError(f"unknown top-level key {section!r}", None)
        schema = SCHEMA[section]
        out = {}
        for key, value in entries.items():
            if key not in schema:
                raise ConfigError(f"unknown key {key!r} in [{section}]", finder.find(section, key))
            out[key] = _coerce(value, schema[key][0], f"{section}.{key}", finder.find(section, key))
        for key, (_, default) in schema.items():
            if key not in out:
                if default is REQUIRED:
                    raise ConfigError(f"missing required key {key!r} in [{section}]", finder.find(section))
                out[key] = default
        resolved[section] = out
    return resolved


def _task(resolved: dict, finder: _LineFinder) -> str:
    tasks = [s for s in ("simulation", "comparison", "criterion", "envelope") if s in resolved]
    if len(tasks) != 1:
        raise ConfigError(
            "config must contain exactly one of [simulation], [comparison], [criterion], [envelope]"
        )
    if "initial" in resolved and tasks[0] != "simulation":
        raise ConfigError("[initial] is only valid with [simulation]", finder.find("initial"))
    return {"simulation": "run", "comparison": "gronwall"}.get(tasks[0], tasks[0])


def _growth(text: str, line) -> GrowthFunction:
    try:
        return parse_growth(text)
    except ValueError as exc:
        raise ConfigError(str(exc), line) from None


def parse_config(text: str) -> ParsedConfig:
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(str(exc)) from None
    finder = _LineFinder(text)
    resolved = _resolve(data, finder)
    task = _task(resolved, finder)
    digest = config_hash(text)
    parsed = ParsedConfig(task=task, values=resolved, canonical_hash=digest)

    if task == "run":
        sec = resolved["simulation"]
        line = lambda key: finder.find("simulation", key)  # noqa: E731
        try:
            symbol = parse_symbol(sec["symbol"], sec["d"])
        except ValueError as exc:
            raise ConfigError(str(exc), line("symbol")) from None
        growth = _growth(sec["g"], line("g")) if sec["g"] else None
        try:
            parsed.sim = SimConfig(
                d=sec["d"],
                n=sec["n"],
                period=sec["period"],
                dt=sec["dt"],
                t_end=sec["t_end"],
                symbol=symbol,
                dealias=sec["dealias"],
                k=sec["k"],
                record_every=sec["record_every"],
                blowup_threshold=sec["blowup_threshold"],
                nonlinear=sec["nonlinear"],
                growth=growth,
                q=sec["q"],
            )
        except ValueError as exc:
            raise ConfigError(str(exc), _blame(str(exc), sec, line) or finder.find("simulation"))
        parsed.growth = parsed.sim.growth_function
        init = resolved.setdefault("initial", dict(_defaults("initial")))
        kind = init["kind"]
        if kind not in INITIAL_KINDS:
            raise ConfigError(
                f"unknown initial kind {kind!r}; expected one of {INITIAL_KINDS}",
                finder.find("initial", "kind"),
            )
        parsed.initial_kind = kind
        parsed.initial_params = {
            key: init[key] for key in INITIAL_PARAMS[kind] if init[key] is not None
        }
    elif task == "gronwall":
        sec = resolved["comparison"]
        line = lambda key: finder.find("comparison", key)  # noqa: E731
        g = _growth(sec["g"], line("g"))
        try:
            parsed.comparison = ComparisonProblem(
                C=sec["C"], g=g, E0=sec["E0"], t_end=sec["t_end"], forcing=sec["forcing"],
                q=sec["q"], rtol=sec["rtol"],
            )
        except ValueError as exc:
            raise ConfigError(str(exc), _blame(str(exc), sec, line) or finder.find("comparison"))
        parsed.growth = g
    else:
        sec = resolved[task]
        parsed.growth = _growth(sec["g"], finder.find(task, "g"))
        if sec["q"] not in (2, 4):
            raise ConfigError(f"q must be 2 or 4, got {sec['q']}", finder.find(task, "q"))
        if task == "criterion" and not sec["S"] > 1:
            raise ConfigError(f"S must exceed 1, got {sec['S']}", finder.find(task, "S"))
    return parsed


def _defaults(section: str) -> dict:
    return {k: v for k, (_, v) in SCHEMA[section].items() if v is not REQUIRED}


def _blame(message: str, section: dict, line) -> Optional[int]:
    """Line of the key mentioned earliest in a validation message."""
    hits = []
    for key in section:
        m = re.search(rf"(?<![\w.]){re.escape(key)}(?![\w])", message)
        if m and line(key):
            hits.append((m.start(), line(key)))
    return min(hits)[1] if hits else None


def load_config(path) -> ParsedConfig:
    with open(path) as fh:
        return parse_config(fh.read())
