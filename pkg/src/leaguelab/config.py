"""Experiment configuration: a flat, dotted-key TOML file parsed strictly.

Every key has a default, so an empty file is a valid configuration::

    game.name = "rps"
    game.k = 5
    population.N = 20
    pbt.perturb_factors = [0.8, 1.25]
    runtime.total_units = 50000

Unknown keys, wrong types and out-of-range values raise :class:`ConfigError`
naming the offending key.
"""

from __future__ import annotations

import dataclasses
import sys
from dataclasses import dataclass, field
from typing import Any, Optional

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .errors import ConfigError


@dataclass(frozen=True)
class GameConfig:
    name: str = "rps"
    k: int = 5
    soldiers: int = 3
    fields: int = 3
    seed: int = 0
    cap: int = 500


@dataclass(frozen=True)
class PopulationConfig:
    N: int = 20
    sigma0: float = 0.5
    R0: float = 1000.0
    hall_cap: int = 256
    lr_bounds: tuple = (1e-3, 0.5)
    entropy_bounds: tuple = (0.05, 0.5)


@dataclass(frozen=True)
class PbtConfig:
    enabled: bool = True
    ready_interval: int = 64
    min_matches: int = 8
    perturb_factors: tuple = (0.8, 1.25)
    resample_prob: float = 0.25
    selection: str = "binary_tournament"


@dataclass(frozen=True)
class LeagueConfig:
    K: float = 32.0
    sigma_match: float = 200.0
    episodes: int = 32
    opponents_per_burst: int = 4
    exact: bool = False
    # mixed strategy every agent trains and plays against instead of the league
    fixed_opponent: Optional[tuple] = None


@dataclass(frozen=True)
class LearnerConfig:
    steps_per_burst: int = 32


@dataclass(frozen=True)
class QDConfig:
    enabled: bool = True
    R: int = 10
    beta: float = 50.0
    s_hi: float = 0.8
    s_lo: float = 0.1
    window: int = 5
    bd_window: int = 8
    radius: int = 1
    adapt: bool = True


@dataclass(frozen=True)
class RuntimeConfig:
    workers: int = 1
    total_units: int = 10000
    seed: int = 0
    checkpoint_every: int = 1000
    preemption_gamma: float = 1.0


@dataclass(frozen=True)
class NashConfig:
    population: str = "all"
    max_iters: int = 100000
    tol: float = 0.005
    min_coverage: float = 0.95
    fill_episodes: int = 64
    theta: Optional[float] = None


@dataclass(frozen=True)
class OutputConfig:
    dir: str = "runs/default"
    metrics_every: int = 500


@dataclass(frozen=True)
class ExperimentConfig:
    game: GameConfig = field(default_factory=GameConfig)
    population: PopulationConfig = field(default_factory=PopulationConfig)
    pbt: PbtConfig = field(default_factory=PbtConfig)
    league: LeagueConfig = field(default_factory=LeagueConfig)
    learner: LearnerConfig = field(default_factory=LearnerConfig)
    qd: QDConfig = field(default_factory=QDConfig)
    runtime: RuntimeConfig = field(default_factory=RuntimeConfig)
    nash: NashConfig = field(default_factory=NashConfig)
    output: OutputConfig = field(default_factory=OutputConfig)

    def to_dict(self) -> dict:
        return {
            f"{sec.name}.{f.name}": _plain(getattr(getattr(self, sec.name), f.name))
            for sec in dataclasses.fields(self)
            for f in dataclasses.fields(getattr(self, sec.name))
        }

    def replace(self, **dotted) -> "ExperimentConfig":
        """Return a copy with dotted keys overridden, validated like file input."""
        flat = self.to_dict()
        for key, value in dotted.items():
            flat[key.replace("__", ".")] = _plain(value)
        return from_dict(flat)


def _plain(v):
    return list(v) if isinstance(v, tuple) else v


def _pos(x):
    return x > 0


def _nonneg(x):
    return x >= 0


def _unit(x):
    return 0 <= x <= 1


def _bounds_ok(b):
    return len(b) == 2 and 0 < b[0] <= b[1]


# key -> (check, description of the accepted range)
_RANGES = {
    "game.name": (lambda v: v in ("rps", "blotto", "random"), "one of rps, blotto, random"),
    "game.k": (lambda v: v >= 2, ">= 2 (odd and >= 3 for rps)"),
    "game.soldiers": (lambda v: v >= 1, ">= 1"),
    "game.fields": (lambda v: v >= 2, ">= 2"),
    "game.cap": (_pos, ">= 1"),
    "population.N": (lambda v: v >= 2, "minimum 2"),
    "population.sigma0": (_nonneg, ">= 0"),
    "population.hall_cap": (_pos, ">= 1"),
    "population.lr_bounds": (_bounds_ok, "[min, max] with 0 < min <= max"),
    "population.entropy_bounds": (_bounds_ok, "[min, max] with 0 < min <= max"),
    "pbt.ready_interval": (lambda v: v >= 1, ">= 1"),
    "pbt.min_matches": (_nonneg, ">= 0"),
    "pbt.perturb_factors": (lambda v: len(v) == 2 and all(x > 0 for x in v), "two positive multipliers"),
    "pbt.resample_prob": (_unit, "[0, 1]"),
    "pbt.selection": (lambda v: v == "binary_tournament", "binary_tournament"),
    "league.K": (_nonneg, ">= 0"),
    "league.sigma_match": (_pos, "> 0"),
    "league.episodes": (lambda v: v >= 1, ">= 1"),
    "league.opponents_per_burst": (lambda v: v >= 1, ">= 1"),
    "league.fixed_opponent": (lambda v: v is None or (min(v) >= 0 and abs(sum(v) - 1) < 1e-9),
                              "a probability vector"),
    "learner.steps_per_burst": (lambda v: v >= 1, ">= 1"),
    "qd.R": (lambda v: v >= 1, ">= 1"),
    "qd.beta": (_nonneg, ">= 0"),
    "qd.s_hi": (_unit, "[0, 1]"),
    "qd.s_lo": (_unit, "[0, 1]"),
    "qd.window": (lambda v: v >= 1, ">= 1"),
    "qd.bd_window": (lambda v: v >= 1, ">= 1"),
    "qd.radius": (_nonneg, ">= 0"),
    "runtime.workers": (lambda v: v >= 1, ">= 1"),
    "runtime.total_units": (_nonneg, ">= 0"),
    "runtime.checkpoint_every": (lambda v: v >= 1, ">= 1"),
    "runtime.preemption_gamma": (_nonneg, ">= 0"),
    "nash.population": (lambda v: v in ("all", "active"), "one of all, active"),
    "nash.max_iters": (lambda v: v >= 1, ">= 1"),
    "nash.tol": (_pos, "> 0"),
    "nash.min_coverage": (_unit, "[0, 1]"),
    "nash.fill_episodes": (_nonneg, ">= 0 (0 disables filling)"),
    "nash.theta": (lambda v: v is None or 0 < v < 1, "in (0, 1)"),
    "output.metrics_every": (lambda v: v >= 1, ">= 1"),
}


def _flatten(d: dict, prefix: str = "") -> dict:
    out = {}
    for k, v in d.items():
        key = f"{prefix}{k}"
        if isinstance(v, dict):
            out.update(_flatten(v, key + "."))
        else:
            out[key] = v
    return out


def _coerce(key: str, value: Any, default: Any, annotation: str):
    def bad(expected):
        raise ConfigError(key, f"expected {expected}, got {value!r}")

    if value is None:
        if "Optional" in annotation:
            return None
        bad(annotation)
    if "tuple" in annotation:
        if not isinstance(value, (list, tuple)) or not all(
            isinstance(x, (int, float)) and not isinstance(x, bool) for x in value
        ):
            bad("a list of numbers")
        return tuple(float(x) for x in value)
    if isinstance(default, bool) or annotation == "bool":
        if not isinstance(value, bool):
            bad("true or false")
        return value
    if isinstance(default, int) or annotation == "int":
        if isinstance(value, bool) or not isinstance(value, int):
            bad("an integer")
        return value
    if isinstance(default, float) or "float" in annotation:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            bad("a number")
        return float(value)
    if isinstance(default, str):
        if not isinstance(value, str):
            bad("a string")
        return value
    return value


def from_dict(flat: dict) -> ExperimentConfig:
    sections = {}
    known = {}
    for sec in dataclasses.fields(ExperimentConfig):
        cls = sec.default_factory  # type: ignore[misc]
        known.update({f"{sec.name}.{f.name}": (sec.name, f) for f in dataclasses.fields(cls)})
        sections[sec.name] = {}
    for key, value in flat.items():
        if key not in known:
            raise ConfigError(key, "unknown key")
        sec_name, f = known[key]
        coerced = _coerce(key, value, f.default, str(f.type))
        check = _RANGES.get(key)
        if check is not None and coerced is not None:
            ok, desc = check
            if not ok(coerced):
                raise ConfigError(key, f"out of range: {value!r} (expected {desc})")
        sections[sec_name][f.name] = coerced
    built = {}
    for sec in dataclasses.fields(ExperimentConfig):
        built[sec.name] = sec.default_factory(**sections[sec.name])  # type: ignore[misc]
    cfg = ExperimentConfig(**built)
    _cross_check(cfg)
    return cfg


def _cross_check(cfg: ExperimentConfig) -> None:
    if cfg.game.name == "rps" and cfg.game.k % 2 == 0:
        raise ConfigError("game.k", f"rps needs an odd k >= 3, got {cfg.game.k}")
    if cfg.qd.s_lo >= cfg.qd.s_hi:
        raise ConfigError("qd.s_lo", f"must be below qd.s_hi ({cfg.qd.s_hi})")


def parse_config(text: str) -> ExperimentConfig:
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError("<file>", f"not valid TOML: {exc}") from exc
    return from_dict(_flatten(raw))


def load_config(path) -> ExperimentConfig:
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read())


def dump_config(cfg: ExperimentConfig) -> str:
    lines = []
    for key, value in cfg.to_dict().items():
        if value is None:
            continue
        if isinstance(value, str):
            lines.append(f'{key} = "{value}"')
        elif isinstance(value, bool):
            lines.append(f"{key} = {'true' if value else 'false'}")
        elif isinstance(value, list):
            lines.append(f"{key} = [{', '.join(repr(float(x)) for x in value)}]")
        else:
            lines.append(f"{key} = {value!r}")
    return "\n".join(lines) + "\n"
