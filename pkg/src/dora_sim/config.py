"""Simulation configuration, presets and the flat ``key=value`` config format."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Any, Iterable, Mapping

CONTROLLERS = ("dora", "fbe", "random")
FAILURE_POLICIES = ("per_cell_entry", "per_step")
FAILURE_INPUTS = ("truth", "sensed")
LAYOUTS = ("random", "corners")
TIME_NORMALIZATION = ("time", "raw")


class ConfigError(ValueError):
    """Raised for malformed config text or invalid parameter values."""


@dataclass(frozen=True)
class SimConfig:
    width: int = 20
    height: int = 20
    cell_size: float = 1.0
    n_robots: int = 20
    n_sources: int = 2
    n_obstacles: int = 5
    obstacle_size: float = 0.8
    layout: str = "random"
    # radiation field
    decay: float = 5.0
    background_sigma: float = 0.05
    # control gains
    alpha: float = 2.0
    beta: float = 1.0
    gamma: float = 1.0
    k: float = 0.2
    stagnation_epsilon: float = 1e-3
    epsilon_normalization: str = "time"
    sensor_range: float = 0.8
    omega: float = 0.01
    p_turn: float = 0.2
    # failures
    failure_policy: str = "per_cell_entry"
    failure_input: str = "truth"
    # network
    drop_probability: float = 0.0
    message_bytes: int = 20
    comm_radius: float = 0.0
    max_rounds: int = 4
    # run
    steps: int = 300
    seed: int = 0
    controller: str = "dora"

    def validate(self) -> "SimConfig":
        def bad(key: str, why: str) -> ConfigError:
            return ConfigError(f"invalid value for {key!r}: {getattr(self, key)!r} ({why})")

        for key in ("width", "height"):
            if getattr(self, key) < 1:
                raise bad(key, "must be >= 1")
        for key in ("n_robots", "n_sources", "n_obstacles", "message_bytes", "seed"):
            if getattr(self, key) < 0:
                raise bad(key, "must be >= 0")
        for key in ("cell_size", "k", "omega"):
            if not getattr(self, key) > 0:
                raise bad(key, "must be > 0")
        for key in ("obstacle_size", "decay", "background_sigma", "alpha", "beta", "gamma",
                    "stagnation_epsilon", "sensor_range", "comm_radius"):
            if getattr(self, key) < 0:
                raise bad(key, "must be >= 0")
        for key in ("p_turn", "drop_probability"):
            if not 0.0 <= getattr(self, key) <= 1.0:
                raise bad(key, "must lie in [0, 1]")
        if self.steps < 1:
            raise bad("steps", "must be >= 1")
        if self.max_rounds < 1:
            raise bad("max_rounds", "must be >= 1")
        choices = {
            "controller": CONTROLLERS,
            "failure_policy": FAILURE_POLICIES,
            "failure_input": FAILURE_INPUTS,
            "layout": LAYOUTS,
            "epsilon_normalization": TIME_NORMALIZATION,
        }
        for key, allowed in choices.items():
            if getattr(self, key) not in allowed:
                raise bad(key, f"expected one of {', '.join(allowed)}")
        return self

    def replace(self, **changes: Any) -> "SimConfig":
        return dataclasses.replace(self, **changes)

    def to_lines(self) -> list[str]:
        return [f"{f.name}={_format(getattr(self, f.name))}" for f in fields(self)]


PRESETS: dict[str, SimConfig] = {
    # 20 m x 20 m arena, 2 sources, 5 obstacles of 0.8 m, N in {10, 15, 20}
    "sim20": SimConfig(),
    # 2 m x 2 m physical arena as a 10 x 10 grid, one source in a corner, robots in the others
    "arena": SimConfig(
        width=10,
        height=10,
        cell_size=0.2,
        n_robots=3,
        n_sources=1,
        n_obstacles=0,
        layout="corners",
        k=0.04,  # keeps the 0.2 cells per tick of sim20
        steps=200,
    ),
}

_FIELD_TYPES = {f.name: f.type for f in fields(SimConfig)}
_ALIASES = {"lambda": "decay", "robots": "n_robots", "sigma": "background_sigma", "d": "message_bytes"}


def _format(value: Any) -> str:
    return repr(value) if isinstance(value, float) else str(value)


def _coerce(key: str, raw: str) -> Any:
    kind = _FIELD_TYPES[key]
    try:
        if kind == "int":
            return int(raw)
        if kind == "float":
            return float(raw)
    except ValueError:
        raise ConfigError(f"invalid value for {key!r}: {raw!r} (expected {kind})") from None
    return raw


def _canonical_key(key: str) -> str:
    key = _ALIASES.get(key, key)
    if key not in _FIELD_TYPES:
        raise ConfigError(f"unknown config key {key!r}")
    return key


def parse_config_text(text: str, source: str = "<config>") -> dict[str, Any]:
    """Parse ``key=value`` lines into overrides.

    ``[section]`` headers are accepted and ignored; keys are global. Blank
    lines and ``#`` / ``;`` comments are skipped.
    """
    values: dict[str, Any] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or line[0] in "#;":
            continue
        if line.startswith("[") and line.endswith("]"):
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected key=value, got {line!r}")
        key, raw = (part.strip() for part in line.split("=", 1))
        if not key:
            raise ConfigError(f"{source}:{lineno}: empty key")
        try:
            key = _canonical_key(key)
            values[key] = _coerce(key, raw)
        except ConfigError as exc:
            raise ConfigError(f"{source}:{lineno}: {exc}") from None
    return values


def coerce_overrides(pairs: Mapping[str, Any] | Iterable[tuple[str, Any]]) -> dict[str, Any]:
    items = pairs.items() if isinstance(pairs, Mapping) else pairs
    out = {}
    for key, value in items:
        key = _canonical_key(key)
        out[key] = _coerce(key, value) if isinstance(value, str) else value
    return out


def parse_config(
    path: str | Path | None = None,
    preset: str | None = None,
    overrides: Mapping[str, Any] | None = None,
) -> SimConfig:
    """Resolve a config: preset defaults, then file values, then flag overrides."""
    if preset is not None and preset not in PRESETS:
        raise ConfigError(f"unknown preset {preset!r}; available: {', '.join(PRESETS)}")
    config = PRESETS[preset] if preset else SimConfig()
    if path is not None:
        path = Path(path)
        config = config.replace(**parse_config_text(path.read_text(), source=str(path)))
    if overrides:
        config = config.replace(**coerce_overrides(overrides))
    return config.validate()


def config_header(config: SimConfig, prefix: str = "# ") -> str:
    return "".join(f"{prefix}{line}\n" for line in config.to_lines())


def config_from_header(text: str) -> SimConfig:
    """Recover the config embedded in an output file's leading comment block."""
    lines = []
    for line in text.splitlines():
        if line.startswith("P2"):
            continue
        if not line.startswith("#"):
            break
        body = line[1:].strip()
        if "=" in body:
            lines.append(body)
    return SimConfig(**parse_config_text("\n".join(lines))).validate()
