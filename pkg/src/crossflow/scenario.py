"""Scenario configuration and the flat key = value scenario file format.

A scenario file holds one ``key = value`` per line; blank lines and ``#``
comments are ignored and unknown keys are rejected. Every field has a
default, so a file only needs the keys it overrides. Lane splits are
written as ``a/b`` (clockwise lane first); when omitted, each ring's
vehicles split evenly with the odd vehicle on the clockwise lane.
"""

from __future__ import annotations

from dataclasses import dataclass, fields, replace
from typing import Optional


class ConfigError(ValueError):
    """Scenario file or configuration value is invalid."""


@dataclass(frozen=True)
class ScenarioConfig:
    """Everything needed to reproduce one simulation run."""

    label: str = "scenario"
    mode: str = "fixed"
    duration_s: float = 912.0
    dt_s: float = 0.1
    seed: int = 1

    left_ring_length_m: float = 3040.0
    right_ring_length_m: float = 3200.0
    left_ring_vehicles: int = 35
    right_ring_vehicles: int = 37
    left_lane_split: Optional[tuple] = None
    right_lane_split: Optional[tuple] = None

    free_flow_speed_kmh: float = 60.0
    jam_density_veh_km: float = 111.93
    speed_limit_kmh: float = 60.0
    vehicle_length_m: float = 4.643

    amber_s: float = 4.0
    all_red_s: float = 2.0
    min_green_s: float = 5.0
    min_cycle_s: float = 30.0
    max_cycle_s: float = 120.0

    frame_rate_fps: float = 5.0
    sector_length_m: float = 15.0
    dropout_probability: float = 0.0
    id_switch_probability: float = 0.0

    accel_mps2: float = 2.5
    comfort_decel_mps2: float = 3.0
    emergency_decel_mps2: float = 6.0
    stop_buffer_m: float = 1.0
    startup_delay_s: float = 0.0

    record_interval_s: float = 0.1
    metrics_cycle_time_min: float = 3.0

    def __post_init__(self) -> None:
        if self.mode not in ("fixed", "adaptive"):
            raise ConfigError(f"mode must be 'fixed' or 'adaptive', got {self.mode!r}")
        if self.dt_s <= 0:
            raise ConfigError(f"dt_s must be positive: {self.dt_s}")
        if self.duration_s < 0:
            raise ConfigError(f"duration_s must be nonnegative: {self.duration_s}")
        if self.left_ring_vehicles < 0 or self.right_ring_vehicles < 0:
            raise ConfigError("vehicle counts must be nonnegative")
        if self.left_ring_length_m <= 0 or self.right_ring_length_m <= 0:
            raise ConfigError("ring lengths must be positive")
        if self.free_flow_speed_kmh <= 0 or self.jam_density_veh_km <= 0:
            raise ConfigError("flow model parameters must be positive")
        if self.speed_limit_kmh <= 0 or self.vehicle_length_m <= 0:
            raise ConfigError("speed limit and vehicle length must be positive")
        if not (0.0 <= self.dropout_probability < 1.0):
            raise ConfigError(f"dropout_probability must be in [0, 1): {self.dropout_probability}")
        if not (0.0 <= self.id_switch_probability < 1.0):
            raise ConfigError(f"id_switch_probability must be in [0, 1): {self.id_switch_probability}")
        if self.frame_rate_fps <= 0 or self.sector_length_m <= 0:
            raise ConfigError("camera frame rate and sector length must be positive")
        if min(self.accel_mps2, self.comfort_decel_mps2, self.emergency_decel_mps2) <= 0:
            raise ConfigError("acceleration limits must be positive")
        if self.stop_buffer_m < 0:
            raise ConfigError(f"stop_buffer_m must be nonnegative: {self.stop_buffer_m}")
        if self.startup_delay_s < 0:
            raise ConfigError(f"startup_delay_s must be nonnegative: {self.startup_delay_s}")
        if self.record_interval_s < self.dt_s:
            raise ConfigError("record_interval_s must be at least dt_s")
        if self.metrics_cycle_time_min <= 0:
            raise ConfigError("metrics_cycle_time_min must be positive")
        for name in ("left", "right"):
            split = getattr(self, f"{name}_lane_split")
            count = getattr(self, f"{name}_ring_vehicles")
            if split is not None:
                if len(split) != 2 or min(split) < 0:
                    raise ConfigError(f"{name}_lane_split must be two nonnegative counts")
                if sum(split) != count:
                    raise ConfigError(
                        f"{name}_lane_split {split} does not sum to {name}_ring_vehicles {count}"
                    )

    # -- derived quantities ------------------------------------------------

    @property
    def speed_limit_mps(self) -> float:
        return self.speed_limit_kmh / 3.6

    @property
    def n_steps(self) -> int:
        return int(round(self.duration_s / self.dt_s))

    @property
    def frame_interval_steps(self) -> int:
        """Simulation steps between camera frames (2 at 5 fps and dt 0.1 s)."""
        return max(1, int(round(1.0 / (self.frame_rate_fps * self.dt_s))))

    def lane_populations(self, ring: str) -> tuple:
        """Per-lane vehicle counts for 'left' or 'right', clockwise lane first."""
        split = getattr(self, f"{ring}_lane_split")
        if split is not None:
            return tuple(split)
        count = getattr(self, f"{ring}_ring_vehicles")
        return (count - count // 2, count // 2)


_STR_KEYS = {"label", "mode"}
_INT_KEYS = {"seed", "left_ring_vehicles", "right_ring_vehicles"}
_SPLIT_KEYS = {"left_lane_split", "right_lane_split"}
_ALL_KEYS = {f.name for f in fields(ScenarioConfig)}


def _parse_split(value: str, key: str, lineno: int):
    parts = value.split("/")
    if len(parts) != 2:
        raise ConfigError(f"line {lineno}: {key} must look like 'a/b', got {value!r}")
    try:
        return (int(parts[0]), int(parts[1]))
    except ValueError:
        raise ConfigError(f"line {lineno}: {key} must hold two integers, got {value!r}") from None


def parse_scenario(text: str, source: str = "<scenario>") -> ScenarioConfig:
    """Parse scenario text into a config, applying defaults for absent keys."""
    values: dict = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}: line {lineno}: expected 'key = value', got {raw.rstrip()!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        if key not in _ALL_KEYS:
            raise ConfigError(f"{source}: line {lineno}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"{source}: line {lineno}: duplicate key {key!r}")
        try:
            if key in _STR_KEYS:
                values[key] = value
            elif key in _INT_KEYS:
                values[key] = int(value)
            elif key in _SPLIT_KEYS:
                values[key] = _parse_split(value, key, lineno)
            else:
                values[key] = float(value)
        except ConfigError:
            raise
        except ValueError:
            raise ConfigError(f"{source}: line {lineno}: bad value for {key}: {value!r}") from None
    # A split given without an explicit count implies the count.
    for ring in ("left", "right"):
        split_key, count_key = f"{ring}_lane_split", f"{ring}_ring_vehicles"
        if split_key in values and count_key not in values:
            values[count_key] = sum(values[split_key])
    try:
        return ScenarioConfig(**values)
    except ConfigError as exc:
        raise ConfigError(f"{source}: {exc}") from None


def load_scenario(path) -> ScenarioConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_scenario(fh.read(), source=str(path))


def scenario_text(config: ScenarioConfig) -> str:
    """Serialize a config to the scenario file format (round-trips exactly)."""
    lines = []
    for f in fields(ScenarioConfig):
        value = getattr(config, f.name)
        if value is None:
            continue
        if f.name in _SPLIT_KEYS:
            value = f"{value[0]}/{value[1]}"
        lines.append(f"{f.name} = {value}")
    return "\n".join(lines) + "\n"


def save_scenario(path, config: ScenarioConfig) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(scenario_text(config))


def with_overrides(config: ScenarioConfig, **overrides) -> ScenarioConfig:
    """Return a copy with the given fields replaced (validation re-runs)."""
    return replace(config, **overrides)
