"""Greenshields speed-density-flow model: calibration and queries.

The linear speed-density relation v = v_f * (1 - k / k_j) closes into a
parabolic flow-density curve q = v * k whose vertex is the road capacity
v_f * k_j / 4. Calibration fits the line to observed (density, speed)
samples by ordinary least squares on speed; the two axis intercepts become
the model parameters.

Units are km/h for speeds, veh/km for densities and veh/h for flows
throughout. Query functions accept scalars or numpy arrays.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

UNCONGESTED = "uncongested"
CONGESTED = "congested"

# Relative slack before a requested flow counts as above capacity.
_CAPACITY_RTOL = 1e-9


class DegenerateFit(ValueError):
    """Samples cannot support a valid speed-density line."""


class FlowExceedsCapacity(ValueError):
    """Requested flow lies above the model's maximum flow."""


@dataclass(frozen=True)
class SpeedDensitySample:
    """One observed (density, speed) pair."""

    density_veh_km: float
    speed_kph: float

    def __post_init__(self) -> None:
        if self.density_veh_km < 0:
            raise ValueError(f"negative density: {self.density_veh_km}")
        if self.speed_kph < 0:
            raise ValueError(f"negative speed: {self.speed_kph}")


@dataclass(frozen=True)
class FlowModelParams:
    """Fundamental diagram parameters, the two intercepts of the fitted line.

    The defaults describe a 60 km/h urban road calibrated so that the
    capacity lands just below 1679 veh/h.
    """

    free_flow_speed_kph: float = 60.0
    jam_density_veh_km: float = 111.93

    def __post_init__(self) -> None:
        if self.free_flow_speed_kph <= 0:
            raise ValueError(f"free-flow speed must be positive: {self.free_flow_speed_kph}")
        if self.jam_density_veh_km <= 0:
            raise ValueError(f"jam density must be positive: {self.jam_density_veh_km}")


def fit_speed_density(samples: Sequence[SpeedDensitySample]) -> FlowModelParams:
    """Fit v = v_f * (1 - k / k_j) to samples by ordinary least squares.

    Raises DegenerateFit when fewer than two distinct densities are present,
    or when the fitted line has nonnegative slope or nonpositive intercept
    (no meaningful jam density / free-flow speed).
    """
    if len(samples) < 2:
        raise DegenerateFit(f"need at least 2 samples, got {len(samples)}")
    density = np.array([s.density_veh_km for s in samples], dtype=float)
    speed = np.array([s.speed_kph for s in samples], dtype=float)
    if np.unique(density).size < 2:
        raise DegenerateFit("all samples share one density; line is underdetermined")
    slope, intercept = np.polyfit(density, speed, 1)
    if slope >= 0:
        raise DegenerateFit(f"fitted slope {slope:.6g} is not negative")
    if intercept <= 0:
        raise DegenerateFit(f"fitted intercept {intercept:.6g} is not positive")
    return FlowModelParams(
        free_flow_speed_kph=float(intercept),
        jam_density_veh_km=float(-intercept / slope),
    )


def speed_at_density(params: FlowModelParams, density_veh_km):
    """Speed on the fitted line, clamped to 0 above jam density."""
    d = np.asarray(density_veh_km, dtype=float)
    if np.any(d < 0):
        raise ValueError("density must be nonnegative")
    v = params.free_flow_speed_kph * (1.0 - d / params.jam_density_veh_km)
    v = np.maximum(v, 0.0)
    return float(v) if np.ndim(density_veh_km) == 0 else v


def flow_at_density(params: FlowModelParams, density_veh_km):
    """Flow q = v(k) * k, a downward parabola with vertex at k_j / 2."""
    d = np.asarray(density_veh_km, dtype=float)
    q = speed_at_density(params, d) * d
    return float(q) if np.ndim(density_veh_km) == 0 else q


def max_flow(params: FlowModelParams) -> float:
    """Capacity of the road: the parabola vertex v_f * k_j / 4."""
    return params.free_flow_speed_kph * params.jam_density_veh_km / 4.0


def density_for_flow(params: FlowModelParams, flow_veh_h: float, branch: str = UNCONGESTED) -> float:
    """Invert the flow-density parabola on the requested side of k_j / 2.

    The uncongested branch returns the root below k_j / 2, the congested
    branch the root above. Raises FlowExceedsCapacity when the flow lies
    above capacity beyond a 1e-9 relative tolerance.
    """
    if branch not in (UNCONGESTED, CONGESTED):
        raise ValueError(f"unknown branch {branch!r}")
    if flow_veh_h < 0:
        raise ValueError(f"negative flow: {flow_veh_h}")
    cap = max_flow(params)
    if flow_veh_h > cap * (1.0 + _CAPACITY_RTOL):
        raise FlowExceedsCapacity(f"flow {flow_veh_h:.6g} veh/h exceeds capacity {cap:.6g} veh/h")
    kj = params.jam_density_veh_km
    # k^2 - kj*k + q*kj/vf = 0
    disc = kj * kj - 4.0 * flow_veh_h * kj / params.free_flow_speed_kph
    root = math.sqrt(max(disc, 0.0))
    if branch == UNCONGESTED:
        return (kj - root) / 2.0
    return (kj + root) / 2.0


def speed_for_gap(params: FlowModelParams, gap_m, vehicle_length_m: float):
    """Equilibrium speed for a bumper-to-bumper gap to the leader.

    The gap plus the vehicle length is one vehicle's share of road, so the
    local density is 1000 / (gap + length) veh/km; the returned speed is the
    fitted line evaluated there, clamped to [0, v_f]. Monotone nondecreasing
    in the gap.
    """
    if vehicle_length_m <= 0:
        raise ValueError(f"vehicle length must be positive: {vehicle_length_m}")
    g = np.asarray(gap_m, dtype=float)
    if np.any(g < 0):
        raise ValueError("gap must be nonnegative")
    density = 1000.0 / (g + vehicle_length_m)
    v = np.clip(
        params.free_flow_speed_kph * (1.0 - density / params.jam_density_veh_km),
        0.0,
        params.free_flow_speed_kph,
    )
    return float(v) if np.ndim(gap_m) == 0 else v


# -----------------------------------------------------------------------
# Calibration sample file: "density_veh_per_km,speed_kph" rows, optional
# header line, '#' comments ignored.
# -----------------------------------------------------------------------

def load_samples(path) -> list[SpeedDensitySample]:
    """Read calibration samples from a comma-separated text file."""
    samples: list[SpeedDensitySample] = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            parts = [p.strip() for p in line.split(",")]
            if len(parts) != 2:
                raise ValueError(f"{path}: line {lineno}: expected 2 comma-separated fields")
            try:
                density, speed = float(parts[0]), float(parts[1])
            except ValueError:
                if lineno == 1:
                    continue  # header line
                raise ValueError(f"{path}: line {lineno}: not numeric: {line!r}") from None
            samples.append(SpeedDensitySample(density, speed))
    return samples


def save_params(path, params: FlowModelParams) -> None:
    """Write fitted parameters plus the implied capacity as key = value lines."""
    lines = [
        f"free_flow_speed_kmh = {params.free_flow_speed_kph:.6f}",
        f"jam_density_veh_km = {params.jam_density_veh_km:.6f}",
        f"max_flow_veh_h = {max_flow(params):.6f}",
    ]
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
