"""Deterministic fixed-step microsimulation of a two-ring intersection world.

The world holds two ring roads, A (left) and B (right), crossing at a
single signalized intersection; the second geometric crossing is grade
separated and adds length but no conflict. Each ring carries two
directional lanes and each lane is an independent closed loop that passes
its stop line, placed halfway around the loop, once per lap. Vehicles
never overtake or change lanes, so the cyclic order fixed at placement is
permanent and positions can be kept unwrapped.

Drivers slow down only at the intersection: on open road they cruise at
the speed limit. The car-following constraint is the larger of the
Greenshields equilibrium speed for the bumper-to-bumper gap, which
governs queueing and queue discharge at short gaps, and the comfortable
braking envelope over the jam spacing, which lets the limit be reached
once the gap clears about fifty meters; the minimum against the limit
caps everything. On a red, or an amber the vehicle can comfortably stop
for, the desired speed is further capped by the braking parabola toward
a point one stop buffer short of the line. Speeds move toward the
desired value under acceleration and emergency deceleration limits. The
stop-or-go choice is made once, when amber begins: vehicles that can
stop comfortably commit to the parabola, the rest proceed and clear the
line well inside the amber interval, so nothing enters on red and
vehicles already past the line (the committed zone) are unaffected by
phase changes.

Drivers all follow the same law, and that law can include the varying
startup hesitation human queues show: with startup_delay_s > 0, a
vehicle launching from standstill first sits for a seeded uniform
random reaction time up to that bound, redrawn at every launch.
Idealized robotic drivers (the default, delay 0) discharge queues
identically cycle after cycle, so platoons entrain to a fixed signal
and results become an artifact of cycle versus lap-time arithmetic;
the per-launch jitter re-randomizes platoon structure at every stop
without touching open-road driving.

Every run is reproducible: the only randomness is the seeded camera
dropout and the seeded speed noise, and all state advances in a fixed
order. A negative bumper-to-bumper gap raises CollisionError rather
than being corrected.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from crossflow import flow_model
from crossflow.controller import (
    BothZero,
    MODE_ADAPTIVE,
    ROAD_A,
    ROAD_B,
    RED,
    AMBER,
    ScheduleRecord,
    SignalController,
    SignalTiming,
    WebsterComputation,
    fixed_time_schedule,
    signal_for_road,
)
from crossflow.scenario import ScenarioConfig
from crossflow.sensing import (
    CounterState,
    SectorLayout,
    VirtualCamera,
    VirtualCameraConfig,
    update_counter,
)


class Overcapacity(ValueError):
    """More vehicles than a lane can hold at jam spacing."""


class CollisionError(RuntimeError):
    """Two vehicles overlapped; the dynamics are broken, never patched."""


@dataclass(frozen=True)
class Vehicle:
    """Snapshot of one vehicle (positions are loop coordinates in meters)."""

    vehicle_id: int
    lane_id: str
    position_m: float
    speed_mps: float
    length_m: float


@dataclass
class LaneState:
    """One directional lane: a closed loop with a stop line.

    positions_u are unwrapped front-bumper coordinates, ascending with the
    fixed following order; position_m = positions_u % length_m.
    """

    lane_id: str
    road: str
    length_m: float
    stop_line_m: float
    vehicle_ids: np.ndarray
    positions_u: np.ndarray
    speeds: np.ndarray

    @property
    def n_vehicles(self) -> int:
        return int(self.vehicle_ids.size)

    def gaps(self, vehicle_length_m: float) -> np.ndarray:
        """Bumper-to-bumper gap to each vehicle's leader."""
        if self.n_vehicles < 2:
            return np.full(self.n_vehicles, self.length_m - vehicle_length_m)
        lead = np.roll(self.positions_u, -1)
        lead[-1] += self.length_m
        return lead - self.positions_u - vehicle_length_m

    def distances_to_stop(self) -> np.ndarray:
        return (self.stop_line_m - self.positions_u) % self.length_m


@dataclass
class SafetyStats:
    """Invariant bookkeeping collected every step."""

    min_gap_m: float = float("inf")
    red_crossings: int = 0
    initial_lane_counts: dict = field(default_factory=dict)
    final_lane_counts: dict = field(default_factory=dict)


@dataclass
class SpeedTrace:
    """Per-vehicle speed samples (m/s) on a fixed recording interval."""

    interval_s: float
    vehicle_ids: np.ndarray
    samples: np.ndarray  # shape (n_samples, n_vehicles)

    @property
    def n_samples(self) -> int:
        return int(self.samples.shape[0])

    @property
    def n_vehicles(self) -> int:
        return int(self.samples.shape[1])


@dataclass
class RunResult:
    """Everything a run produces for the metrics and report stages."""

    config: ScenarioConfig
    trace: SpeedTrace
    schedule_records: list
    window_rows: list
    windows: list
    events: list
    lane_counter_totals: dict
    stats: SafetyStats
    wall_time_s: float


LANE_IDS = ("A1", "A2", "B1", "B2")


def _lane_plan(config: ScenarioConfig) -> list[tuple]:
    """(lane_id, road, length, population) for the four directional lanes."""
    left = config.lane_populations("left")
    right = config.lane_populations("right")
    return [
        ("A1", ROAD_A, config.left_ring_length_m, left[0]),
        ("A2", ROAD_A, config.left_ring_length_m, left[1]),
        ("B1", ROAD_B, config.right_ring_length_m, right[0]),
        ("B2", ROAD_B, config.right_ring_length_m, right[1]),
    ]


class World:
    """Mutable simulation state; advance with step()."""

    def __init__(self, config: ScenarioConfig):
        self.config = config
        self.params = flow_model.FlowModelParams(
            free_flow_speed_kph=config.free_flow_speed_kmh,
            jam_density_veh_km=config.jam_density_veh_km,
        )
        self.timing = SignalTiming(
            amber_s=config.amber_s,
            all_red_s=config.all_red_s,
            min_green_s=config.min_green_s,
            min_cycle_s=config.min_cycle_s,
            max_cycle_s=config.max_cycle_s,
        )
        self.step_index = 0
        self.stats = SafetyStats()

        jam_spacing_m = 1000.0 / config.jam_density_veh_km
        queue_region_m = 2.0 * config.sector_length_m
        self.lanes: list[LaneState] = []
        next_id = 0
        for lane_id, road, length, population in _lane_plan(config):
            if population > 0:
                spacing = length / population
                if spacing < jam_spacing_m:
                    raise Overcapacity(
                        f"lane {lane_id}: {population} vehicles need {population * jam_spacing_m:.0f} m "
                        f"but the loop is {length:.0f} m"
                    )
            ids = np.arange(next_id, next_id + population, dtype=np.int64)
            next_id += population
            positions = np.arange(population, dtype=float) * (length / population if population else 0.0)
            lane = LaneState(
                lane_id=lane_id,
                road=road,
                length_m=length,
                stop_line_m=length / 2.0,
                vehicle_ids=ids,
                positions_u=positions,
                speeds=np.empty(population),
            )
            # Cruise at the limit except in the stop queue region by the line.
            queued = lane.distances_to_stop() <= queue_region_m
            lane.speeds[:] = np.where(queued, 0.0, config.speed_limit_mps)
            self.lanes.append(lane)
            self.stats.initial_lane_counts[lane_id] = population
        self.n_vehicles = next_id

        counts = {ROAD_A: config.left_ring_vehicles, ROAD_B: config.right_ring_vehicles}
        lengths = {ROAD_A: config.left_ring_length_m, ROAD_B: config.right_ring_length_m}
        try:
            initial = fixed_time_schedule(counts, self.params, lengths, self.timing)
        except BothZero:
            # Empty world: idle at minimum greens.
            g = self.timing.min_green_s
            lost = self.timing.lost_time_s
            initial = WebsterComputation(0.0, 0.0, 0.0, lost, lost, g, g, 2 * g + lost)
        capacity_veh_s = flow_model.max_flow(self.params) / 3600.0
        self.controller = SignalController(
            mode=config.mode,
            timing=self.timing,
            initial=initial,
            capacity_veh_s=capacity_veh_s,
            lanes_by_road={ROAD_A: ("A1", "A2"), ROAD_B: ("B1", "B2")},
        )

        window_m = 2.0 * config.sector_length_m
        self.cameras: dict[str, VirtualCamera] = {}
        self.counters: dict[str, CounterState] = {}
        self.layouts: dict[str, SectorLayout] = {}
        for index, lane in enumerate(self.lanes):
            cam_config = VirtualCameraConfig(
                lane_id=lane.lane_id,
                visible_window=(-window_m, 0.0),
                frame_rate_fps=config.frame_rate_fps,
                dropout_probability=config.dropout_probability,
                id_switch_probability=config.id_switch_probability,
                rng_seed=config.seed * 1009 + index,
            )
            self.cameras[lane.lane_id] = VirtualCamera(cam_config)
            self.counters[lane.lane_id] = CounterState(frame_rate_fps=config.frame_rate_fps)
            self.layouts[lane.lane_id] = SectorLayout(
                lane_id=lane.lane_id,
                sector1_start_m=-window_m,
                boundary_m=-config.sector_length_m,
                sector2_end_m=0.0,
            )
        self._window_m = window_m
        self._jam_gap_m = 1000.0 / config.jam_density_veh_km - config.vehicle_length_m
        self._driver_rngs = {}
        self._dab_caps = {}
        self._dab_until = {}
        for index, lane in enumerate(self.lanes):
            self._driver_rngs[lane.lane_id] = np.random.default_rng(config.seed * 4099 + index)
            self._dab_caps[lane.lane_id] = np.full(lane.n_vehicles, config.speed_limit_mps)
            self._dab_until[lane.lane_id] = np.zeros(lane.n_vehicles)
        self._prev_views = {
            ROAD_A: signal_for_road(self.controller.state.phase, ROAD_A),
            ROAD_B: signal_for_road(self.controller.state.phase, ROAD_B),
        }
        # Per-lane stop commitments for the current amber, None outside amber.
        self._amber_commit: dict[str, Optional[np.ndarray]] = {
            lane.lane_id: None for lane in self.lanes
        }

    # -- queries ----------------------------------------------------------

    @property
    def clock_s(self) -> float:
        return self.step_index * self.config.dt_s

    def vehicles(self) -> list[Vehicle]:
        """Snapshot of every vehicle, lane by lane."""
        out = []
        for lane in self.lanes:
            for vid, pos_u, speed in zip(lane.vehicle_ids, lane.positions_u, lane.speeds):
                out.append(
                    Vehicle(int(vid), lane.lane_id, float(pos_u % lane.length_m),
                            float(speed), self.config.vehicle_length_m)
                )
        return out

    def lane_counts(self) -> dict:
        return {lane_id: counter.count for lane_id, counter in self.counters.items()}

    # -- dynamics ---------------------------------------------------------

    def _stop_targets(self, lane: LaneState) -> np.ndarray:
        """Distance to the hold point one stop buffer short of the line."""
        return np.maximum(lane.distances_to_stop() - self.config.stop_buffer_m, 0.0)

    def _can_stop(self, lane: LaneState) -> np.ndarray:
        """Who can stop at the hold point under comfortable deceleration."""
        return lane.speeds**2 <= 2.0 * self.config.comfort_decel_mps2 * self._stop_targets(lane)

    def following_speeds(self, lane: LaneState) -> np.ndarray:
        """Car-following constraint per vehicle, before the signal view.

        The larger of the fundamental-diagram equilibrium speed for the
        gap and the comfortable stop envelope over the jam spacing, capped
        at the speed limit. Equals the limit on open road.
        """
        cfg = self.config
        # An overlap is caught after the move; the speed law just sees 0.
        gaps = np.maximum(lane.gaps(cfg.vehicle_length_m), 0.0)
        v_eq = flow_model.speed_for_gap(self.params, gaps, cfg.vehicle_length_m) / 3.6
        headroom = np.maximum(gaps - self._jam_gap_m, 0.0)
        v_brake = np.sqrt(2.0 * cfg.comfort_decel_mps2 * headroom)
        return np.minimum(np.maximum(v_eq, v_brake), cfg.speed_limit_mps)

    def desired_speeds(self, lane: LaneState, view: str,
                       amber_commit: Optional[np.ndarray] = None) -> np.ndarray:
        """Desired speed per vehicle from gap law, limit and signal view.

        During amber, amber_commit marks the vehicles that committed to
        stopping when the amber began; without it, the commitment is
        evaluated from the current state.
        """
        cfg = self.config
        if lane.n_vehicles == 0:
            return np.empty(0)
        v_des = self.following_speeds(lane)
        if cfg.slowdown_rate_hz > 0.0:
            active = self._dab_until[lane.lane_id] > self.clock_s
            v_des = np.where(
                active, np.minimum(v_des, self._dab_caps[lane.lane_id]), v_des
            )
        if view in (RED, AMBER):
            target = self._stop_targets(lane)
            v_stop = np.sqrt(2.0 * cfg.comfort_decel_mps2 * target)
            np.minimum(v_stop, target / cfg.dt_s, out=v_stop)
            if view == RED:
                np.minimum(v_des, v_stop, out=v_des)
            else:
                stopping = amber_commit if amber_commit is not None else self._can_stop(lane)
                v_des = np.where(stopping, np.minimum(v_des, v_stop), v_des)
        return v_des

    def step(self, record_into: Optional[np.ndarray] = None) -> None:
        """Advance the world by one dt.

        Order per step: sense on camera frames, move vehicles under the
        phase valid at the step start, then advance the signal clock. When
        record_into is given, post-move speeds are written there lane by
        lane (it must have n_vehicles slots).
        """
        cfg = self.config
        dt = cfg.dt_s
        now = self.clock_s

        if self.step_index % cfg.frame_interval_steps == 0:
            self._sense(self.step_index // cfg.frame_interval_steps)

        if cfg.slowdown_rate_hz > 0.0:
            for lane in self.lanes:
                if lane.n_vehicles:
                    self._draw_slowdowns(lane, now, dt)

        views = {
            ROAD_A: self.controller.signal_for_road(ROAD_A),
            ROAD_B: self.controller.signal_for_road(ROAD_B),
        }
        for lane in self.lanes:
            view = views[lane.road]
            if view == AMBER and self._prev_views[lane.road] != AMBER:
                self._amber_commit[lane.lane_id] = self._can_stop(lane)
            elif view != AMBER:
                self._amber_commit[lane.lane_id] = None
        self._prev_views = views

        offset = 0
        for lane in self.lanes:
            self._move_lane(lane, views[lane.road], dt)
            if record_into is not None and lane.n_vehicles:
                record_into[offset:offset + lane.n_vehicles] = lane.speeds
            offset += lane.n_vehicles

        self.controller.advance(dt, now, self.lane_counts())
        self.step_index += 1

    def _draw_slowdowns(self, lane: LaneState, now: float, dt: float) -> None:
        """Trigger brief random eases of the throttle (seeded per lane)."""
        cfg = self.config
        rng = self._driver_rngs[lane.lane_id]
        triggered = rng.random(lane.n_vehicles) < cfg.slowdown_rate_hz * dt
        if triggered.any():
            caps = self._dab_caps[lane.lane_id]
            until = self._dab_until[lane.lane_id]
            # Ease off from the current speed, but never crawl on open road.
            eased = np.maximum(lane.speeds - cfg.slowdown_mps, 2.0)
            caps[triggered] = eased[triggered]
            until[triggered] = now + cfg.slowdown_duration_s

    def _move_lane(self, lane: LaneState, view: str, dt: float) -> None:
        if lane.n_vehicles == 0:
            return
        cfg = self.config
        v_des = self.desired_speeds(lane, view, self._amber_commit[lane.lane_id])
        dv = np.clip(v_des - lane.speeds, -cfg.emergency_decel_mps2 * dt, cfg.accel_mps2 * dt)
        v_new = np.clip(lane.speeds + dv, 0.0, cfg.speed_limit_mps)
        moved = v_new * dt
        if view == RED:
            crossings = int(np.count_nonzero(moved > lane.distances_to_stop()))
            self.stats.red_crossings += crossings
        lane.positions_u += moved
        lane.speeds[:] = v_new
        if lane.n_vehicles > 1:
            min_gap = float(lane.gaps(cfg.vehicle_length_m).min())
            if min_gap < self.stats.min_gap_m:
                self.stats.min_gap_m = min_gap
            if min_gap < 0.0:
                raise CollisionError(
                    f"negative gap {min_gap:.3f} m on lane {lane.lane_id} "
                    f"at t={self.clock_s + dt:.1f} s"
                )

    def _sense(self, frame_index: int) -> None:
        for lane in self.lanes:
            if lane.n_vehicles:
                d = lane.distances_to_stop()
                mask = d <= self._window_m
                visible = [
                    (int(vid), -float(dist))
                    for vid, dist in zip(lane.vehicle_ids[mask], d[mask])
                ]
            else:
                visible = []
            observations = self.cameras[lane.lane_id].observe(visible, frame_index)
            update_counter(self.counters[lane.lane_id], self.layouts[lane.lane_id],
                           observations, frame_index)


def init_scenario(config: ScenarioConfig) -> World:
    """Build the initial world: uniform placement, signal at GreenA."""
    return World(config)


def run(config: ScenarioConfig) -> RunResult:
    """Execute a full scenario and return its artifacts."""
    world = init_scenario(config)
    cfg = config
    record_every = max(1, int(round(cfg.record_interval_s / cfg.dt_s)))
    n_samples = cfg.n_steps // record_every
    samples = np.empty((n_samples, world.n_vehicles))
    row = np.empty(world.n_vehicles)

    started = time.perf_counter()
    sample_index = 0
    for step in range(cfg.n_steps):
        recording = (step + 1) % record_every == 0
        world.step(record_into=row if recording else None)
        if recording:
            samples[sample_index] = row
            sample_index += 1
    wall = time.perf_counter() - started

    for lane in world.lanes:
        world.stats.final_lane_counts[lane.lane_id] = lane.n_vehicles

    vehicle_ids = np.concatenate(
        [lane.vehicle_ids for lane in world.lanes]
    ) if world.n_vehicles else np.empty(0, dtype=np.int64)
    trace = SpeedTrace(
        interval_s=cfg.record_interval_s,
        vehicle_ids=vehicle_ids,
        samples=samples[:sample_index],
    )
    return RunResult(
        config=config,
        trace=trace,
        schedule_records=list(world.controller.schedule_records),
        window_rows=list(world.controller.window_rows),
        windows=list(world.controller.windows),
        events=list(world.controller.events),
        lane_counter_totals=world.lane_counts(),
        stats=world.stats,
        wall_time_s=wall,
    )


TRACE_HEADER = "time_s,vehicle_id,speed_mps"


def trace_lines(trace: SpeedTrace) -> list[str]:
    """Serialize a speed trace as time_s,vehicle_id,speed_mps rows."""
    lines = [TRACE_HEADER]
    ids = trace.vehicle_ids
    for sample in range(trace.n_samples):
        t = (sample + 1) * trace.interval_s
        row = trace.samples[sample]
        for column in range(trace.n_vehicles):
            lines.append(f"{t:.1f},{int(ids[column])},{row[column]:.6f}")
    return lines
