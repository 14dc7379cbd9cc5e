"""Webster green-time computation and the six-state signal phase machine.

The cycle alternates the two roads, A and B, with a 4 s amber and a 2 s
all-red clearance between conflicting greens:

    GreenA -> AmberA -> AllRed1 -> GreenB -> AmberB -> AllRed2 -> GreenA

Green times come from Webster's split of the ideal cycle time
C0 = 1.5 * L / |1 - Y|, where Y is the sum of the two roads' flow ratios
and L the per-cycle lost time. The absolute values keep the schedule
finite when a road is oversaturated (Y >= 1); C0 is additionally capped so
cycles stay realistic near the singularity.

In adaptive mode each road's flow is measured over its own window, from
its amber onset to the end of its next green, and the schedule for the
next cycle is recomputed once per cycle. In fixed mode the initial
schedule never changes.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Callable, Mapping

from crossflow.sensing import MeasurementWindow, realtime_flow

ROAD_A = "A"
ROAD_B = "B"

MODE_FIXED = "fixed"
MODE_ADAPTIVE = "adaptive"

GREEN = "green"
AMBER = "amber"
RED = "red"


class ZeroCapacity(ValueError):
    """Flow ratio requested against a nonpositive capacity."""


class BothZero(ValueError):
    """Webster schedule requested with zero demand on both roads."""


@dataclass(frozen=True)
class SignalTiming:
    """Fixed signal intervals and schedule guards.

    The ideal cycle is clamped to [min_cycle_s, max_cycle_s] before the
    green split: the cap absorbs the oversaturation singularity, the floor
    keeps the lost-time share of very light-demand cycles realistic.
    """

    amber_s: float = 4.0
    all_red_s: float = 2.0
    min_green_s: float = 5.0
    min_cycle_s: float = 30.0
    max_cycle_s: float = 120.0

    def __post_init__(self) -> None:
        if self.amber_s <= 0 or self.all_red_s <= 0:
            raise ValueError("amber and all-red intervals must be positive")
        if self.min_green_s <= 0:
            raise ValueError(f"minimum green must be positive: {self.min_green_s}")
        if not self.lost_time_s < self.min_cycle_s < self.max_cycle_s:
            raise ValueError("cycle bounds must satisfy lost time < min cycle < max cycle")

    @property
    def lost_time_s(self) -> float:
        """Per-cycle time serving no movement: both ambers plus both all-reds."""
        return 2.0 * (self.amber_s + self.all_red_s)


@dataclass(frozen=True)
class WebsterComputation:
    """All intermediate quantities of one Webster schedule evaluation."""

    flow_ratio_a: float
    flow_ratio_b: float
    ratio_sum: float
    lost_time_s: float
    ideal_cycle_s: float
    green_a_s: float
    green_b_s: float
    cycle_s: float


def flow_ratio(realtime_flow_veh_s: float, max_flow_veh_s: float) -> float:
    """Measured flow divided by capacity, both in veh/s."""
    if max_flow_veh_s <= 0:
        raise ZeroCapacity(f"capacity must be positive: {max_flow_veh_s}")
    if realtime_flow_veh_s < 0:
        raise ValueError(f"negative flow: {realtime_flow_veh_s}")
    return realtime_flow_veh_s / max_flow_veh_s


def road_flow(lane_flow_1: float, lane_flow_2: float) -> float:
    """Governing flow of a road: the larger of its two directional lanes."""
    if lane_flow_1 < 0 or lane_flow_2 < 0:
        raise ValueError("lane flows must be nonnegative")
    return max(lane_flow_1, lane_flow_2)


def webster_schedule(y_a: float, y_b: float, timing: SignalTiming) -> WebsterComputation:
    """Compute green times from the two roads' flow ratios.

    Raises BothZero when both ratios are zero (callers fall back to the
    previous schedule). The ideal cycle is clamped to the timing's cycle
    bounds before splitting, which also absorbs the Y = 1 singularity;
    each green is floored at timing.min_green_s so an idle road still
    clears.
    """
    if y_a < 0 or y_b < 0:
        raise ValueError(f"flow ratios must be nonnegative: {y_a}, {y_b}")
    ratio_sum = y_a + y_b
    if ratio_sum <= 0:
        raise BothZero("both roads report zero flow")
    lost = timing.lost_time_s
    gap = abs(1.0 - ratio_sum)
    if gap <= 1e-12:
        ideal = timing.max_cycle_s
    else:
        ideal = min(max(1.5 * lost / gap, timing.min_cycle_s), timing.max_cycle_s)
    usable = abs(ideal - lost)
    green_a = max((y_a / ratio_sum) * usable, timing.min_green_s)
    green_b = max((y_b / ratio_sum) * usable, timing.min_green_s)
    cycle = green_a + green_b + 2.0 * (timing.amber_s + timing.all_red_s)
    return WebsterComputation(y_a, y_b, ratio_sum, lost, ideal, green_a, green_b, cycle)


def fixed_time_schedule(
    initial_vehicle_counts: Mapping[str, float],
    params,
    road_lengths_m: Mapping[str, float],
    timing: SignalTiming,
) -> WebsterComputation:
    """Webster schedule from the vehicle amount initially present on each road.

    Each road's count over its ring length gives a density, the fundamental
    diagram turns that into a flow, and the flow over capacity gives the
    ratio fed to webster_schedule. This is the fixed-time baseline and the
    first cycle of the adaptive controller.
    """
    from crossflow import flow_model

    capacity = flow_model.max_flow(params)
    ratios = {}
    for road in (ROAD_A, ROAD_B):
        count = initial_vehicle_counts[road]
        if count < 0:
            raise ValueError(f"negative vehicle count for road {road}: {count}")
        density = count / (road_lengths_m[road] / 1000.0)
        ratios[road] = flow_model.flow_at_density(params, density) / capacity
    return webster_schedule(ratios[ROAD_A], ratios[ROAD_B], timing)


# -----------------------------------------------------------------------
# Phase machine
# -----------------------------------------------------------------------

class Phase(enum.Enum):
    GREEN_A = "GreenA"
    AMBER_A = "AmberA"
    ALL_RED_1 = "AllRed1"
    GREEN_B = "GreenB"
    AMBER_B = "AmberB"
    ALL_RED_2 = "AllRed2"


_NEXT_PHASE = {
    Phase.GREEN_A: Phase.AMBER_A,
    Phase.AMBER_A: Phase.ALL_RED_1,
    Phase.ALL_RED_1: Phase.GREEN_B,
    Phase.GREEN_B: Phase.AMBER_B,
    Phase.AMBER_B: Phase.ALL_RED_2,
    Phase.ALL_RED_2: Phase.GREEN_A,
}

_SIGNAL_VIEW = {
    Phase.GREEN_A: {ROAD_A: GREEN, ROAD_B: RED},
    Phase.AMBER_A: {ROAD_A: AMBER, ROAD_B: RED},
    Phase.ALL_RED_1: {ROAD_A: RED, ROAD_B: RED},
    Phase.GREEN_B: {ROAD_A: RED, ROAD_B: GREEN},
    Phase.AMBER_B: {ROAD_A: RED, ROAD_B: AMBER},
    Phase.ALL_RED_2: {ROAD_A: RED, ROAD_B: RED},
}


def signal_for_road(phase: Phase, road: str) -> str:
    """What the given road's drivers see during a phase."""
    return _SIGNAL_VIEW[phase][road]


class EventKind(enum.Enum):
    AMBER_START = "amber_start"
    GREEN_END = "green_end"
    CYCLE_END = "cycle_end"


@dataclass(frozen=True)
class PhaseEvent:
    kind: EventKind
    road: str | None
    time_s: float


@dataclass
class PhaseState:
    """Current phase, elapsed time within it, and the active green schedule."""

    phase: Phase = Phase.GREEN_A
    time_in_phase: float = 0.0
    green_a_s: float = 5.0
    green_b_s: float = 5.0


def _phase_duration(state: PhaseState, timing: SignalTiming) -> float:
    if state.phase is Phase.GREEN_A:
        return state.green_a_s
    if state.phase is Phase.GREEN_B:
        return state.green_b_s
    if state.phase in (Phase.AMBER_A, Phase.AMBER_B):
        return timing.amber_s
    return timing.all_red_s


def step_phase(
    state: PhaseState,
    dt: float,
    timing: SignalTiming,
    schedule_provider: Callable[[], tuple],
    now_s: float = 0.0,
) -> list[PhaseEvent]:
    """Advance the phase machine by dt seconds, mutating the state.

    Emits AmberStart/GreenEnd events when a green expires (same instant:
    the green ends and its amber begins) and CycleEnd when the second
    all-red expires. At every cycle boundary the provider is called once
    for the next cycle's (green_a, green_b). Event timestamps are exact,
    not quantized to dt; leftover time carries across transitions.
    """
    if dt <= 0:
        raise ValueError(f"dt must be positive: {dt}")
    events: list[PhaseEvent] = []
    remaining = float(dt)
    while True:
        duration = _phase_duration(state, timing)
        if duration <= 0:
            raise ValueError(f"phase {state.phase.value} has nonpositive duration {duration}")
        room = duration - state.time_in_phase
        if remaining < room - 1e-9:
            state.time_in_phase += remaining
            break
        remaining -= room
        if remaining < 0.0:
            remaining = 0.0
        at = now_s + (dt - remaining)
        current = state.phase
        if current is Phase.GREEN_A:
            events.append(PhaseEvent(EventKind.GREEN_END, ROAD_A, at))
            events.append(PhaseEvent(EventKind.AMBER_START, ROAD_A, at))
        elif current is Phase.GREEN_B:
            events.append(PhaseEvent(EventKind.GREEN_END, ROAD_B, at))
            events.append(PhaseEvent(EventKind.AMBER_START, ROAD_B, at))
        elif current is Phase.ALL_RED_2:
            events.append(PhaseEvent(EventKind.CYCLE_END, None, at))
            green_a, green_b = schedule_provider()
            state.green_a_s = float(green_a)
            state.green_b_s = float(green_b)
        state.phase = _NEXT_PHASE[current]
        state.time_in_phase = 0.0
        if remaining <= 0.0:
            break
    return events


# -----------------------------------------------------------------------
# Controller: phase machine plus per-road measurement windows
# -----------------------------------------------------------------------

@dataclass(frozen=True)
class ScheduleRecord:
    """Schedule log row: the computation that governs one cycle."""

    cycle_index: int
    computation: WebsterComputation


@dataclass(frozen=True)
class WindowRow:
    """Count log row: one lane's tally over one road window."""

    road_id: str
    lane_id: str
    start_s: float
    end_s: float
    vehicle_count: int
    flow_veh_s: float


class SignalController:
    """Drives the phase machine and, in adaptive mode, the Webster loop.

    Lane counter tallies are supplied by the caller on every step; the
    controller snapshots them at each road's amber onset and green end to
    form that road's measurement window. Recomputation happens once per
    cycle, at the cycle boundary, using the most recently closed window of
    each road; with zero measured demand the previous schedule is kept.
    """

    def __init__(
        self,
        mode: str,
        timing: SignalTiming,
        initial: WebsterComputation,
        capacity_veh_s: float,
        lanes_by_road: Mapping[str, tuple],
    ):
        if mode not in (MODE_FIXED, MODE_ADAPTIVE):
            raise ValueError(f"unknown controller mode {mode!r}")
        if capacity_veh_s <= 0:
            raise ZeroCapacity(f"capacity must be positive: {capacity_veh_s}")
        self.mode = mode
        self.timing = timing
        self.capacity_veh_s = capacity_veh_s
        self.lanes_by_road = {road: tuple(lanes) for road, lanes in lanes_by_road.items()}
        self.current = initial
        self.state = PhaseState(
            phase=Phase.GREEN_A,
            time_in_phase=0.0,
            green_a_s=initial.green_a_s,
            green_b_s=initial.green_b_s,
        )
        self.cycle_index = 1
        self.schedule_records: list[ScheduleRecord] = [ScheduleRecord(1, initial)]
        self.windows: list[MeasurementWindow] = []
        self.window_rows: list[WindowRow] = []
        self.events: list[PhaseEvent] = []
        self._open_windows: dict[str, tuple] = {}
        self._last_flow: dict[str, float] = {}

    def signal_for_road(self, road: str) -> str:
        return signal_for_road(self.state.phase, road)

    def advance(self, dt: float, now_s: float, lane_counts: Mapping[str, int]) -> list[PhaseEvent]:
        """Advance by dt from now_s; lane_counts are current counter tallies."""
        events = step_phase(self.state, dt, self.timing, self._next_cycle, now_s=now_s)
        for event in events:
            if event.kind is EventKind.GREEN_END:
                self._close_window(event.road, event.time_s, lane_counts)
            elif event.kind is EventKind.AMBER_START:
                self._open_window(event.road, event.time_s, lane_counts)
        self.events.extend(events)
        return events

    # -- internals ------------------------------------------------------

    def _open_window(self, road: str, time_s: float, lane_counts: Mapping[str, int]) -> None:
        snapshot = {lane: int(lane_counts[lane]) for lane in self.lanes_by_road[road]}
        self._open_windows[road] = (time_s, snapshot)

    def _close_window(self, road: str, time_s: float, lane_counts: Mapping[str, int]) -> None:
        opened = self._open_windows.pop(road, None)
        if opened is None:
            return  # first green of the run ends before any window opened
        start_s, snapshot = opened
        if time_s <= start_s:
            return
        deltas = {lane: int(lane_counts[lane]) - snapshot[lane] for lane in snapshot}
        window = MeasurementWindow(road, start_s, time_s, max(deltas.values()))
        self.windows.append(window)
        duration = time_s - start_s
        lane_flows = []
        for lane in self.lanes_by_road[road]:
            lane_flows.append(deltas[lane] / duration)
            self.window_rows.append(
                WindowRow(road, lane, start_s, time_s, deltas[lane], deltas[lane] / duration)
            )
        self._last_flow[road] = realtime_flow(window)
        assert abs(self._last_flow[road] - road_flow(lane_flows[0], lane_flows[1])) < 1e-12

    def _next_cycle(self) -> tuple:
        """Schedule provider for step_phase; called once per cycle boundary."""
        self.cycle_index += 1
        if self.mode == MODE_ADAPTIVE:
            flow_a = self._last_flow.get(ROAD_A)
            flow_b = self._last_flow.get(ROAD_B)
            if flow_a is not None and flow_b is not None:
                y_a = flow_ratio(flow_a, self.capacity_veh_s)
                y_b = flow_ratio(flow_b, self.capacity_veh_s)
                if y_a + y_b > 0:
                    self.current = webster_schedule(y_a, y_b, self.timing)
                # with both windows empty the previous schedule is retained
        self.schedule_records.append(ScheduleRecord(self.cycle_index, self.current))
        return self.current.green_a_s, self.current.green_b_s


# -----------------------------------------------------------------------
# Schedule log: one record per cycle as comma-separated values
# -----------------------------------------------------------------------

SCHEDULE_LOG_HEADER = (
    "cycle_index,flow_ratio_a,flow_ratio_b,ratio_sum,ideal_cycle_s,green_a_s,green_b_s,cycle_s"
)


def schedule_log_lines(records) -> list[str]:
    lines = [SCHEDULE_LOG_HEADER]
    for record in records:
        c = record.computation
        lines.append(
            f"{record.cycle_index},{c.flow_ratio_a:.6f},{c.flow_ratio_b:.6f},"
            f"{c.ratio_sum:.6f},{c.ideal_cycle_s:.6f},{c.green_a_s:.6f},"
            f"{c.green_b_s:.6f},{c.cycle_s:.6f}"
        )
    return lines


WINDOW_LOG_HEADER = "road_id,lane_id,start_s,end_s,vehicle_count,flow_veh_s"


def window_log_lines(rows) -> list[str]:
    lines = [WINDOW_LOG_HEADER]
    for row in rows:
        lines.append(
            f"{row.road_id},{row.lane_id},{row.start_s:.6f},{row.end_s:.6f},"
            f"{row.vehicle_count},{row.flow_veh_s:.6f}"
        )
    return lines
