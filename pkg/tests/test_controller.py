"""Controller: Webster computation, phase machine, measurement windows."""

import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from crossflow.controller import (
    AMBER,
    BothZero,
    EventKind,
    GREEN,
    MODE_ADAPTIVE,
    MODE_FIXED,
    Phase,
    PhaseState,
    RED,
    ROAD_A,
    ROAD_B,
    SignalController,
    SignalTiming,
    ZeroCapacity,
    fixed_time_schedule,
    flow_ratio,
    road_flow,
    schedule_log_lines,
    signal_for_road,
    step_phase,
    webster_schedule,
)
from crossflow.flow_model import FlowModelParams, density_for_flow, max_flow

TIMING = SignalTiming()


class TestFlowRatio:
    def test_half_of_capacity(self):
        capacity = 1679.0 / 3600.0
        assert flow_ratio(0.2333, capacity) == pytest.approx(0.5003, abs=1e-3)

    def test_zero(self):
        assert flow_ratio(0.0, 0.5) == 0.0

    def test_at_capacity(self):
        assert flow_ratio(0.25, 0.25) == 1.0

    def test_zero_capacity(self):
        with pytest.raises(ZeroCapacity):
            flow_ratio(0.1, 0.0)


class TestRoadFlow:
    def test_max_of_two(self):
        assert road_flow(0.10, 0.15) == 0.15
        assert road_flow(0.2, 0.2) == 0.2
        assert road_flow(0.0, 0.05) == 0.05

    def test_rejects_negative(self):
        with pytest.raises(ValueError):
            road_flow(-0.1, 0.2)


class TestWebsterSchedule:
    def test_hand_evaluation(self):
        c = webster_schedule(0.3, 0.3, TIMING)
        assert c.ratio_sum == pytest.approx(0.6)
        assert c.lost_time_s == 12.0
        assert c.ideal_cycle_s == pytest.approx(45.0)
        assert c.green_a_s == pytest.approx(16.5)
        assert c.green_b_s == pytest.approx(16.5)
        assert c.cycle_s == pytest.approx(45.0)

    def test_published_balanced_row(self):
        c = webster_schedule(0.3558, 0.3572, TIMING)
        assert c.green_a_s == pytest.approx(25.3, abs=0.05)
        assert c.green_b_s == pytest.approx(25.4, abs=0.05)
        assert c.cycle_s == pytest.approx(62.7, abs=0.05)

    def test_oversaturated_absolute_values(self):
        c = webster_schedule(0.6, 0.6, TIMING)
        assert c.ideal_cycle_s == pytest.approx(90.0)
        assert c.green_a_s == pytest.approx(39.0)
        assert c.green_b_s == pytest.approx(39.0)
        assert c.cycle_s == pytest.approx(90.0)

    def test_saturation_exactly_one(self):
        c = webster_schedule(0.5, 0.5, TIMING)
        assert c.ideal_cycle_s == TIMING.max_cycle_s
        assert math.isfinite(c.green_a_s) and math.isfinite(c.green_b_s)

    def test_min_green_floor(self):
        c = webster_schedule(0.5, 0.0, TIMING)
        assert c.green_b_s == TIMING.min_green_s
        assert c.cycle_s == c.green_a_s + c.green_b_s + 12.0

    def test_both_zero(self):
        with pytest.raises(BothZero):
            webster_schedule(0.0, 0.0, TIMING)

    def test_rejects_negative_ratio(self):
        with pytest.raises(ValueError):
            webster_schedule(-0.1, 0.2, TIMING)

    @given(
        y_a=st.floats(min_value=0.0, max_value=5.0),
        y_b=st.floats(min_value=0.0, max_value=5.0),
    )
    @settings(max_examples=300, deadline=None)
    def test_identities(self, y_a, y_b):
        if y_a + y_b == 0:
            return
        c = webster_schedule(y_a, y_b, TIMING)
        assert c.cycle_s - (c.green_a_s + c.green_b_s) == pytest.approx(12.0, abs=1e-12)
        assert math.isfinite(c.green_a_s) and math.isfinite(c.green_b_s)
        assert c.green_a_s >= TIMING.min_green_s
        assert c.green_b_s >= TIMING.min_green_s

    @given(
        y_a=st.floats(min_value=0.01, max_value=0.45),
        y_b=st.floats(min_value=0.01, max_value=0.45),
    )
    @settings(max_examples=200, deadline=None)
    def test_split_ratio_matches_demand_ratio(self, y_a, y_b):
        c = webster_schedule(y_a, y_b, TIMING)
        if c.green_a_s > TIMING.min_green_s and c.green_b_s > TIMING.min_green_s:
            assert c.green_a_s / c.green_b_s == pytest.approx(y_a / y_b, rel=1e-9)

    @given(
        y_a=st.floats(min_value=0.05, max_value=0.4),
        y_b=st.floats(min_value=0.05, max_value=0.4),
        scale=st.floats(min_value=0.3, max_value=1.2),
    )
    @settings(max_examples=200, deadline=None)
    def test_scaling_preserves_split(self, y_a, y_b, scale):
        if scale * (y_a + y_b) >= 1:
            return
        base = webster_schedule(y_a, y_b, TIMING)
        scaled = webster_schedule(scale * y_a, scale * y_b, TIMING)
        floors = TIMING.min_green_s
        if min(base.green_a_s, base.green_b_s, scaled.green_a_s, scaled.green_b_s) > floors:
            assert base.green_a_s / base.green_b_s == pytest.approx(
                scaled.green_a_s / scaled.green_b_s, rel=1e-9
            )


class TestFixedTimeSchedule:
    PARAMS = FlowModelParams(60.0, 111.93)
    LENGTHS = {ROAD_A: 3040.0, ROAD_B: 3200.0}

    def counts_for_ratios(self, y_a, y_b):
        """Back out road vehicle counts that produce the target flow ratios."""
        capacity = max_flow(self.PARAMS)
        k_a = density_for_flow(self.PARAMS, y_a * capacity)
        k_b = density_for_flow(self.PARAMS, y_b * capacity)
        return {ROAD_A: k_a * 3.040, ROAD_B: k_b * 3.200}

    def test_symmetry(self):
        counts = {ROAD_A: 30, ROAD_B: 30}
        lengths = {ROAD_A: 3000.0, ROAD_B: 3000.0}
        c = fixed_time_schedule(counts, self.PARAMS, lengths, TIMING)
        assert c.green_a_s == pytest.approx(c.green_b_s, rel=1e-12)

    def test_balanced_published_row(self):
        counts = self.counts_for_ratios(0.3558, 0.3572)
        c = fixed_time_schedule(counts, self.PARAMS, self.LENGTHS, TIMING)
        assert c.cycle_s == pytest.approx(62.7, abs=0.05)
        assert c.green_a_s == pytest.approx(25.3, abs=0.1)
        assert c.green_b_s == pytest.approx(25.4, abs=0.1)

    def test_major_minor_published_row(self):
        counts = self.counts_for_ratios(0.576614, 0.145179)
        c = fixed_time_schedule(counts, self.PARAMS, self.LENGTHS, TIMING)
        assert c.green_a_s == pytest.approx(42.1, abs=0.1)
        assert c.green_b_s == pytest.approx(10.6, abs=0.1)
        assert c.cycle_s == pytest.approx(64.7, abs=0.05)

    def test_empty_roads(self):
        with pytest.raises(BothZero):
            fixed_time_schedule({ROAD_A: 0, ROAD_B: 0}, self.PARAMS, self.LENGTHS, TIMING)

    def test_negative_count_rejected(self):
        with pytest.raises(ValueError):
            fixed_time_schedule({ROAD_A: -1, ROAD_B: 5}, self.PARAMS, self.LENGTHS, TIMING)


def make_state(green_a=16.5, green_b=16.5):
    return PhaseState(Phase.GREEN_A, 0.0, green_a, green_b)


def constant_provider(green_a=16.5, green_b=16.5):
    return lambda: (green_a, green_b)


class TestPhaseMachine:
    def test_green_to_amber_transition(self):
        state = make_state()
        state.time_in_phase = 16.5 - 0.1
        events = step_phase(state, 0.1, TIMING, constant_provider())
        assert state.phase is Phase.AMBER_A
        kinds = [(e.kind, e.road) for e in events]
        assert (EventKind.GREEN_END, ROAD_A) in kinds
        assert (EventKind.AMBER_START, ROAD_A) in kinds

    def test_full_cycle_duration(self):
        state = make_state(16.5, 16.5)
        t = 0.0
        seen_cycle_end = None
        while t < 46.0:
            for event in step_phase(state, 0.1, TIMING, constant_provider(), now_s=t):
                if event.kind is EventKind.CYCLE_END and seen_cycle_end is None:
                    seen_cycle_end = event.time_s
            t = round(t + 0.1, 10)
        assert seen_cycle_end == pytest.approx(45.0, abs=1e-6)
        assert state.phase is Phase.GREEN_A

    def test_phase_cycle_order(self):
        state = make_state(6.0, 7.0)
        order = [state.phase]
        t = 0.0
        while len(order) < 7:
            before = state.phase
            step_phase(state, 0.1, TIMING, constant_provider(6.0, 7.0), now_s=t)
            if state.phase is not before:
                order.append(state.phase)
            t += 0.1
        assert order == [
            Phase.GREEN_A, Phase.AMBER_A, Phase.ALL_RED_1,
            Phase.GREEN_B, Phase.AMBER_B, Phase.ALL_RED_2, Phase.GREEN_A,
        ]

    def test_exactly_one_green(self):
        for phase in Phase:
            greens = [road for road in (ROAD_A, ROAD_B) if signal_for_road(phase, road) == GREEN]
            assert len(greens) <= 1

    def test_six_seconds_between_conflicting_greens(self):
        assert TIMING.amber_s + TIMING.all_red_s == 6.0

    def test_schedule_provider_called_once_per_cycle(self):
        calls = []
        state = make_state(5.0, 5.0)

        def provider():
            calls.append(state.phase)
            return 5.0, 5.0

        t = 0.0
        for _ in range(int(round((2 * 22.0) / 0.1))):
            step_phase(state, 0.1, TIMING, provider, now_s=t)
            t += 0.1
        assert len(calls) == 2

    def test_rejects_nonpositive_dt(self):
        with pytest.raises(ValueError):
            step_phase(make_state(), 0.0, TIMING, constant_provider())

    def test_signal_views(self):
        assert signal_for_road(Phase.GREEN_A, ROAD_A) == GREEN
        assert signal_for_road(Phase.GREEN_A, ROAD_B) == RED
        assert signal_for_road(Phase.AMBER_B, ROAD_B) == AMBER
        assert signal_for_road(Phase.ALL_RED_1, ROAD_A) == RED
        assert signal_for_road(Phase.ALL_RED_1, ROAD_B) == RED


def drive_controller(controller, duration, counts_fn, dt=0.1):
    t = 0.0
    while t < duration:
        controller.advance(dt, t, counts_fn(t))
        t = round(t + dt, 10)


class TestSignalController:
    LANES = {ROAD_A: ("A1", "A2"), ROAD_B: ("B1", "B2")}
    CAPACITY = 1678.95 / 3600.0

    def make(self, mode, green_a=16.5, green_b=16.5):
        initial = webster_schedule(0.3, 0.3, TIMING)
        return SignalController(mode, TIMING, initial, self.CAPACITY, self.LANES)

    def test_fixed_mode_schedule_constant(self):
        controller = self.make(MODE_FIXED)
        counts = {lane: 0 for lanes in self.LANES.values() for lane in lanes}
        drive_controller(controller, 400.0, lambda t: counts)
        assert len(controller.schedule_records) >= 3
        first = controller.schedule_records[0].computation
        assert all(r.computation == first for r in controller.schedule_records)

    def test_adaptive_recomputes_from_windows(self):
        controller = self.make(MODE_ADAPTIVE)

        def counts(t):
            # Road A lanes count briskly, road B trickles.
            return {"A1": int(t), "A2": int(t * 0.8), "B1": int(t * 0.05), "B2": int(t * 0.02)}

        drive_controller(controller, 300.0, counts)
        last = controller.schedule_records[-1].computation
        first = controller.schedule_records[0].computation
        assert last != first
        assert last.green_a_s > last.green_b_s

    def test_windows_anchor_amber_to_green_end(self):
        controller = self.make(MODE_ADAPTIVE)
        counts = {lane: 0 for lanes in self.LANES.values() for lane in lanes}
        drive_controller(controller, 200.0, lambda t: counts)
        for window in controller.windows:
            assert window.end_s > window.start_s
        amber_starts = [e for e in controller.events
                        if e.kind is EventKind.AMBER_START and e.road == ROAD_A]
        windows_a = [w for w in controller.windows if w.road_id == ROAD_A]
        assert windows_a[0].start_s == pytest.approx(amber_starts[0].time_s)

    def test_zero_demand_retains_schedule(self):
        controller = self.make(MODE_ADAPTIVE)
        counts = {lane: 0 for lanes in self.LANES.values() for lane in lanes}
        drive_controller(controller, 400.0, lambda t: counts)
        first = controller.schedule_records[0].computation
        assert all(r.computation == first for r in controller.schedule_records)

    def test_schedule_log_format(self):
        controller = self.make(MODE_FIXED)
        counts = {lane: 0 for lanes in self.LANES.values() for lane in lanes}
        drive_controller(controller, 100.0, lambda t: counts)
        lines = schedule_log_lines(controller.schedule_records)
        assert lines[0].startswith("cycle_index,")
        assert len(lines) == len(controller.schedule_records) + 1
        assert lines[1].split(",")[0] == "1"

    def test_unknown_mode_rejected(self):
        with pytest.raises(ValueError):
            self.make("reactive")
