"""Metrics: the speed-to-lost-time pipeline and report comparison."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from crossflow.metrics import (
    EmptyTrace,
    MetricsReport,
    NoPasses,
    ScenarioMismatch,
    average_pass,
    average_speed,
    average_time_lost,
    compare,
    comparison_lines,
    reports_from_json,
    reports_to_json,
    total_time_lost,
)
from crossflow.simulator import SpeedTrace


def make_trace(samples_kph):
    samples = np.asarray(samples_kph, dtype=float) / 3.6
    return SpeedTrace(
        interval_s=0.1,
        vehicle_ids=np.arange(samples.shape[1]),
        samples=samples,
    )


def make_report(label, mode, lost_s, **overrides):
    fields = dict(
        scenario_label=label,
        controller_mode=mode,
        average_speed_kph=50.0,
        simulation_time_min=15.0,
        total_time_lost_min=2.0,
        average_pass=4.0,
        average_time_lost_s=lost_s,
    )
    fields.update(overrides)
    return MetricsReport(**fields)


class TestAverageSpeed:
    def test_constant(self):
        trace = make_trace([[60.0, 60.0], [60.0, 60.0]])
        assert average_speed(trace) == pytest.approx(60.0)

    def test_mean_of_two_vehicles(self):
        trace = make_trace([[60.0, 0.0], [60.0, 0.0]])
        assert average_speed(trace) == pytest.approx(30.0)

    def test_streaming_mean_oracle(self):
        rng = np.random.default_rng(3)
        samples = rng.uniform(0.0, 16.6, size=(500, 7))
        trace = SpeedTrace(0.1, np.arange(7), samples)
        total = 0.0
        count = 0
        for row in samples:
            for value in row:
                total += value
                count += 1
        assert average_speed(trace) == pytest.approx(total / count * 3.6, rel=1e-9)

    def test_empty(self):
        with pytest.raises(EmptyTrace):
            average_speed(SpeedTrace(0.1, np.arange(0), np.empty((0, 0))))
        with pytest.raises(EmptyTrace):
            average_speed(SpeedTrace(0.1, np.arange(3), np.empty((0, 3))))


class TestTotalTimeLost:
    def test_at_limit(self):
        assert total_time_lost(60.0, 60.0, 15.2) == 0.0

    def test_published_balanced_row(self):
        assert total_time_lost(56.322, 60.0, 15.2) == pytest.approx(0.9318, abs=1e-4)

    def test_published_major_minor_row(self):
        assert total_time_lost(50.518, 60.0, 11.1) == pytest.approx(1.7542, abs=1e-4)

    def test_rejects_speed_above_limit(self):
        with pytest.raises(ValueError):
            total_time_lost(61.0, 60.0, 10.0)


class TestAveragePass:
    def test_published_row(self):
        assert average_pass(15.2, 0.9318) == pytest.approx(4.756, abs=1e-3)

    def test_all_time_lost(self):
        assert average_pass(10.0, 10.0) == 0.0

    def test_major_minor_row(self):
        assert average_pass(11.1, 1.7542) == pytest.approx(3.115, abs=1e-3)

    def test_lost_exceeding_time_rejected(self):
        with pytest.raises(ValueError):
            average_pass(10.0, 11.0)


class TestAverageTimeLost:
    def test_published_balanced_row(self):
        lost = total_time_lost(56.322, 60.0, 15.2)
        passes = average_pass(15.2, lost)
        value = average_time_lost(lost, passes)
        assert value == pytest.approx(11.76, abs=0.01)
        assert value == pytest.approx(11.797, rel=0.005)

    def test_published_major_minor_row(self):
        lost = total_time_lost(50.518, 60.0, 11.1)
        passes = average_pass(11.1, lost)
        value = average_time_lost(lost, passes)
        assert value == pytest.approx(33.79, abs=0.01)
        assert value == pytest.approx(33.784, rel=0.001)

    def test_zero_lost(self):
        assert average_time_lost(0.0, 4.0) == 0.0

    def test_no_passes(self):
        with pytest.raises(NoPasses):
            average_time_lost(1.0, 0.0)

    def test_units_exact(self):
        assert average_time_lost(2.5, 4.0) == pytest.approx(60.0 * 2.5 / 4.0, rel=1e-15)

    @given(
        speed_a=st.floats(min_value=1.0, max_value=59.0),
        speed_b=st.floats(min_value=1.0, max_value=59.0),
        sim_time=st.floats(min_value=5.0, max_value=30.0),
    )
    @settings(max_examples=200, deadline=None)
    def test_lower_speed_costs_more(self, speed_a, speed_b, sim_time):
        def pipeline(speed):
            lost = total_time_lost(speed, 60.0, sim_time)
            return average_time_lost(lost, average_pass(sim_time, lost))

        if speed_a < speed_b:
            assert pipeline(speed_a) > pipeline(speed_b)
        elif speed_b < speed_a:
            assert pipeline(speed_b) > pipeline(speed_a)


class TestCompare:
    def test_published_percentages(self):
        fixed = make_report("0.175", "fixed", 41.742)
        adaptive = make_report("0.175", "adaptive", 30.517)
        assert compare(fixed, adaptive) == pytest.approx(26.9, abs=0.05)
        fixed = make_report("80/20", "fixed", 83.716)
        adaptive = make_report("80/20", "adaptive", 44.982)
        assert compare(fixed, adaptive) == pytest.approx(46.3, abs=0.05)

    def test_equal_reports(self):
        report = make_report("x", "fixed", 20.0)
        assert compare(report, report) == 0.0

    def test_label_mismatch(self):
        with pytest.raises(ScenarioMismatch):
            compare(make_report("a", "fixed", 10.0), make_report("b", "adaptive", 10.0))


class TestReportIO:
    def test_json_round_trip(self):
        reports = [make_report("a", "fixed", 10.0), make_report("b", "adaptive", 8.0)]
        text = reports_to_json(reports)
        assert reports_from_json(text) == reports

    def test_single_object(self):
        report = make_report("a", "fixed", 10.0)
        text = reports_to_json([report])[1:-2]  # strip list brackets
        assert reports_from_json(text) == [report]

    def test_comparison_lines(self):
        pairs = [(make_report("a", "fixed", 10.0), make_report("a", "adaptive", 7.5))]
        lines = comparison_lines(pairs)
        assert lines[0].startswith("scenario,")
        assert lines[1].startswith("a,10.000000,7.500000,25.000000")
