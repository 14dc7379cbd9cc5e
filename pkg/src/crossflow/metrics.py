"""Run evaluation: average speed, time lost to the intersection, and
per-pass comparison between controllers.

The chain of quantities: the grand mean speed of all vehicles over all
samples; the total time lost, which attributes the whole speed deficit
against the limit to the intersection (valid because drivers only slow
down there); the average number of intersection passes, using the loop
travel time as the notion of one pass; and the average time lost per
pass, in seconds. Comparing two runs of one scenario reports the percent
of per-pass lost time the adaptive controller saves over the fixed one.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass

import numpy as np

from crossflow.simulator import RunResult, SpeedTrace

DEFAULT_CYCLE_TIME_MIN = 3.0


class EmptyTrace(ValueError):
    """Trace has no samples to average."""


class NoPasses(ValueError):
    """Average time lost is undefined without intersection passes."""


class ScenarioMismatch(ValueError):
    """Reports being compared belong to different scenarios."""


@dataclass(frozen=True)
class MetricsReport:
    """Evaluation summary of one run."""

    scenario_label: str
    controller_mode: str
    average_speed_kph: float
    simulation_time_min: float
    total_time_lost_min: float
    average_pass: float
    average_time_lost_s: float


def average_speed(trace: SpeedTrace) -> float:
    """Grand mean over all vehicles and samples, in km/h."""
    if trace.n_samples == 0 or trace.n_vehicles == 0:
        raise EmptyTrace("no speed samples recorded")
    return float(np.mean(trace.samples)) * 3.6


def total_time_lost(avg_speed_kph: float, limit_kph: float, sim_time_min: float) -> float:
    """Minutes of the run lost to driving below the limit."""
    if limit_kph <= 0:
        raise ValueError(f"speed limit must be positive: {limit_kph}")
    if not (0.0 <= avg_speed_kph <= limit_kph):
        raise ValueError(f"average speed {avg_speed_kph} outside [0, {limit_kph}]")
    return (limit_kph - avg_speed_kph) / limit_kph * sim_time_min


def average_pass(sim_time_min: float, total_lost_min: float,
                 cycle_time_min: float = DEFAULT_CYCLE_TIME_MIN) -> float:
    """Average number of intersection passes per vehicle over the run."""
    if cycle_time_min <= 0:
        raise ValueError(f"cycle time must be positive: {cycle_time_min}")
    if total_lost_min > sim_time_min:
        raise ValueError("total time lost cannot exceed the simulation time")
    return (sim_time_min - total_lost_min) / cycle_time_min


def average_time_lost(total_lost_min: float, passes: float) -> float:
    """Seconds lost per intersection pass."""
    if passes <= 0:
        raise NoPasses(f"passes must be positive: {passes}")
    return total_lost_min / passes * 60.0


def build_report(result: RunResult) -> MetricsReport:
    """Full evaluation of one run result."""
    cfg = result.config
    avg = average_speed(result.trace)
    sim_time_min = cfg.duration_s / 60.0
    lost = total_time_lost(avg, cfg.speed_limit_kmh, sim_time_min)
    passes = average_pass(sim_time_min, lost, cfg.metrics_cycle_time_min)
    return MetricsReport(
        scenario_label=cfg.label,
        controller_mode=cfg.mode,
        average_speed_kph=avg,
        simulation_time_min=sim_time_min,
        total_time_lost_min=lost,
        average_pass=passes,
        average_time_lost_s=average_time_lost(lost, passes),
    )


def compare(fixed: MetricsReport, adaptive: MetricsReport) -> float:
    """Percent of per-pass lost time saved by the adaptive controller."""
    if fixed.scenario_label != adaptive.scenario_label:
        raise ScenarioMismatch(
            f"labels differ: {fixed.scenario_label!r} vs {adaptive.scenario_label!r}"
        )
    return (
        (fixed.average_time_lost_s - adaptive.average_time_lost_s)
        / fixed.average_time_lost_s * 100.0
    )


# -----------------------------------------------------------------------
# Report files: JSON (one object per scenario) and a comparison CSV
# -----------------------------------------------------------------------

def reports_to_json(reports) -> str:
    return json.dumps([asdict(r) for r in reports], indent=2, sort_keys=True) + "\n"


def reports_from_json(text: str) -> list[MetricsReport]:
    data = json.loads(text)
    if isinstance(data, dict):
        data = [data]
    return [MetricsReport(**entry) for entry in data]


COMPARISON_HEADER = (
    "scenario,fixed_average_time_lost_s,adaptive_average_time_lost_s,time_saved_pct"
)


def comparison_lines(pairs) -> list[str]:
    """CSV rows for (fixed, adaptive) report pairs, plot-ready."""
    lines = [COMPARISON_HEADER]
    for fixed, adaptive in pairs:
        saved = compare(fixed, adaptive)
        lines.append(
            f"{fixed.scenario_label},{fixed.average_time_lost_s:.6f},"
            f"{adaptive.average_time_lost_s:.6f},{saved:.6f}"
        )
    return lines


def format_report(report: MetricsReport) -> str:
    """Human-readable one-run summary."""
    return "\n".join([
        f"scenario:            {report.scenario_label} ({report.controller_mode})",
        f"average speed:       {report.average_speed_kph:.3f} km/h",
        f"simulation time:     {report.simulation_time_min:.3f} min",
        f"total time lost:     {report.total_time_lost_min:.4f} min",
        f"average passes:      {report.average_pass:.3f}",
        f"average time lost:   {report.average_time_lost_s:.3f} s/pass",
    ])
