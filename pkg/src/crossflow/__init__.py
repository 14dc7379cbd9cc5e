"""Deterministic two-ring intersection microsimulation with camera-style
vehicle counting, Greenshields flow calibration and Webster signal timing."""

from crossflow.flow_model import (
    DegenerateFit,
    FlowExceedsCapacity,
    FlowModelParams,
    SpeedDensitySample,
    density_for_flow,
    fit_speed_density,
    flow_at_density,
    max_flow,
    speed_at_density,
    speed_for_gap,
)
from crossflow.sensing import (
    CounterState,
    EmptyWindow,
    MeasurementWindow,
    SectorLayout,
    TrackObservation,
    VirtualCamera,
    VirtualCameraConfig,
    classify_sector,
    realtime_flow,
    update_counter,
)
from crossflow.controller import (
    BothZero,
    Phase,
    PhaseState,
    SignalController,
    SignalTiming,
    WebsterComputation,
    ZeroCapacity,
    fixed_time_schedule,
    flow_ratio,
    road_flow,
    step_phase,
    webster_schedule,
)
from crossflow.scenario import ConfigError, ScenarioConfig, load_scenario, parse_scenario
from crossflow.simulator import (
    CollisionError,
    Overcapacity,
    RunResult,
    SpeedTrace,
    Vehicle,
    World,
    init_scenario,
    run,
)
from crossflow.metrics import (
    EmptyTrace,
    MetricsReport,
    NoPasses,
    ScenarioMismatch,
    average_pass,
    average_speed,
    average_time_lost,
    build_report,
    compare,
    total_time_lost,
)

__version__ = "0.1.0"
