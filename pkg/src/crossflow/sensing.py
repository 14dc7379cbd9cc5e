"""Virtual roadside camera and the two-sector vehicle counter.

The camera stands in for a detector-plus-tracker stack: it sees the ground
truth of one approach lane, assigns a stable track id per pass through its
view, and can drop individual observations with a seeded per-frame
probability to mimic missed detections.

Counting divides the visible approach into two sectors that end at the stop
line. A track is counted exactly once, when it is observed in sector 2
while its last sector-1 sighting is at most one second old. The one-second
memory bridges short detection gaps; the set of already-counted ids
prevents double counting while the track lives.

Positions are measured along the approach with the stop line at 0 and
upstream negative, so a default 30 m view spans [-30, 0].
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, field
from typing import Iterable, Sequence

# Track ids for repeat passes through the camera view are offset by this
# stride, so the originating vehicle id stays readable in logs.
PASS_ID_STRIDE = 1_000_000


class EmptyWindow(ValueError):
    """Measurement window has no positive duration."""


@dataclass(frozen=True)
class TrackObservation:
    """One per-frame sighting of one tracked vehicle."""

    frame_index: int
    track_id: int
    lane_id: str
    position_m: float


@dataclass(frozen=True)
class SectorLayout:
    """Two counting sectors along an approach lane.

    Sector 1 is [sector1_start_m, boundary_m), sector 2 is
    [boundary_m, sector2_end_m]; a position exactly on the boundary belongs
    to sector 2 so a crossing is never missed by equality.
    """

    lane_id: str
    sector1_start_m: float = -30.0
    boundary_m: float = -15.0
    sector2_end_m: float = 0.0

    def __post_init__(self) -> None:
        if not (self.sector1_start_m < self.boundary_m < self.sector2_end_m):
            raise ValueError(
                f"sectors must satisfy start < boundary < end, got "
                f"{self.sector1_start_m}, {self.boundary_m}, {self.sector2_end_m}"
            )


def classify_sector(layout: SectorLayout, position_m: float):
    """Return 1, 2 or None for a position along the approach."""
    if layout.sector1_start_m <= position_m < layout.boundary_m:
        return 1
    if layout.boundary_m <= position_m <= layout.sector2_end_m:
        return 2
    return None


@dataclass
class CounterState:
    """Mutable per-lane counter: counted ids, sector-1 memory and the tally."""

    frame_rate_fps: float = 5.0
    counted_ids: set = field(default_factory=set)
    sector1_memory: dict = field(default_factory=dict)
    count: int = 0

    @property
    def grace_frames(self) -> int:
        """One second of memory, converted to frames by ceiling."""
        return int(math.ceil(self.frame_rate_fps))


def update_counter(
    state: CounterState,
    layout: SectorLayout,
    observations: Sequence[TrackObservation],
    frame_index: int,
) -> list[int]:
    """Process one frame of observations for one lane; return newly counted ids.

    Sector-1 sightings refresh the memory. A sector-2 sighting counts its
    track when the memory entry is at most grace_frames old and the id has
    not been counted before. Stale memory entries are evicted afterwards.
    """
    seen_s1: list[int] = []
    seen_s2: list[int] = []
    for obs in observations:
        sector = classify_sector(layout, obs.position_m)
        if sector == 1:
            seen_s1.append(obs.track_id)
        elif sector == 2:
            seen_s2.append(obs.track_id)

    for tid in seen_s1:
        state.sector1_memory[tid] = frame_index

    grace = state.grace_frames
    newly: list[int] = []
    for tid in sorted(seen_s2):
        last = state.sector1_memory.get(tid)
        if last is None or frame_index - last > grace:
            continue
        if tid in state.counted_ids:
            continue
        state.counted_ids.add(tid)
        state.count += 1
        del state.sector1_memory[tid]
        newly.append(tid)

    stale = [tid for tid, seen in state.sector1_memory.items() if frame_index - seen > grace]
    for tid in stale:
        del state.sector1_memory[tid]
    return newly


@dataclass(frozen=True)
class MeasurementWindow:
    """One flow-measurement interval for a road: amber onset to green end."""

    road_id: str
    start_s: float
    end_s: float
    vehicle_count: int


def realtime_flow(window: MeasurementWindow) -> float:
    """Vehicles counted per second over the window."""
    duration = window.end_s - window.start_s
    if duration <= 0:
        raise EmptyWindow(f"window [{window.start_s}, {window.end_s}] has no duration")
    return window.vehicle_count / duration


# -----------------------------------------------------------------------
# Virtual camera
# -----------------------------------------------------------------------

@dataclass(frozen=True)
class VirtualCameraConfig:
    """Configuration for one lane's virtual camera."""

    lane_id: str
    visible_window: tuple = (-30.0, 0.0)
    frame_rate_fps: float = 5.0
    dropout_probability: float = 0.0
    id_switch_probability: float = 0.0
    rng_seed: int = 0

    def __post_init__(self) -> None:
        if not (0.0 <= self.dropout_probability < 1.0):
            raise ValueError(f"dropout probability must be in [0, 1): {self.dropout_probability}")
        if not (0.0 <= self.id_switch_probability < 1.0):
            raise ValueError(f"id-switch probability must be in [0, 1): {self.id_switch_probability}")
        if self.frame_rate_fps <= 0:
            raise ValueError(f"frame rate must be positive: {self.frame_rate_fps}")
        lo, hi = self.visible_window
        if not lo < hi:
            raise ValueError(f"visible window must be a nonempty interval: {self.visible_window}")


class VirtualCamera:
    """Stateful ground-truth sensor for one approach lane.

    Track lifecycle follows the ground truth, not the (possibly dropped)
    observations, so a dropout never fragments a pass into two tracks. The
    first pass of a vehicle reuses its vehicle id as track id; each later
    pass gets a fresh id offset by PASS_ID_STRIDE, the way a tracker mints
    a new track when a target re-enters the view.
    """

    def __init__(self, config: VirtualCameraConfig):
        self.config = config
        self._rng = random.Random(config.rng_seed)
        self._active: dict[int, int] = {}   # vehicle id -> current track id
        self._passes: dict[int, int] = {}   # vehicle id -> passes begun

    def observe(self, lane_vehicles: Iterable[tuple], frame_index: int) -> list[TrackObservation]:
        """Emit observations for vehicles inside the visible window.

        ``lane_vehicles`` holds (vehicle_id, position_m) pairs for this
        camera's lane; positions use the stop-line-at-0 convention. Vehicles
        are processed in id order so the seeded dropout draws are
        reproducible.
        """
        lo, hi = self.config.visible_window
        present = {
            int(vid): float(pos)
            for vid, pos in lane_vehicles
            if lo <= pos <= hi
        }
        for vid in sorted(present):
            if vid not in self._active:
                pass_index = self._passes.get(vid, 0)
                self._passes[vid] = pass_index + 1
                self._active[vid] = vid + pass_index * PASS_ID_STRIDE
        for vid in [v for v in self._active if v not in present]:
            del self._active[vid]

        observations: list[TrackObservation] = []
        for vid in sorted(present):
            if self.config.id_switch_probability > 0.0:
                if self._rng.random() < self.config.id_switch_probability:
                    pass_index = self._passes[vid]
                    self._passes[vid] = pass_index + 1
                    self._active[vid] = vid + pass_index * PASS_ID_STRIDE
            if self.config.dropout_probability > 0.0:
                if self._rng.random() < self.config.dropout_probability:
                    continue
            observations.append(
                TrackObservation(frame_index, self._active[vid], self.config.lane_id, present[vid])
            )
        return observations


def observe(camera: VirtualCamera, lane_vehicles: Iterable[tuple], frame_index: int) -> list[TrackObservation]:
    """Functional wrapper around VirtualCamera.observe."""
    return camera.observe(lane_vehicles, frame_index)


# -----------------------------------------------------------------------
# Track file: "frame_index,track_id,lane_id,position_m" rows, replayable
# through the counter offline.
# -----------------------------------------------------------------------

def load_track_file(path) -> list[TrackObservation]:
    """Read observations from a comma-separated track file.

    Raises ValueError with the offending line number on malformed input.
    An optional non-numeric header line is skipped.
    """
    rows: list[TrackObservation] = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            parts = [p.strip() for p in line.split(",")]
            if len(parts) != 4:
                raise ValueError(f"{path}: line {lineno}: expected 4 comma-separated fields")
            try:
                frame = int(parts[0])
                track = int(parts[1])
                position = float(parts[3])
            except ValueError:
                if lineno == 1:
                    continue  # header line
                raise ValueError(f"{path}: line {lineno}: malformed row: {line!r}") from None
            if frame < 0:
                raise ValueError(f"{path}: line {lineno}: negative frame index")
            rows.append(TrackObservation(frame, track, parts[2], position))
    rows.sort(key=lambda o: (o.frame_index, o.lane_id, o.track_id))
    return rows
