"""Chamber geometry, agent kinematics, stimulus timing and trial scheduling.

Coordinates: the floor spans ``x in [0, length_x]`` and ``y in [0, width_y]``,
``z`` points up.  The two display walls are the walls at ``x = 0`` and
``x = length_x``.  Headings are degrees counter-clockwise from ``+x``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class ChamberSpec:
    length_x: float = 20.0
    width_y: float = 14.0
    wall_height: float = 10.0
    display_width: float = 8.0
    display_height: float = 8.0

    def __post_init__(self):
        if self.display_width > self.width_y or self.display_height > self.wall_height:
            raise ValueError("display rectangle does not fit on its wall")
        if min(self.length_x, self.width_y, self.wall_height) <= 0:
            raise ValueError("chamber dimensions must be positive")

    @property
    def midline(self) -> float:
        return self.length_x / 2.0

    @property
    def display_center(self) -> tuple[float, float]:
        """(y, z) of the display rectangle centre on either display wall."""
        return self.width_y / 2.0, self.wall_height / 2.0


@dataclass(frozen=True)
class AgentBody:
    height: float = 3.5
    radius: float = 1.2
    camera_height: float = 3.2
    translation_step: float = 0.2
    rotation_step: float = 10.0

    def __post_init__(self):
        if self.camera_height > self.height:
            raise ValueError("camera_height must not exceed body height")
        if self.translation_step <= 0 or self.rotation_step <= 0:
            raise ValueError("translation_step and rotation_step must be positive")


def check_fits(chamber: ChamberSpec, body: AgentBody) -> None:
    if chamber.length_x <= 2 * body.radius or chamber.width_y <= 2 * body.radius:
        raise ValueError("chamber too small for the agent body")


@dataclass(frozen=True)
class Pose:
    x: float
    y: float
    heading: float


@dataclass(frozen=True)
class Action:
    translation: int
    rotation: int

    def __post_init__(self):
        if self.translation not in (-1, 0, 1) or self.rotation not in (-1, 0, 1):
            raise ValueError(f"illegal action {self.translation, self.rotation}")

    @property
    def index(self) -> tuple[int, int]:
        """Per-branch category indices (0, 1, 2) for (-1, 0, +1)."""
        return self.translation + 1, self.rotation + 1

    @classmethod
    def from_index(cls, translation_idx: int, rotation_idx: int) -> "Action":
        return cls(int(translation_idx) - 1, int(rotation_idx) - 1)


ALL_ACTIONS = tuple(Action(t, r) for t in (-1, 0, 1) for r in (-1, 0, 1))


def step_pose(pose: Pose, action: Action, body: AgentBody, chamber: ChamberSpec) -> Pose:
    """Rotate, then translate along the new heading, then clamp to the walls."""
    heading = (pose.heading + action.rotation * body.rotation_step) % 360.0
    rad = math.radians(heading)
    dist = action.translation * body.translation_step
    x = pose.x + dist * math.cos(rad)
    y = pose.y + dist * math.sin(rad)
    r = body.radius
    x = min(max(x, r), chamber.length_x - r)
    y = min(max(y, r), chamber.width_y - r)
    return Pose(x, y, heading)


def spawn(rng: np.random.Generator, chamber: ChamberSpec, body: AgentBody) -> Pose:
    r = body.radius
    x = rng.uniform(r, chamber.length_x - r)
    y = rng.uniform(r, chamber.width_y - r)
    heading = rng.uniform(0.0, 360.0)
    return Pose(float(x), float(y), float(heading))


class Zone(str, enum.Enum):
    SIDE_X0 = "side_x0"
    SIDE_XL = "side_xL"
    NEUTRAL = "neutral"


def zone_of(pose: Pose, chamber: ChamberSpec) -> Zone:
    mid = chamber.midline
    if pose.x < mid:
        return Zone.SIDE_X0
    if pose.x > mid:
        return Zone.SIDE_XL
    return Zone.NEUTRAL


# ---------------------------------------------------------------------------
# Stimuli

OBJECT_IDS = ("A", "B")
ROCK_AMPLITUDE = 30.0


@dataclass(frozen=True)
class RearingCondition:
    object_id: str
    rearing_view: str

    def __post_init__(self):
        if self.object_id not in OBJECT_IDS:
            raise ValueError(f"unknown object {self.object_id!r}")
        if self.rearing_view not in ("front", "side"):
            raise ValueError(f"unknown rearing view {self.rearing_view!r}")

    @property
    def unfamiliar_object(self) -> str:
        return "B" if self.object_id == "A" else "A"


# Numbered as on the CLI (--condition 1..4).
CONDITIONS = {
    1: RearingCondition("A", "front"),
    2: RearingCondition("A", "side"),
    3: RearingCondition("B", "front"),
    4: RearingCondition("B", "side"),
}


@dataclass(frozen=True)
class ViewpointRange:
    index: int
    azimuth_center: float
    elevation: float
    is_familiar: bool


GRID_AZIMUTHS = (0.0, 60.0, 120.0, 180.0, 240.0, 300.0)
GRID_ELEVATIONS = (0.0, 45.0)
SIDE_AZIMUTH = 90.0


def viewpoint_ranges(condition: RearingCondition) -> list[ViewpointRange]:
    """The 12 test viewpoint ranges; index = 6 * elevation_row + azimuth_column.

    For side rearing the 90 degree familiar range replaces the nearest grid
    entry at elevation 0 (60 and 120 tie; the lower index wins).
    """
    ranges = []
    for row, elev in enumerate(GRID_ELEVATIONS):
        for col, az in enumerate(GRID_AZIMUTHS):
            ranges.append(ViewpointRange(6 * row + col, az, elev, False))
    if condition.rearing_view == "front":
        fam = 0
    else:
        dists = [abs(r.azimuth_center - SIDE_AZIMUTH) if r.elevation == 0.0 else math.inf for r in ranges]
        fam = int(np.argmin(dists))
    center = 0.0 if condition.rearing_view == "front" else SIDE_AZIMUTH
    ranges[fam] = ViewpointRange(fam, center, 0.0, True)
    return ranges


def familiar_range(condition: RearingCondition) -> ViewpointRange:
    return next(r for r in viewpoint_ranges(condition) if r.is_familiar)


def stimulus_azimuth(time_step: int, vrange: ViewpointRange, period_steps: int,
                     waveform: str = "triangle") -> float:
    """Instantaneous object azimuth while rocking through a 60 degree arc.

    Phase origin: at t=0 the object is at the range centre, moving towards
    larger azimuths.
    """
    if period_steps <= 0:
        raise ValueError("period_steps must be positive")
    phase = (time_step % period_steps) / period_steps
    if waveform == "triangle":
        if phase < 0.25:
            unit = 4.0 * phase
        elif phase < 0.75:
            unit = 2.0 - 4.0 * phase
        else:
            unit = 4.0 * phase - 4.0
    elif waveform == "sine":
        unit = math.sin(2.0 * math.pi * phase)
    else:
        raise ValueError(f"unknown waveform {waveform!r}")
    return vrange.azimuth_center + ROCK_AMPLITUDE * unit


@dataclass(frozen=True)
class StimulusState:
    object_id: str
    azimuth: float
    elevation: float
    time_step: int


def stimulus_state(object_id: str, time_step: int, vrange: ViewpointRange,
                   period_steps: int, waveform: str = "triangle") -> StimulusState:
    az = stimulus_azimuth(time_step, vrange, period_steps, waveform)
    return StimulusState(object_id, az, vrange.elevation, time_step)


# ---------------------------------------------------------------------------
# Trials

WALL_X0 = "x0"
WALL_XL = "xL"
RECOGNITION_PER_VIEWPOINT = 40
N_VIEWPOINTS = 12


@dataclass(frozen=True)
class TrialSpec:
    trial_id: int
    kind: str  # "imprinting" | "recognition"
    viewpoint_index: int | None
    imprint_wall: str
    duration: int = 1000


@dataclass
class TrialRecord:
    """Metadata of one test trial plus its per-step (x, y, heading) trace."""

    trial_id: int
    kind: str
    viewpoint_index: int | None
    imprint_wall: str
    trace: np.ndarray  # (steps, 3)


def make_trial_schedule(condition: RearingCondition, n_imprinting: int = 40, seed: int = 0,
                        duration: int = 1000) -> list[TrialSpec]:
    """Imprinting block followed by the 480 recognition trials, each block shuffled.

    Every recognition trial shows the imprinted object on ``imprint_wall``;
    sides are balanced within each viewpoint.  Trial ids follow schedule order.
    """
    if n_imprinting < 0 or n_imprinting % 2:
        raise ValueError("n_imprinting must be a non-negative even number")
    rng = np.random.default_rng(seed)
    imprinting = [(None, WALL_X0)] * (n_imprinting // 2) + [(None, WALL_XL)] * (n_imprinting // 2)
    recognition = []
    half = RECOGNITION_PER_VIEWPOINT // 2
    for vr in viewpoint_ranges(condition):
        recognition += [(vr.index, WALL_X0)] * half + [(vr.index, WALL_XL)] * half
    order_imp = rng.permutation(len(imprinting))
    order_rec = rng.permutation(len(recognition))
    trials = []
    for i in order_imp:
        vp, wall = imprinting[i]
        trials.append(TrialSpec(len(trials), "imprinting", None, wall, duration))
    for i in order_rec:
        vp, wall = recognition[i]
        trials.append(TrialSpec(len(trials), "recognition", vp, wall, duration))
    return trials
